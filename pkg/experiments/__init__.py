"""Experiment harness: regret sweeps, baselines, privacy sweeps and artifacts."""
