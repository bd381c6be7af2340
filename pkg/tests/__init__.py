"""Multitask learning test suite."""
