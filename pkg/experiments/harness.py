"""Experiment harness: instance drawing, regret bookkeeping and the sweeps.

Every cell draws its graph, comparator, activations and losses from named
child streams of the master seed, records the stream once, and replays the
same recording to every algorithm it compares.
"""

from __future__ import annotations

import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Sequence

import numpy as np
from scipy.stats import spearmanr

from experiments.baselines import run_iftrl, run_stftrl
from experiments.charts import render_band_lines, render_error_lines
from experiments.configuration import (
    ActivationModel,
    Algorithm,
    ExperimentConfig,
    LossKind,
)
from mtcool.coolcn_engine import (
    ActivationSchedule,
    NetworkState,
    PackedKTNetwork,
    RoundRobinSchedule,
    StochasticSchedule,
    Trajectory,
    WeightMatrix,
    beta_scales,
    make_weights,
    run,
    two_phase_unknown_q,
)
from mtcool.domain import (
    ConfigurationError,
    DomainError,
    LearnerKind,
    UnsupportedLossError,
    WeightScheme,
)
from mtcool.graph_core import (
    GraphTopology,
    TaskMatrix,
    VarianceProfile,
    erdos_renyi,
    graph_stats,
    variance_profile,
)
from mtcool.loss_stream import (
    LinearLossSource,
    LossSource,
    QuadraticLossSource,
    RecordedStream,
    StreamTap,
    best_in_hindsight,
    record_stream,
    sample_task_matrix,
    write_stream_csv,
)
from mtcool.privacy_layer import DopeNetworkState, budget
import config as defaults
from utils import derived_seed, mean_and_se, stream_rng, write_csv, write_json

logger = logging.getLogger(__name__)

STREAM_KINDS = ("graph", "tasks", "activations", "losses")
DP_ALGORITHMS = (Algorithm.DOPE, Algorithm.I_FTRL, Algorithm.MT_COOL_HEDGE)


@dataclass(eq=False)
class RegretLedger:
    """Per-step multitask regret terms of one (algorithm, seed) run."""

    algorithm: str
    seed: int
    per_step: np.ndarray
    actives: np.ndarray
    n_agents: int
    sigma_bar: float = math.nan
    sigma_bar_hindsight: float = math.nan
    max_gradient_norm: float = 0.0

    @property
    def cumulative(self) -> np.ndarray:
        return np.cumsum(self.per_step)

    @property
    def final(self) -> float:
        return float(self.cumulative[-1]) if len(self.per_step) else 0.0

    def per_agent_cumulative(self) -> np.ndarray:
        """T x N running regret of each agent; row t sums to cumulative[t]."""
        terms = np.zeros((len(self.per_step), self.n_agents))
        terms[np.arange(len(self.per_step)), self.actives] = self.per_step
        return np.cumsum(terms, axis=0)

    def per_agent_final(self) -> np.ndarray:
        return np.bincount(self.actives, weights=self.per_step, minlength=self.n_agents)


def multitask_regret(
    trajectory: Trajectory,
    comparator: TaskMatrix,
    stream: RecordedStream,
    algorithm: str = "",
    seed: int = 0,
) -> RegretLedger:
    """Per-step l_t(x_t) - l_t(U_{i_t}) for a trajectory recorded on `stream`."""
    if comparator.d != trajectory.predictions.shape[1]:
        raise DomainError(
            f"comparator has d={comparator.d}, trajectory has d={trajectory.predictions.shape[1]}")
    if comparator.n < stream.n_agents:
        raise DomainError(f"comparator has {comparator.n} rows for {stream.n_agents} agents")
    horizon = len(trajectory)
    comparator_values = np.array([
        stream.loss_at(t, int(trajectory.actives[t])).value(comparator.rows[trajectory.actives[t]])
        for t in range(horizon)
    ])
    return RegretLedger(
        algorithm=algorithm,
        seed=seed,
        per_step=trajectory.loss_values - comparator_values,
        actives=trajectory.actives.copy(),
        n_agents=comparator.n,
        max_gradient_norm=trajectory.max_gradient_norm,
    )


def regret_bounds(
    graph: GraphTopology,
    weights: WeightMatrix,
    profile: VarianceProfile,
    activation_counts: Sequence[int],
    q: Sequence[float] | None = None,
) -> dict[str, float]:
    """Reference rates without log factors, reported next to measured regret."""
    counts = np.asarray(activation_counts, dtype=float)
    w = weights.values
    independent = float(np.sum(2 * np.sqrt(counts)))
    adversarial = 0.0
    stochastic = 0.0
    total = float(counts.sum())
    for j, group in enumerate(graph.neighborhoods):
        members = list(group)
        spread = math.sqrt(1 + profile.sigma_local[j] * (len(members) - 1))
        adversarial += float(w[members, j].max()) * spread * math.sqrt(float(counts[members].sum()))
        if q is not None:
            local_q = np.asarray(q, dtype=float)[members]
            stochastic += math.sqrt(float(np.sum(local_q * w[members, j] ** 2))) * spread * math.sqrt(total)
    bounds = {"independent": independent, "adversarial": adversarial}
    if q is not None:
        bounds["stochastic"] = stochastic
    return bounds


@dataclass(eq=False)
class Instance:
    """One drawn (graph, comparator, stream) triple and the streams it consumed."""

    graph: GraphTopology
    tasks: TaskMatrix
    stream: RecordedStream
    lam: float
    names: dict[str, str]

    @property
    def profile(self) -> VarianceProfile:
        return variance_profile(self.tasks, self.graph)

    def hindsight(self) -> TaskMatrix:
        return best_in_hindsight(self.stream.group_by_agent(), self.tasks.d)


def stream_names(tag: str) -> dict[str, str]:
    return {kind: f"{kind}/{tag}" for kind in STREAM_KINDS}


def make_schedule(config: ExperimentConfig, rng: np.random.Generator) -> ActivationSchedule:
    if config.activation is ActivationModel.ROUND_ROBIN:
        return RoundRobinSchedule(range(config.n), config.n)
    return StochasticSchedule(config.activation_q, rng)


def make_loss_source(config: ExperimentConfig, tasks: TaskMatrix, rng: np.random.Generator) -> LossSource:
    if config.loss is LossKind.LINEAR:
        return LinearLossSource(tasks, config.loss_noise_std, rng)
    return QuadraticLossSource(tasks, config.loss_noise_std, rng)


def loss_lipschitz(config: ExperimentConfig) -> float:
    """Gradient bound handed to the learners.

    Linear losses have bound 1. Quadratic losses use 2 + 3 sigma sqrt(d): the
    loss noise is added to every one of the d coordinates, so its three-sigma
    norm grows with sqrt(d).
    """
    if config.loss is LossKind.LINEAR:
        return 1.0
    return 2.0 + 3.0 * config.loss_noise_std * math.sqrt(config.d)


def build_instance(
    config: ExperimentConfig,
    graph: GraphTopology,
    tasks: TaskMatrix,
    lam: float,
    names: dict[str, str],
) -> Instance:
    schedule = make_schedule(config, stream_rng(config.master_seed, names["activations"]))
    source = make_loss_source(config, tasks, stream_rng(config.master_seed, names["losses"]))
    stream = record_stream(schedule, source, config.horizon)
    return Instance(graph, tasks, stream, lam, names)


def draw_instance(config: ExperimentConfig, lam: float, tag: str) -> Instance:
    names = stream_names(tag)
    graph = erdos_renyi(config.n, config.p, derived_seed(config.master_seed, names["graph"]))
    tasks = sample_task_matrix(graph, lam, config.d, stream_rng(config.master_seed, names["tasks"]))
    return build_instance(config, graph, tasks, lam, names)


def network_weights(config: ExperimentConfig, graph: GraphTopology) -> WeightMatrix:
    if config.weight_scheme is WeightScheme.STOCHASTIC_CONDITIONAL:
        return make_weights(graph, config.weight_scheme, q=config.activation_q)
    if config.weight_scheme is WeightScheme.DELEGATION:
        stats = graph_stats(graph, exact_limit=defaults.EXACT_GRAPH_LIMIT)
        return make_weights(graph, config.weight_scheme, dom_set=stats.dominating_set)
    return make_weights(graph, config.weight_scheme)


def clique_scales(config: ExperimentConfig, graph: GraphTopology, weights: WeightMatrix) -> np.ndarray:
    if config.activation is ActivationModel.STOCHASTIC:
        return beta_scales(graph, weights, q=config.activation_q)
    return beta_scales(graph, weights)


def run_algorithm(
    config: ExperimentConfig,
    algorithm: Algorithm | str,
    instance: Instance,
    epsilon: float = math.inf,
    noise_seed: int | None = None,
    keep_records: bool = False,
) -> Trajectory:
    """Run one algorithm on the instance's recorded stream.

    The digest of the losses the run actually consumed is stored in
    trajectory.extras["consumed_digest"].
    """
    tap = StreamTap(instance.stream)
    trajectory = _dispatch(
        config, Algorithm(algorithm), instance, tap, epsilon, noise_seed, keep_records)
    trajectory.extras["consumed_digest"] = tap.consumed().digest()
    return trajectory


def _dispatch(
    config: ExperimentConfig,
    algorithm: Algorithm,
    instance: Instance,
    stream: StreamTap,
    epsilon: float,
    noise_seed: int | None,
    keep_records: bool,
) -> Trajectory:
    graph = instance.graph
    lipschitz = loss_lipschitz(config)
    if algorithm is Algorithm.I_FTRL:
        return run_iftrl(graph, stream, stream, config.horizon, config.d, lipschitz, keep_records)
    if algorithm is Algorithm.ST_FTRL:
        return run_stftrl(graph, stream, stream, config.horizon, config.d, lipschitz, keep_records)

    weights = network_weights(config, graph)
    scales = clique_scales(config, graph, weights)
    if algorithm is Algorithm.DOPE:
        if not instance.stream.is_linear:
            raise UnsupportedLossError("dope runs are restricted to linear losses")
        privacy = budget(epsilon, graph.n_max, config.d, config.horizon)
        seed = noise_seed if noise_seed is not None else config.master_seed
        net = DopeNetworkState(graph, weights, config.d, privacy, seed, scales)
        trajectory = run(net, stream, stream, config.horizon, keep_records)
        trajectory.extras["privacy"] = net.manifest()
        return trajectory

    kind = LearnerKind.KT if algorithm is Algorithm.MT_COOL else LearnerKind.HEDGE
    if config.q_min_lower_bound is None and kind is LearnerKind.KT:
        packed = PackedKTNetwork(graph, weights, config.d, scales, lipschitz)
        return run(packed, stream, stream, config.horizon, keep_records)
    net = NetworkState.build(graph, weights, config.d, kind, scales, lipschitz)
    if config.q_min_lower_bound is not None:
        if config.activation is not ActivationModel.STOCHASTIC:
            raise ConfigurationError("q_min_lower_bound needs stochastic activations")
        # Same stream name, so the schedule replays the recorded activations.
        schedule = StochasticSchedule(
            config.activation_q, stream_rng(config.master_seed, instance.names["activations"]))
        return two_phase_unknown_q(
            net, schedule, stream, config.q_min_lower_bound, config.horizon,
            config.tau_constant, keep_records)
    return run(net, stream, stream, config.horizon, keep_records)


def _run_jobs(config: ExperimentConfig, jobs: Sequence[tuple], job: Callable) -> list[Any]:
    """Run job(config, *args) for every args tuple; results keep the job order."""
    if config.workers <= 1:
        return [job(config, *args) for args in jobs]
    results = {}
    with ProcessPoolExecutor(max_workers=config.workers) as executor:
        futures = {executor.submit(job, config, *args): args for args in jobs}
        for future in as_completed(futures):
            results[futures[future]] = future.result()
    return [results[args] for args in jobs]


def _timed_ledger(config, algorithm, instance, comparator, seed, **kwargs):
    start = time.perf_counter()
    trajectory = run_algorithm(config, algorithm, instance, **kwargs)
    ledger = multitask_regret(trajectory, comparator, instance.stream, Algorithm(algorithm).value, seed)
    logger.info(
        "lambda=%g seed=%d %s: final regret %.4f, max gradient norm %.4g (%.1fs)",
        instance.lam, seed, ledger.algorithm, ledger.final, ledger.max_gradient_norm,
        time.perf_counter() - start)
    return trajectory, ledger


def run_cell(config: ExperimentConfig, lam_index: int, seed: int) -> list[dict[str, Any]]:
    """One (lambda, seed) cell of the sweep: a fresh instance, every algorithm."""
    lam = config.lambdas[lam_index]
    instance = draw_instance(config, lam, f"{lam_index}/{seed}")
    comparator = instance.hindsight()
    profile = instance.profile
    sigma_bar = profile.sigma_bar_std
    sigma_hindsight = variance_profile(comparator, instance.graph).sigma_bar_std
    digest = instance.stream.digest()
    counts = np.bincount(instance.stream.actives, minlength=config.n)
    q = config.activation_q if config.activation is ActivationModel.STOCHASTIC else None
    bounds = regret_bounds(
        instance.graph, network_weights(config, instance.graph), profile, counts, q)
    rows = []
    for algorithm in config.algorithms:
        trajectory, ledger = _timed_ledger(config, algorithm, instance, comparator, seed)
        rows.append({
            "lambda": lam,
            "lambda_index": lam_index,
            "sigma_bar": sigma_bar,
            "sigma_bar_hindsight": sigma_hindsight,
            "algo": algorithm.value,
            "seed": seed,
            "final_regret": ledger.final,
            "max_gradient_norm": trajectory.max_gradient_norm,
            "stream_digest": trajectory.extras["consumed_digest"],
            "bounds": bounds,
        })
    if any(row["stream_digest"] != digest for row in rows):
        raise DomainError(
            f"cell lambda={lam} seed={seed}: an algorithm consumed a different loss stream")
    return rows


@dataclass
class RunResult:
    """Rows, summary and written artifacts of one harness command."""

    rows: list[dict[str, Any]]
    summary: dict[str, Any]
    streams: list[str] = field(default_factory=list)
    outputs: list[Path] = field(default_factory=list)


def _json_float(value: float) -> float | None:
    return None if value is None or not math.isfinite(value) else float(value)


def summarize_sweep(rows: Sequence[dict[str, Any]], config: ExperimentConfig) -> dict[str, Any]:
    algorithms = [a.value for a in config.algorithms]
    cells = []
    means: dict[str, list[float]] = {name: [] for name in algorithms}
    sigma_means = []
    best = []
    for lam_index, lam in enumerate(config.lambdas):
        lam_rows = [row for row in rows if row["lambda_index"] == lam_index]
        sigma_mean, _ = mean_and_se([row["sigma_bar"] for row in lam_rows])
        sigma_means.append(sigma_mean)
        lam_means = {}
        for name in algorithms:
            finals = [row["final_regret"] for row in lam_rows if row["algo"] == name]
            mean, se = mean_and_se(finals)
            lam_means[name] = mean
            means[name].append(mean)
            cells.append({
                "lambda": lam,
                "algo": name,
                "mean_sigma_bar": sigma_mean,
                "mean_final_regret": mean,
                "se_final_regret": se,
                "mean_bounds": {
                    key: mean_and_se([row["bounds"][key] for row in lam_rows if row["algo"] == name])[0]
                    for key in lam_rows[0]["bounds"]
                },
            })
        best.append({"lambda": lam, "algo": min(lam_means, key=lam_means.get)})

    spearman = {}
    for name in algorithms:
        if len(config.lambdas) < 2:
            spearman[name] = None
            continue
        rho, _ = spearmanr(sigma_means, means[name])
        spearman[name] = _json_float(float(rho))
    summary: dict[str, Any] = {
        "cells": cells,
        "spearman_sigma_vs_regret": spearman,
        "best_algorithm_per_lambda": best,
        "max_gradient_norm": max(row["max_gradient_norm"] for row in rows),
    }
    if Algorithm.I_FTRL.value in means:
        values = np.asarray(means[Algorithm.I_FTRL.value])
        summary["i_ftrl_relative_spread"] = _json_float(
            float((values.max() - values.min()) / abs(values.mean())) if values.mean() else math.nan)
    return summary


def run_figure2(config: ExperimentConfig, output_dir: Path | None = None) -> RunResult:
    """The lambda sweep: final regret against the average local task deviation."""
    jobs = [(li, seed) for li in range(len(config.lambdas)) for seed in range(config.seeds)]
    logger.info("sweep: %d cells x %d algorithms, horizon %d",
                len(jobs), len(config.algorithms), config.horizon)
    rows = [row for cell in _run_jobs(config, jobs, run_cell) for row in cell]
    summary = summarize_sweep(rows, config)
    summary["stream_digests"] = sorted({row["stream_digest"] for row in rows})
    streams = [name for li, seed in jobs for name in stream_names(f"{li}/{seed}").values()]
    outputs = []
    if output_dir is not None:
        output_dir = Path(output_dir)
        outputs.append(write_csv(
            output_dir / "figure2.csv",
            ["lambda", "sigma_bar", "algo", "seed", "final_regret"],
            ([row["lambda"], row["sigma_bar"], row["algo"], row["seed"], row["final_regret"]]
             for row in rows)))
        outputs.append(write_json(output_dir / "figure2_summary.json", summary))
        series = {}
        for name in (a.value for a in config.algorithms):
            cells = sorted((c for c in summary["cells"] if c["algo"] == name),
                           key=lambda c: c["mean_sigma_bar"])
            series[name] = (
                [c["mean_sigma_bar"] for c in cells],
                [c["mean_final_regret"] for c in cells],
                [c["se_final_regret"] for c in cells],
            )
        outputs.append(render_error_lines(
            output_dir / "figure2.svg", series,
            "average local task deviation", "final multitask regret",
            f"Multitask regret at T={config.horizon}"))
    return RunResult(rows, summary, streams, outputs)


def checkpoint_times(horizon: int, count: int) -> np.ndarray:
    """Evenly spaced 1-based times ending at the horizon."""
    return np.unique(np.linspace(1, horizon, num=min(count, horizon)).round().astype(np.int64))


def select_operating_point(
    config: ExperimentConfig, graph: GraphTopology, seed: int,
) -> tuple[int, TaskMatrix, float]:
    """Candidate lambda whose comparator deviation is nearest the target."""
    settings = config.figure1
    best = None
    for k, lam in enumerate(settings.lambda_candidates):
        tasks = sample_task_matrix(
            graph, lam, config.d, stream_rng(config.master_seed, f"tasks/fig1/{seed}/{k}"))
        gap = abs(variance_profile(tasks, graph).sigma_bar_std - settings.sigma_target)
        if best is None or gap < best[0]:
            best = (gap, k, tasks)
    _, k, tasks = best
    return k, tasks, settings.lambda_candidates[k]


def run_curve_cell(config: ExperimentConfig, seed: int) -> dict[str, Any]:
    names = stream_names(f"fig1/{seed}")
    graph = erdos_renyi(config.n, config.p, derived_seed(config.master_seed, names["graph"]))
    k, tasks, lam = select_operating_point(config, graph, seed)
    names["tasks"] = f"tasks/fig1/{seed}/{k}"
    instance = build_instance(config, graph, tasks, lam, names)
    comparator = instance.hindsight()
    times = checkpoint_times(config.horizon, config.figure1.checkpoints)
    curves = {}
    finals = {}
    for algorithm in config.algorithms:
        _, ledger = _timed_ledger(config, algorithm, instance, comparator, seed)
        curves[algorithm.value] = ledger.cumulative[times - 1].tolist()
        finals[algorithm.value] = ledger.final
    return {
        "seed": seed,
        "lambda": lam,
        "sigma_bar": instance.profile.sigma_bar_std,
        "times": times.tolist(),
        "curves": curves,
        "finals": finals,
        "streams": sorted(names.values()),
    }


def run_figure1(config: ExperimentConfig, output_dir: Path | None = None) -> RunResult:
    """Regret against time at the target task deviation, averaged over seeds."""
    cells = _run_jobs(config, [(seed,) for seed in range(config.seeds)], run_curve_cell)
    times = cells[0]["times"]
    algorithms = [a.value for a in config.algorithms]
    rows = []
    series = {}
    for name in algorithms:
        stacked = np.array([cell["curves"][name] for cell in cells])
        stats = [mean_and_se(stacked[:, k]) for k in range(len(times))]
        series[name] = (times, [m for m, _ in stats], [s for _, s in stats])
    for k, t in enumerate(times):
        for name in algorithms:
            rows.append({"t": t, "algo": name,
                         "mean_regret": series[name][1][k], "se_regret": series[name][2][k]})
    mean_finals = {name: mean_and_se([cell["finals"][name] for cell in cells])[0]
                   for name in algorithms}
    summary = {
        "sigma_target": config.figure1.sigma_target,
        "seeds": [{"seed": c["seed"], "lambda": c["lambda"], "sigma_bar": c["sigma_bar"],
                   "finals": c["finals"]} for c in cells],
        "mean_final_regret": mean_finals,
        "best_algorithm": min(mean_finals, key=mean_finals.get),
    }
    streams = [name for cell in cells for name in cell["streams"]]
    outputs = []
    if output_dir is not None:
        output_dir = Path(output_dir)
        outputs.append(write_csv(
            output_dir / "figure1.csv", ["t", "algo", "mean_regret", "se_regret"],
            ([row["t"], row["algo"], row["mean_regret"], row["se_regret"]] for row in rows)))
        outputs.append(write_json(output_dir / "figure1_summary.json", summary))
        outputs.append(render_band_lines(
            output_dir / "figure1.svg", series, "t", "multitask regret",
            f"Regret over time, target deviation {config.figure1.sigma_target}"))
    return RunResult(rows, summary, streams, outputs)


def epsilon_grid(config: ExperimentConfig) -> list[float]:
    """Configured finite epsilons in ascending order, then infinity."""
    return sorted({eps for eps in config.epsilons if math.isfinite(eps)}) + [math.inf]


def run_private_cell(config: ExperimentConfig, epsilon: float, noise_index: int) -> dict[str, Any]:
    instance = draw_instance(config, config.lambdas[0], "dp")
    comparator = instance.hindsight()
    noise_seed = derived_seed(config.master_seed, f"noise/{noise_index}")
    trajectory, ledger = _timed_ledger(
        config, Algorithm.DOPE, instance, comparator, noise_index,
        epsilon=epsilon, noise_seed=noise_seed)
    return {"final_regret": ledger.final, "privacy": trajectory.extras["privacy"]}


def _epsilon_label(epsilon: float) -> float | str:
    return epsilon if math.isfinite(epsilon) else "inf"


def nonincreasing_within(means: Sequence[float], errors: Sequence[float], slack: float = 2.0) -> bool:
    """True when each mean is at most the previous one plus slack combined SEs."""
    return all(
        means[k + 1] <= means[k] + slack * math.hypot(errors[k], errors[k + 1])
        for k in range(len(means) - 1)
    )


def run_dp_sweep(config: ExperimentConfig, output_dir: Path | None = None) -> RunResult:
    """Private regret over the epsilon grid on one fixed linear stream."""
    if config.loss is not LossKind.LINEAR:
        raise ConfigurationError("dp sweeps are restricted to linear losses; set loss to 'linear'")
    grid = epsilon_grid(config)
    jobs = [(eps, k) for eps in grid
            for k in (range(config.noise_seeds) if math.isfinite(eps) else (0,))]
    private = _run_jobs(config, jobs, run_private_cell)

    instance = draw_instance(config, config.lambdas[0], "dp")
    comparator = instance.hindsight()
    reference = {}
    for algorithm in DP_ALGORITHMS[1:]:
        _, ledger = _timed_ledger(config, algorithm, instance, comparator, 0)
        reference[algorithm.value] = ledger.final

    rows = []
    dope_means = []
    dope_errors = []
    manifests = []
    for eps in grid:
        results = [res for (job_eps, _), res in zip(jobs, private) if job_eps == eps]
        mean, se = mean_and_se([res["final_regret"] for res in results])
        dope_means.append(mean)
        dope_errors.append(se)
        manifests.append(results[0]["privacy"])
        rows.append({"epsilon": eps, "algo": Algorithm.DOPE.value,
                     "mean_final_regret": mean, "se_final_regret": se})
        for name, final in reference.items():
            rows.append({"epsilon": eps, "algo": name,
                         "mean_final_regret": final, "se_final_regret": 0.0})

    iftrl = reference[Algorithm.I_FTRL.value]
    beaten = [eps for eps, mean in zip(grid, dope_means) if math.isfinite(eps) and iftrl < mean]
    summary = {
        "epsilons": [_epsilon_label(eps) for eps in grid],
        "dope_mean_final_regret": dope_means,
        "dope_se_final_regret": dope_errors,
        "reference_final_regret": reference,
        "crossover": bool(beaten),
        "crossover_epsilon": max(beaten) if beaten else None,
        "nonincreasing_in_epsilon": nonincreasing_within(dope_means, dope_errors),
        "privacy": manifests,
        "stream_digest": instance.stream.digest(),
    }
    if summary["crossover"]:
        logger.info("i-FTRL beats dope up to epsilon=%g", summary["crossover_epsilon"])
    streams = list(instance.names.values()) + [f"noise/{k}" for k in range(config.noise_seeds)]
    outputs = []
    if output_dir is not None:
        output_dir = Path(output_dir)
        outputs.append(write_csv(
            output_dir / "dp_sweep.csv",
            ["epsilon", "algo", "mean_final_regret", "se_final_regret"],
            ([_epsilon_label(row["epsilon"]), row["algo"], row["mean_final_regret"],
              row["se_final_regret"]] for row in rows)))
        outputs.append(write_json(output_dir / "dp_sweep_summary.json", summary))
    return RunResult(rows, summary, streams, outputs)


def run_simulation(config: ExperimentConfig, output_dir: Path | None = None) -> RunResult:
    """One run of config.algorithm with its trajectory written out."""
    algorithm = config.algorithm
    instance = draw_instance(config, config.lambdas[0], "sim")
    comparator = instance.hindsight()
    kwargs = {}
    streams = list(instance.names.values())
    if algorithm is Algorithm.DOPE:
        finite = [eps for eps in config.epsilons if math.isfinite(eps)]
        kwargs = {"epsilon": finite[0] if finite else math.inf,
                  "noise_seed": derived_seed(config.master_seed, "noise/0")}
        streams.append("noise/0")
    trajectory, ledger = _timed_ledger(config, algorithm, instance, comparator, 0, **kwargs)
    profile = instance.profile
    ledger.sigma_bar = profile.sigma_bar_std
    ledger.sigma_bar_hindsight = variance_profile(comparator, instance.graph).sigma_bar_std

    cumulative = ledger.cumulative
    header = ["t", "active", "loss", "cum_multitask_regret"]
    per_agent = None
    if config.per_agent_columns:
        per_agent = ledger.per_agent_cumulative()
        header += [f"regret_agent_{i}" for i in range(config.n)]
    rows = []
    for t in range(len(cumulative)):
        row = [t + 1, int(trajectory.actives[t]), float(trajectory.loss_values[t]),
               float(cumulative[t])]
        if per_agent is not None:
            row += [float(v) for v in per_agent[t]]
        rows.append(row)

    counts = np.bincount(instance.stream.actives, minlength=config.n)
    q = config.activation_q if config.activation is ActivationModel.STOCHASTIC else None
    summary: dict[str, Any] = {
        "algorithm": algorithm.value,
        "horizon": config.horizon,
        "final_regret": ledger.final,
        "per_agent_final_regret": ledger.per_agent_final().tolist(),
        "sigma_bar": ledger.sigma_bar,
        "sigma_bar_hindsight": ledger.sigma_bar_hindsight,
        "max_gradient_norm": ledger.max_gradient_norm,
        "lipschitz_bound": instance.stream.lipschitz_bound(),
        "stream_digest": instance.stream.digest(),
        "regret_bounds": regret_bounds(
            instance.graph, network_weights(config, instance.graph), profile, counts, q),
    }
    for key in ("tau", "privacy"):
        if key in trajectory.extras:
            summary[key] = trajectory.extras[key]

    outputs = []
    if output_dir is not None:
        output_dir = Path(output_dir)
        outputs.append(write_csv(output_dir / "trajectory.csv", header, rows))
        outputs.append(write_json(output_dir / "summary.json", summary))
        if config.loss is LossKind.QUADRATIC:
            outputs.append(write_stream_csv(instance.stream, output_dir / "stream.csv"))
    return RunResult(rows, summary, streams, outputs)
