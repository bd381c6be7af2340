"""The decentralized protocol: every agent runs a learner on its neighborhood.

At each global step the active agent fetches its row from the clique learner
of every neighbor, predicts their weighted average, and sends each neighbor
its weighted share of the observed gradient. Communication never leaves the
edges incident to the active agent.
"""

from __future__ import annotations

import logging
import math
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Any, Callable, Iterator, Mapping, Sequence

import numpy as np

from mtcool.clique_learner import (
    CliqueLearner,
    HedgeCliqueLearner,
    KTLearnerBank,
    make_learner,
    restore_snapshot,
)
from mtcool.domain import (
    ConfigurationError,
    LearnerKind,
    LearnerStateError,
    ProjectionMode,
    ScheduleExhaustedError,
    WeightMatrixError,
    WeightScheme,
)
from mtcool.graph_core import GraphTopology, TaskMatrix, dominating_delegation
from mtcool.loss_stream import LossSource

logger = logging.getLogger(__name__)

ROW_SUM_TOLERANCE = 1e-12
DEFAULT_WARMUP_CONSTANT = 12.0
_STOCHASTIC_CHUNK = 4096


@dataclass(frozen=True, eq=False)
class WeightMatrix:
    values: np.ndarray
    scheme: WeightScheme
    graph: GraphTopology

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        n = self.graph.n
        if values.shape != (n, n):
            raise WeightMatrixError(f"weights must be {n} x {n}, got {values.shape}")
        if not np.all(np.isfinite(values)):
            raise WeightMatrixError("weights must be finite")
        if np.any(values < 0):
            raise WeightMatrixError("weights must be nonnegative")
        for i, group in enumerate(self.graph.neighborhoods):
            outside = np.delete(values[i], list(group))
            if np.any(outside != 0):
                raise WeightMatrixError(f"row {i} puts weight outside its neighborhood")
            total = float(values[i, list(group)].sum())
            if not abs(total - 1.0) <= ROW_SUM_TOLERANCE:
                raise WeightMatrixError(f"row {i} sums to {total!r}, not 1")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "scheme", WeightScheme(self.scheme))


def make_weights(
    g: GraphTopology,
    scheme: WeightScheme | str,
    q: Sequence[float] | None = None,
    dom_set: Sequence[int] | None = None,
    custom: np.ndarray | None = None,
) -> WeightMatrix:
    scheme = WeightScheme(scheme)
    values = np.zeros((g.n, g.n))
    if scheme is WeightScheme.UNIFORM:
        for i, group in enumerate(g.neighborhoods):
            values[i, list(group)] = 1.0 / len(group)
    elif scheme is WeightScheme.STOCHASTIC_CONDITIONAL:
        if q is None:
            raise ConfigurationError("stochastic conditional weights need q")
        q = _probability_vector(q, g.n)
        for i, group in enumerate(g.neighborhoods):
            local_mass = q[list(group)].sum()
            if local_mass <= 0:
                raise ConfigurationError(f"neighborhood of agent {i} has zero activation mass")
            values[i, list(group)] = q[list(group)] / local_mass
    elif scheme is WeightScheme.DELEGATION:
        if dom_set is None:
            raise ConfigurationError("delegation weights need a dominating set")
        for i, delegate in enumerate(dominating_delegation(g, dom_set)):
            values[i, delegate] = 1.0
    else:
        if custom is None:
            raise ConfigurationError("custom weights need a matrix")
        values = np.asarray(custom, dtype=float)
    return WeightMatrix(values, scheme, g)


def _probability_vector(q: Sequence[float], n: int) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    if (q.shape != (n,) or not np.all(np.isfinite(q)) or np.any(q < 0)
            or not abs(float(q.sum()) - 1.0) <= ROW_SUM_TOLERANCE):
        raise ConfigurationError(f"q must be a probability vector over {n} agents")
    return q


class ActivationSchedule(ABC):
    n_agents: int

    @abstractmethod
    def agent_at(self, t: int) -> int:
        """The active agent at 0-indexed global step t."""

    def activations(self, horizon: int) -> np.ndarray:
        return np.array([self.agent_at(t) for t in range(horizon)], dtype=np.int64)


class AdversarialSchedule(ActivationSchedule):
    """A fixed, finite activation sequence."""

    def __init__(self, sequence: Sequence[int], n_agents: int):
        sequence = np.asarray(sequence, dtype=np.int64)
        if sequence.size and (sequence.min() < 0 or sequence.max() >= n_agents):
            raise ConfigurationError(f"activation outside 0..{n_agents - 1}")
        self.sequence = sequence
        self.n_agents = n_agents

    def agent_at(self, t: int) -> int:
        if t >= len(self.sequence):
            raise ScheduleExhaustedError(
                f"adversarial schedule of length {len(self.sequence)} has no step {t}")
        return int(self.sequence[t])


class RoundRobinSchedule(ActivationSchedule):
    def __init__(self, order: Sequence[int], n_agents: int | None = None):
        if not order:
            raise ConfigurationError("round-robin order is empty")
        self.order = tuple(int(i) for i in order)
        self.n_agents = n_agents if n_agents is not None else max(self.order) + 1
        if min(self.order) < 0 or max(self.order) >= self.n_agents:
            raise ConfigurationError(f"activation outside 0..{self.n_agents - 1}")

    def agent_at(self, t: int) -> int:
        return self.order[t % len(self.order)]


class StochasticSchedule(ActivationSchedule):
    """i.i.d. activations from q, drawn lazily in fixed-size chunks."""

    def __init__(self, q: Sequence[float], seed: int | np.random.Generator):
        self.q = _probability_vector(q, len(q))
        self.n_agents = len(self.q)
        self._rng = np.random.default_rng(seed)
        self._drawn = np.empty(0, dtype=np.int64)

    @classmethod
    def uniform(cls, n_agents: int, seed: int | np.random.Generator) -> StochasticSchedule:
        return cls(np.full(n_agents, 1.0 / n_agents), seed)

    def agent_at(self, t: int) -> int:
        while t >= len(self._drawn):
            chunk = self._rng.choice(self.n_agents, size=_STOCHASTIC_CHUNK, p=self.q)
            self._drawn = np.concatenate([self._drawn, chunk])
        return int(self._drawn[t])


def beta_scales(
    g: GraphTopology, weights: WeightMatrix, q: Sequence[float] | None = None,
) -> np.ndarray:
    """Per-clique learning-rate multipliers.

    Without q (adversarial activations) the scale of clique j is the largest
    weight any member puts on j; with q it is sqrt(sum_i (q_i/Q_j) w_ij^2).
    """
    scales = np.empty(g.n)
    w = weights.values
    for j, group in enumerate(g.neighborhoods):
        members = list(group)
        if q is None:
            scales[j] = w[members, j].max()
        else:
            local_q = np.asarray(q, dtype=float)[members]
            scales[j] = math.sqrt(float(np.sum(local_q / local_q.sum() * w[members, j] ** 2)))
    return scales


@dataclass(frozen=True, eq=False)
class StepRecord:
    t: int
    active: int
    fetched: tuple[tuple[int, np.ndarray], ...]
    prediction: np.ndarray
    loss_value: float
    gradient: np.ndarray
    sent: tuple[tuple[int, np.ndarray], ...]


@dataclass(eq=False)
class Trajectory:
    """Per-step arrays of one run; full message records only when requested."""

    actives: np.ndarray
    predictions: np.ndarray
    loss_values: np.ndarray
    gradients: np.ndarray
    records: list[StepRecord] | None = None
    max_gradient_norm: float = 0.0
    extras: dict[str, Any] = field(default_factory=dict)

    @classmethod
    def allocate(cls, horizon: int, d: int, keep_records: bool) -> Trajectory:
        return cls(
            actives=np.zeros(horizon, dtype=np.int64),
            predictions=np.zeros((horizon, d)),
            loss_values=np.zeros(horizon),
            gradients=np.zeros((horizon, d)),
            records=[] if keep_records else None,
        )

    def __len__(self) -> int:
        return len(self.actives)

    def __iter__(self) -> Iterator[StepRecord]:
        if self.records is None:
            raise LearnerStateError("trajectory was recorded without message records")
        return iter(self.records)

    def store(self, t: int, record: StepRecord) -> None:
        self.actives[t] = record.active
        self.predictions[t] = record.prediction
        self.loss_values[t] = record.loss_value
        self.gradients[t] = record.gradient
        if self.records is not None:
            self.records.append(record)


class WarmupClique:
    """Predicts zero for tau local steps, then runs a learner tuned on the
    activation frequencies observed during the warm-up."""

    def __init__(
        self,
        tau: int,
        member_weights: np.ndarray,
        d: int,
        learner_factory: Callable[[float], CliqueLearner],
    ):
        self.tau = tau
        self.n = len(member_weights)
        self.d = d
        self.member_weights = np.asarray(member_weights, dtype=float)
        self.learner_factory = learner_factory
        self.counts = np.zeros(self.n, dtype=np.int64)
        self.local_t = 0
        self.frequencies: np.ndarray | None = None
        self.inner: CliqueLearner | None = None

    def predict(self, local_index: int) -> np.ndarray:
        if self.inner is None:
            return np.zeros(self.d)
        return self.inner.predict(local_index)

    def predict_matrix(self) -> np.ndarray:
        if self.inner is None:
            return np.zeros((self.n, self.d))
        return self.inner.predict_matrix()

    def update(self, local_index: int, weighted_gradient: np.ndarray) -> None:
        self.local_t += 1
        if self.inner is not None:
            self.inner.update(local_index, weighted_gradient)
            return
        self.counts[local_index] += 1
        if self.local_t == self.tau:
            self.frequencies = self.counts / self.tau
            scale = math.sqrt(float(np.sum(self.frequencies * self.member_weights ** 2)))
            self.inner = self.learner_factory(scale)
            logger.debug("warm-up finished after %d steps, beta scale %.4g", self.tau, scale)


class NetworkState:
    """All clique learners of the network plus the global clock."""

    def __init__(
        self,
        graph: GraphTopology,
        weights: WeightMatrix,
        cliques: Sequence[CliqueLearner | WarmupClique],
        d: int,
    ):
        if len(cliques) != graph.n:
            raise ConfigurationError(f"{len(cliques)} cliques for {graph.n} agents")
        for j, (clique, group) in enumerate(zip(cliques, graph.neighborhoods)):
            if clique.n != len(group):
                raise ConfigurationError(
                    f"clique {j} has size {clique.n}, neighborhood has {len(group)}")
        self.graph = graph
        self.weights = weights
        self.cliques = list(cliques)
        self.d = d
        self.local_index = [
            {agent: position for position, agent in enumerate(group)}
            for group in graph.neighborhoods
        ]
        self.global_t = 0
        self.max_gradient_norm = 0.0

    @classmethod
    def build(
        cls,
        graph: GraphTopology,
        weights: WeightMatrix,
        d: int,
        learner: LearnerKind | str = LearnerKind.HEDGE,
        scales: Sequence[float] | None = None,
        lipschitz: float = 1.0,
        projection: ProjectionMode | str = ProjectionMode.BALL,
    ) -> NetworkState:
        if scales is None:
            scales = beta_scales(graph, weights)
        cliques = [
            make_learner(learner, len(group), d, float(scales[j]), lipschitz, projection)
            for j, group in enumerate(graph.neighborhoods)
        ]
        return cls(graph, weights, cliques, d)

    def fetch(self, active: int) -> list[tuple[int, np.ndarray]]:
        return [
            (j, self.cliques[j].predict(self.local_index[j][active]))
            for j in self.graph.neighborhoods[active]
        ]

    def step(self, schedule: ActivationSchedule, loss_source: LossSource) -> StepRecord:
        t = self.global_t
        active = schedule.agent_at(t)
        weight_row = self.weights.values[active]
        fetched = tuple(self.fetch(active))
        prediction = np.zeros(self.d)
        for j, row in fetched:
            prediction = prediction + weight_row[j] * row
        loss = loss_source.loss_at(t, active)
        loss_value = loss.value(prediction)
        gradient = loss.subgradient(prediction)
        sent = []
        for j, _ in fetched:
            payload = weight_row[j] * gradient
            self.cliques[j].update(self.local_index[j][active], payload)
            sent.append((j, payload))
        self.global_t += 1
        self.max_gradient_norm = max(self.max_gradient_norm, float(np.linalg.norm(gradient)))
        logger.debug("step %d: agent %d loss %.6g", t, active, loss_value)
        return StepRecord(t, active, fetched, prediction, loss_value, gradient, tuple(sent))

    def to_snapshot(self) -> dict[str, Any]:
        if any(isinstance(clique, WarmupClique) for clique in self.cliques):
            raise LearnerStateError("warm-up cliques cannot be snapshotted")
        return {
            "global_t": self.global_t,
            "max_gradient_norm": self.max_gradient_norm,
            "cliques": [clique.to_snapshot() for clique in self.cliques],
        }

    @classmethod
    def from_snapshot(
        cls, graph: GraphTopology, weights: WeightMatrix, payload: Mapping[str, Any],
    ) -> NetworkState:
        cliques = [restore_snapshot(item) for item in payload["cliques"]]
        net = cls(graph, weights, cliques, cliques[0].d)
        net.global_t = payload["global_t"]
        net.max_gradient_norm = payload["max_gradient_norm"]
        return net


class PackedKTNetwork:
    """NetworkState with KT cliques, advanced one neighborhood at a time in bulk.

    Plays the same protocol as NetworkState.build(..., LearnerKind.KT); a step
    costs a fixed number of array operations over the active neighborhood.
    """

    def __init__(
        self,
        graph: GraphTopology,
        weights: WeightMatrix,
        d: int,
        scales: Sequence[float] | None = None,
        lipschitz: float = 1.0,
    ):
        if scales is None:
            scales = beta_scales(graph, weights)
        self.graph = graph
        self.weights = weights
        self.d = d
        self.bank = KTLearnerBank([len(group) for group in graph.neighborhoods], d, scales, lipschitz)
        position = [{agent: k for k, agent in enumerate(group)} for group in graph.neighborhoods]
        self.members = [np.array(group, dtype=np.int64) for group in graph.neighborhoods]
        self.positions = [
            np.array([position[j][agent] for j in group], dtype=np.int64)
            for agent, group in enumerate(graph.neighborhoods)
        ]
        self.shares = [weights.values[agent, self.members[agent]] for agent in range(graph.n)]
        self.global_t = 0
        self.max_gradient_norm = 0.0

    def step(self, schedule: ActivationSchedule, loss_source: LossSource) -> StepRecord:
        t = self.global_t
        active = schedule.agent_at(t)
        cliques = self.members[active]
        positions = self.positions[active]
        shares = self.shares[active]
        rows = self.bank.direction_rows(cliques, positions)
        fetched = self.bank.bets[cliques, None] * rows
        prediction = shares @ fetched
        loss = loss_source.loss_at(t, active)
        loss_value = loss.value(prediction)
        gradient = loss.subgradient(prediction)
        payloads = shares[:, None] * gradient
        self.bank.update(cliques, positions, rows, payloads)
        self.global_t += 1
        self.max_gradient_norm = max(self.max_gradient_norm, float(np.linalg.norm(gradient)))
        labels = self.graph.neighborhoods[active]
        return StepRecord(t, active, tuple(zip(labels, fetched)), prediction, loss_value,
                          gradient, tuple(zip(labels, payloads)))

    def to_network(self) -> NetworkState:
        """The equivalent NetworkState of standalone KT cliques."""
        cliques = [self.bank.learner(j) for j in range(self.graph.n)]
        net = NetworkState(self.graph, self.weights, cliques, self.d)
        net.global_t = self.global_t
        net.max_gradient_norm = self.max_gradient_norm
        return net

    def to_snapshot(self) -> dict[str, Any]:
        return self.to_network().to_snapshot()


def step(net: NetworkState, schedule: ActivationSchedule, loss_source: LossSource) -> StepRecord:
    return net.step(schedule, loss_source)


def run(
    net: NetworkState | PackedKTNetwork,
    schedule: ActivationSchedule,
    loss_source: LossSource,
    horizon: int,
    keep_records: bool = False,
) -> Trajectory:
    trajectory = Trajectory.allocate(horizon, net.d, keep_records)
    for t in range(horizon):
        trajectory.store(t, net.step(schedule, loss_source))
    trajectory.max_gradient_norm = net.max_gradient_norm
    return trajectory


def warmup_length(
    n_agents: int, q_min: float, horizon: int, constant: float = DEFAULT_WARMUP_CONSTANT,
) -> int:
    return math.ceil((constant / q_min) * math.log(2 * n_agents ** 2 * horizon))


def two_phase_unknown_q(
    net: NetworkState,
    schedule: StochasticSchedule,
    loss_source: LossSource,
    q_min_lower_bound: float,
    horizon: int,
    tau_constant: float = DEFAULT_WARMUP_CONSTANT,
    keep_records: bool = False,
) -> Trajectory:
    """Run with every clique estimating its activation frequencies first.

    The cliques of `net` are replaced by warm-up wrappers that build a fresh
    learner of the same kind once their local clock reaches tau.
    """
    if not isinstance(schedule, StochasticSchedule):
        raise ConfigurationError("the two-phase strategy needs stochastic activations")
    if not 0 < q_min_lower_bound <= float(schedule.q.min()):
        raise ConfigurationError(
            f"q_min lower bound {q_min_lower_bound} not in (0, min q]")
    if net.global_t:
        raise LearnerStateError("the two-phase strategy needs a fresh network")
    tau = warmup_length(net.graph.n, q_min_lower_bound, horizon, tau_constant)
    if tau >= horizon:
        raise ConfigurationError(f"warm-up length {tau} does not fit horizon {horizon}")
    wrapped = []
    for j, group in enumerate(net.graph.neighborhoods):
        template = net.cliques[j]
        projection = (template.projection if isinstance(template, HedgeCliqueLearner)
                      else ProjectionMode.BALL)

        def factory(scale, template=template, projection=projection):
            return make_learner(template.kind, template.n, template.d, scale,
                                template.lipschitz, projection)

        wrapped.append(WarmupClique(tau, net.weights.values[list(group), j], net.d, factory))
    net.cliques = wrapped
    logger.info("two-phase run: warm-up tau=%d of horizon %d", tau, horizon)
    trajectory = run(net, schedule, loss_source, horizon, keep_records)
    trajectory.extras["tau"] = tau
    return trajectory


def clique_regrets(trajectory: Trajectory, comparator: TaskMatrix, weights: WeightMatrix) -> np.ndarray:
    """Linearized regret each clique incurs against its rows of the comparator."""
    totals = np.zeros(weights.graph.n)
    for record in trajectory:
        target = comparator.rows[record.active]
        for j, row in record.fetched:
            totals[j] += weights.values[record.active, j] * float(record.gradient @ (row - target))
    return totals
