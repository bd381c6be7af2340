"""Loss-level differential privacy for the decentralized protocol.

Every quantity an agent shares is a sanitized prefix sum released by a
binary-counter aggregation tree. Each tree owns its own Laplace noise stream,
derived from the master seed and the stream name.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Any, Mapping

import numpy as np

from mtcool.clique_learner import HedgeCliqueLearner
from mtcool.coolcn_engine import (
    ActivationSchedule,
    NetworkState,
    StepRecord,
    WeightMatrix,
    beta_scales,
)
from mtcool.domain import (
    CapacityError,
    ConfigurationError,
    LearnerStateError,
    UnsupportedLossError,
)
from mtcool.graph_core import GraphTopology
from mtcool.loss_stream import LinearLoss, LossSource
from utils import stream_rng

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class PrivacyBudget:
    epsilon: float
    n_max: int
    d: int
    horizon: float
    epsilon_prime: float
    scale_vec: float
    scale_scalar: float

    @property
    def is_private(self) -> bool:
        return math.isfinite(self.epsilon)

    def to_payload(self) -> dict[str, Any]:
        return {
            "epsilon": self.epsilon if self.is_private else "inf",
            "epsilon_prime": self.epsilon_prime if self.is_private else "inf",
            "scale_vec": self.scale_vec,
            "scale_scalar": self.scale_scalar,
            "n_max": self.n_max,
            "d": self.d,
            "horizon": self.horizon,
        }


def budget(epsilon: float, n_max: int, d: int, horizon: float) -> PrivacyBudget:
    """Split epsilon over the shared streams: epsilon' = epsilon / (6 n_max^2)."""
    if horizon < 2:
        raise ConfigurationError(f"privacy scales need a horizon of at least 2, got {horizon}")
    if not epsilon > 0:
        raise ConfigurationError(f"epsilon must be positive, got {epsilon}")
    if math.isinf(epsilon):
        return PrivacyBudget(epsilon, n_max, d, horizon, math.inf, 0.0, 0.0)
    epsilon_prime = epsilon / (6 * n_max ** 2)
    log_horizon = math.log(horizon)
    return PrivacyBudget(
        epsilon=epsilon,
        n_max=n_max,
        d=d,
        horizon=horizon,
        epsilon_prime=epsilon_prime,
        scale_vec=math.sqrt(d) * log_horizon / epsilon_prime,
        scale_scalar=log_horizon / epsilon_prime,
    )


def laplace_sample(dim: int, scale: float, rng: np.random.Generator) -> np.ndarray:
    """dim i.i.d. Laplace(0, scale) coordinates; zero scale draws nothing."""
    if scale < 0:
        raise ConfigurationError(f"Laplace scale must be nonnegative, got {scale}")
    if scale == 0:
        return np.zeros(dim)
    return rng.laplace(0.0, scale, size=dim)


def tree_levels(horizon: int) -> int:
    """ceil(log2 horizon) + 1"""
    return (horizon - 1).bit_length() + 1


class AggregationTree:
    """Binary counter releasing noisy prefix sums.

    Node k holds the exact sum of the most recent dyadic block of length 2^k
    ending at a step whose bit k is set. A release adds the noisy nodes of the
    set bits of t and tops up with fresh draws, so every release carries
    exactly `levels` Laplace terms.
    """

    def __init__(
        self,
        horizon: int,
        dim: int,
        scale: float,
        rng: np.random.Generator,
        keep_history: bool = False,
    ):
        if horizon < 1:
            raise ConfigurationError(f"tree horizon must be positive, got {horizon}")
        self.horizon = horizon
        self.dim = dim
        self.scale = scale
        self.levels = tree_levels(horizon)
        self._rng = rng
        self._exact: list[np.ndarray | None] = [None] * self.levels
        self._noisy: list[np.ndarray | None] = [None] * self.levels
        self.count = 0
        self.last_noise_terms = 0
        self.noise_draws = 0
        self.history: list[np.ndarray] | None = [] if keep_history else None

    def _noise(self) -> np.ndarray:
        self.noise_draws += 1
        return laplace_sample(self.dim, self.scale, self._rng)

    def release(self, value: np.ndarray) -> np.ndarray:
        if self.count >= self.horizon:
            raise CapacityError(f"tree of horizon {self.horizon} is full")
        self.count += 1
        t = self.count
        level = (t & -t).bit_length() - 1
        node = np.array(value, dtype=float).reshape(self.dim)
        for k in range(level):
            node = node + self._exact[k]
            self._exact[k] = None
            self._noisy[k] = None
        self._exact[level] = node
        self._noisy[level] = node + self._noise()
        released = np.zeros(self.dim)
        terms = 0
        for k in range(self.levels):
            if t >> k & 1:
                released = released + self._noisy[k]
                terms += 1
        while terms < self.levels:
            released = released + self._noise()
            terms += 1
        self.last_noise_terms = terms
        if self.history is not None:
            self.history.append(released)
        return released

    def node_sums(self) -> dict[int, np.ndarray]:
        """Exact sums of the dyadic nodes covering [1, count], keyed by level."""
        return {
            k: self._exact[k].copy()
            for k in range(self.levels)
            if self.count >> k & 1
        }


def tree_release(tree: AggregationTree, value: np.ndarray) -> np.ndarray:
    return tree.release(value)


class SanitizedHedgeClique(HedgeCliqueLearner):
    """Hedge clique whose theta and expert losses are overwritten by releases.

    Row i of theta is the latest sanitized gradient sum of member i scaled by
    its weight; row i of score_table holds member i's sanitized expert losses.
    """

    def __init__(self, n: int, d: int, beta_scale: float = 1.0, lipschitz: float = 1.0):
        super().__init__(n, d, beta_scale, lipschitz)
        self.score_table = np.zeros((n, n))

    def update(self, local_index: int, weighted_gradient: np.ndarray) -> None:
        raise LearnerStateError("sanitized cliques only accept released sums")

    def receive(self, local_index: int, gamma_row: np.ndarray, scores: np.ndarray) -> None:
        self._check_index(local_index)
        self.theta[local_index] = gamma_row
        self.score_table[local_index] = scores
        self.expert_cumloss = self.score_table.sum(axis=0)
        self.local_t += 1
        self._round = None


class DopeNetworkState(NetworkState):
    """Network of sanitized cliques plus the aggregation trees of every agent."""

    def __init__(
        self,
        graph: GraphTopology,
        weights: WeightMatrix,
        d: int,
        privacy: PrivacyBudget,
        noise_seed: int,
        scales: np.ndarray | None = None,
        seed_overrides: Mapping[str, int] | None = None,
        keep_history: bool = False,
    ):
        if privacy.d != d:
            raise ConfigurationError(f"budget built for d={privacy.d}, network has d={d}")
        if privacy.n_max < graph.n_max:
            raise ConfigurationError(
                f"budget assumes n_max={privacy.n_max}, graph has {graph.n_max}")
        if scales is None:
            scales = beta_scales(graph, weights)
        cliques = [
            SanitizedHedgeClique(len(group), d, float(scales[j]))
            for j, group in enumerate(graph.neighborhoods)
        ]
        super().__init__(graph, weights, cliques, d)
        self.privacy = privacy
        self.noise_seed = noise_seed
        self.seed_overrides = dict(seed_overrides or {})
        self.keep_history = keep_history
        self.capacity = int(math.ceil(privacy.horizon))
        self.gamma_trees: dict[int, AggregationTree] = {}
        self.score_trees: dict[tuple[int, int], AggregationTree] = {}

    def _stream(self, name: str) -> np.random.Generator:
        return stream_rng(self.seed_overrides.get(name, self.noise_seed), name)

    def gamma_tree(self, agent: int) -> AggregationTree:
        if agent not in self.gamma_trees:
            self.gamma_trees[agent] = AggregationTree(
                self.capacity, self.d, self.privacy.scale_vec,
                self._stream(f"noise/gamma/{agent}"), self.keep_history)
        return self.gamma_trees[agent]

    def score_tree(self, owner: int, clique: int) -> AggregationTree:
        """Tree of owner's expert-loss sums for clique; one coordinate per grid value."""
        key = (owner, clique)
        if key not in self.score_trees:
            self.score_trees[key] = AggregationTree(
                self.capacity, self.cliques[clique].n, self.privacy.scale_scalar,
                self._stream(f"noise/score/{owner}/{clique}"), self.keep_history)
        return self.score_trees[key]

    def step(self, schedule: ActivationSchedule, loss_source: LossSource) -> StepRecord:
        t = self.global_t
        active = schedule.agent_at(t)
        weight_row = self.weights.values[active]
        group = self.graph.neighborhoods[active]
        expert_rows = {}
        fetched = []
        prediction = np.zeros(self.d)
        for j in group:
            clique = self.cliques[j]
            rows = clique.expert_rows(self.local_index[j][active])
            row = clique.hedge_mix() @ rows
            expert_rows[j] = rows
            fetched.append((j, row))
            prediction = prediction + weight_row[j] * row
        loss = loss_source.loss_at(t, active)
        if not isinstance(loss, LinearLoss):
            raise UnsupportedLossError("private runs accept linear losses only")
        loss_value = loss.value(prediction)
        gradient = loss.subgradient(prediction)
        gamma = self.gamma_tree(active).release(gradient)
        sent = []
        for j in group:
            scores = self.score_tree(active, j).release(weight_row[j] * (expert_rows[j] @ gradient))
            payload = weight_row[j] * gamma
            self.cliques[j].receive(self.local_index[j][active], payload, scores)
            sent.append((j, payload))
        self.global_t += 1
        self.max_gradient_norm = max(self.max_gradient_norm, float(np.linalg.norm(gradient)))
        return StepRecord(t, active, tuple(fetched), prediction, loss_value, gradient, tuple(sent))

    def manifest(self) -> dict[str, Any]:
        payload = self.privacy.to_payload()
        payload.update(
            noise_terms_per_release=tree_levels(self.capacity),
            max_gradient_norm=self.max_gradient_norm,
            steps=self.global_t,
            vector_trees=len(self.gamma_trees),
            scalar_trees=sum(tree.dim for tree in self.score_trees.values()),
        )
        return payload


def dope_step(
    net: DopeNetworkState, schedule: ActivationSchedule, loss_source: LossSource,
) -> StepRecord:
    return net.step(schedule, loss_source)
