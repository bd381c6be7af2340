"""Per-agent base learners run on a virtual clique of size n.

Both learners keep theta, the n x d matrix of cumulative weighted gradients
(row i collects the gradients sent for clique position i), and regularize with
the interaction matrix A = (1+n)I - 11^T so that a gradient for one position
moves the predictions of every position.
"""

from __future__ import annotations

import logging
import math
from abc import ABC, abstractmethod
from typing import Any, ClassVar, Mapping

import numpy as np
from scipy.special import logsumexp

from mtcool.domain import LearnerKind, LearnerStateError, ProjectionMode

logger = logging.getLogger(__name__)

DYKSTRA_TOLERANCE = 1e-9
DYKSTRA_MAX_SWEEPS = 100


class InteractionMatrix:
    """Implicit A = (1+n)I - 11^T with inverse (I + 11^T)/(n+1)."""

    def __init__(self, n: int):
        if n < 1:
            raise LearnerStateError(f"clique size must be positive, got {n}")
        self.n = n

    def matrix(self) -> np.ndarray:
        return (1 + self.n) * np.eye(self.n) - np.ones((self.n, self.n))

    def inverse(self) -> np.ndarray:
        return (np.eye(self.n) + np.ones((self.n, self.n))) / (self.n + 1)

    @property
    def inverse_diagonal(self) -> float:
        return 2.0 / (self.n + 1)

    def apply_inverse(self, x: np.ndarray) -> np.ndarray:
        return (x + x.sum(axis=0)) / (self.n + 1)

    def norm_sq(self, x: np.ndarray) -> float:
        colsum = x.sum(axis=0)
        value = (1 + self.n) * float(np.vdot(x, x)) - float(colsum @ colsum)
        return max(value, 0.0)

    def norm(self, x: np.ndarray) -> float:
        return math.sqrt(self.norm_sq(x))


def hedge_weights(cumloss: np.ndarray, beta: float, n: int) -> np.ndarray:
    """Exponential weights with rate sqrt(ln n)/beta over the variance grid."""
    if beta <= 0:
        raise LearnerStateError(f"learning-rate scale must be positive, got {beta}")
    logits = -(math.sqrt(math.log(n)) / beta) * np.asarray(cumloss, dtype=float)
    return np.exp(logits - logsumexp(logits))


def kt_bet(t: int, sum_u: float, sum_bu: float) -> float:
    """Krichevsky-Trofimov fraction for round t from the outcomes of rounds < t."""
    return -(sum_u / t) * (1.0 - sum_bu)


def _cap_variance(x: np.ndarray, xi: float) -> np.ndarray:
    n = x.shape[0]
    if n < 2:
        return x
    mean = x.mean(axis=0)
    centered = x - mean
    limit = (n - 1) * xi
    spread = float(np.vdot(centered, centered))
    if spread <= limit:
        return x
    return mean + centered * math.sqrt(limit / spread)


def _clip_rows(x: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(x, axis=1, keepdims=True)
    return x / np.maximum(norms, 1.0)


def dykstra_project(point: np.ndarray, xi: float) -> np.ndarray:
    """Alternate variance capping and row clipping with Dykstra corrections."""
    x = point
    p = np.zeros_like(point)
    q = np.zeros_like(point)
    for _ in range(DYKSTRA_MAX_SWEEPS):
        y = _cap_variance(x + p, xi)
        p = x + p - y
        x_next = _clip_rows(y + q)
        q = y + q - x_next
        converged = np.linalg.norm(x_next - x) < DYKSTRA_TOLERANCE
        x = x_next
        if converged:
            break
    return x


class KTBettor:
    """Coin-betting magnitude learner; wealth 1 - sum b_s u_s stays positive."""

    def __init__(self):
        self.rounds = 0
        self.sum_u = 0.0
        self.sum_bu = 0.0
        self.bet = 0.0

    @property
    def wealth(self) -> float:
        return 1.0 - self.sum_bu

    def observe(self, u: float) -> None:
        self.sum_bu += self.bet * u
        self.sum_u += u
        self.rounds += 1
        self.bet = kt_bet(self.rounds + 1, self.sum_u, self.sum_bu)


class CliqueLearner(ABC):
    """Shared state of a clique learner: theta, the local clock and beta."""

    kind: ClassVar[LearnerKind]

    def __init__(self, n: int, d: int, beta_scale: float = 1.0, lipschitz: float = 1.0):
        if beta_scale < 0:
            raise LearnerStateError(f"beta scale must be nonnegative, got {beta_scale}")
        self.interaction = InteractionMatrix(n)
        self.n = n
        self.d = d
        self.beta_scale = beta_scale if beta_scale > 0 else 1.0
        self.lipschitz = lipschitz
        self.theta = np.zeros((n, d))
        self.local_t = 0
        self._warned = False

    def beta(self) -> float:
        """beta_scale * sqrt(1 + local steps so far)."""
        return self.beta_scale * math.sqrt(1 + self.local_t)

    def inverse_row_and_norm(self, local_index: int) -> tuple[np.ndarray, float]:
        """Row local_index of A^-1 theta and ||A^-1 theta||_A.

        ||A^-1 theta||_A^2 = <A^-1 theta, theta> = (||theta||^2 + ||1^T theta||^2)/(n+1).
        """
        colsum = self.theta.sum(axis=0)
        row = (self.theta[local_index] + colsum) / (self.n + 1)
        norm_sq = (float(np.vdot(self.theta, self.theta)) + float(colsum @ colsum)) / (self.n + 1)
        return row, math.sqrt(norm_sq)

    def _check_index(self, local_index: int) -> None:
        if not 0 <= local_index < self.n:
            raise LearnerStateError(
                f"local index {local_index} outside clique of size {self.n}")

    def _note_gradient(self, weighted_gradient: np.ndarray) -> None:
        norm = float(np.linalg.norm(weighted_gradient))
        if norm > self.lipschitz * (1.0 + 1e-9) and not self._warned:
            logger.warning(
                "weighted gradient norm %.4g exceeds learner bound %.4g",
                norm, self.lipschitz)
            self._warned = True

    @abstractmethod
    def predict(self, local_index: int) -> np.ndarray:
        """Row local_index of the current clique prediction."""

    @abstractmethod
    def update(self, local_index: int, weighted_gradient: np.ndarray) -> None:
        """Feed the linear loss <weighted_gradient, .> at local_index."""

    @abstractmethod
    def predict_matrix(self) -> np.ndarray:
        """The full n x d clique prediction."""

    def to_snapshot(self) -> dict[str, Any]:
        return {
            "kind": self.kind.value,
            "n": self.n,
            "d": self.d,
            "beta_scale": self.beta_scale,
            "lipschitz": self.lipschitz,
            "local_t": self.local_t,
            "theta": self.theta.tolist(),
        }


class HedgeCliqueLearner(CliqueLearner):
    """MT-FTRL: FTRL experts for each variance level mixed by Hedge."""

    kind = LearnerKind.HEDGE

    def __init__(
        self,
        n: int,
        d: int,
        beta_scale: float = 1.0,
        lipschitz: float = 1.0,
        projection: ProjectionMode | str = ProjectionMode.BALL,
    ):
        super().__init__(n, d, beta_scale, lipschitz)
        self.projection = ProjectionMode(projection)
        self.grid = np.arange(1, n + 1) / n
        self.expert_cumloss = np.zeros(n)
        self._round: tuple[int, int, np.ndarray] | None = None

    def expert_rates(self) -> np.ndarray:
        return (self.n / self.beta()) * np.sqrt(1 + self.grid * (self.n - 1))

    def expert_radii(self) -> np.ndarray:
        return np.sqrt(self.n * (1 + self.grid * (self.n - 1)))

    def _scaled_direction(self) -> tuple[np.ndarray, np.ndarray]:
        """A^-1 theta and the per-expert coefficients of the ball-mode experts."""
        direction = self.interaction.apply_inverse(self.theta)
        # ||A^-1 theta||_A^2 = <A^-1 theta, theta>
        norm = math.sqrt(max(float(np.vdot(direction, self.theta)), 0.0))
        rates = self.expert_rates()
        if norm == 0:
            return direction, -rates
        return direction, -np.minimum(rates, self.expert_radii() / norm)

    def experts(self) -> np.ndarray:
        """All expert predictions stacked as (grid size, n, d)."""
        direction, scales = self._scaled_direction()
        if self.projection is ProjectionMode.BALL:
            return scales[:, None, None] * direction
        rates = self.expert_rates()
        return np.stack([
            dykstra_project(-rate * direction, xi)
            for rate, xi in zip(rates, self.grid)
        ])

    def expert_prediction(self, xi: float) -> np.ndarray:
        matches = np.flatnonzero(np.isclose(self.grid, xi))
        if matches.size == 0:
            raise LearnerStateError(f"{xi} is not on the variance grid of size {self.n}")
        return self.experts()[matches[0]]

    def expert_rows(self, local_index: int) -> np.ndarray:
        """Row local_index of every expert, cached for the current round."""
        self._check_index(local_index)
        cached = self._round
        if cached is not None and cached[0] == self.local_t and cached[1] == local_index:
            return cached[2]
        if self.projection is ProjectionMode.BALL:
            row, norm = self.inverse_row_and_norm(local_index)
            rates = self.expert_rates()
            scales = -rates if norm == 0 else -np.minimum(rates, self.expert_radii() / norm)
            rows = scales[:, None] * row
        else:
            rows = self.experts()[:, local_index, :]
        self._round = (self.local_t, local_index, rows)
        return rows

    def hedge_mix(self) -> np.ndarray:
        return hedge_weights(self.expert_cumloss, self.beta(), self.n)

    def predict(self, local_index: int) -> np.ndarray:
        return self.hedge_mix() @ self.expert_rows(local_index)

    def predict_matrix(self) -> np.ndarray:
        return np.tensordot(self.hedge_mix(), self.experts(), axes=1)

    def update(self, local_index: int, weighted_gradient: np.ndarray) -> None:
        self._note_gradient(weighted_gradient)
        rows = self.expert_rows(local_index)
        self.expert_cumloss = self.expert_cumloss + rows @ weighted_gradient
        self.theta[local_index] += weighted_gradient
        self.local_t += 1
        self._round = None

    def to_snapshot(self) -> dict[str, Any]:
        snapshot = super().to_snapshot()
        snapshot["projection"] = self.projection.value
        snapshot["expert_cumloss"] = self.expert_cumloss.tolist()
        return snapshot


class KTCliqueLearner(CliqueLearner):
    """FTRL direction on the unit A-ball scaled by a KT coin-betting magnitude."""

    kind = LearnerKind.KT

    def __init__(self, n: int, d: int, beta_scale: float = 1.0, lipschitz: float = 1.0):
        super().__init__(n, d, beta_scale, lipschitz)
        self.bettor = KTBettor()
        self._round: tuple[int, int, np.ndarray] | None = None
        self._clip_warned = False

    @property
    def bet(self) -> float:
        return self.bettor.bet

    def direction(self) -> np.ndarray:
        """The full FTRL direction, -rate * A^-1 theta pulled back onto the unit A-ball."""
        rate = math.sqrt(self.n) / self.beta()
        y = -rate * self.interaction.apply_inverse(self.theta)
        norm = self.interaction.norm(y)
        if norm > 1.0:
            y = y / norm
        return y

    def direction_row(self, local_index: int) -> np.ndarray:
        self._check_index(local_index)
        cached = self._round
        if cached is not None and cached[0] == self.local_t and cached[1] == local_index:
            return cached[2]
        rate = math.sqrt(self.n) / self.beta()
        row, norm = self.inverse_row_and_norm(local_index)
        scaled = rate * norm
        factor = -1.0 / norm if scaled > 1.0 else -rate
        result = factor * row
        self._round = (self.local_t, local_index, result)
        return result

    def predict(self, local_index: int) -> np.ndarray:
        return self.bettor.bet * self.direction_row(local_index)

    def predict_matrix(self) -> np.ndarray:
        return self.bettor.bet * self.direction()

    def update(self, local_index: int, weighted_gradient: np.ndarray) -> None:
        row = self.direction_row(local_index)
        self._note_gradient(weighted_gradient)
        u = math.sqrt(self.n) / (math.sqrt(2) * self.lipschitz) * float(row @ weighted_gradient)
        if abs(u) > 1.0:
            if not self._clip_warned:
                logger.warning("KT outcome %.4g clipped to [-1, 1]", u)
                self._clip_warned = True
            u = math.copysign(1.0, u)
        self.bettor.observe(u)
        self.theta[local_index] += weighted_gradient
        self.local_t += 1

    def to_snapshot(self) -> dict[str, Any]:
        snapshot = super().to_snapshot()
        snapshot.update(
            sum_u=self.bettor.sum_u,
            sum_bu=self.bettor.sum_bu,
            bet=self.bettor.bet,
            rounds=self.bettor.rounds,
        )
        return snapshot


class KTLearnerBank:
    """KT clique learners of mixed sizes packed into shared arrays.

    Learner k owns theta[k, :sizes[k]]. Column sums and squared Frobenius
    norms are maintained incrementally, so a round over any set of distinct
    learners costs a fixed number of array operations.
    """

    def __init__(
        self,
        sizes: np.ndarray | list[int],
        d: int,
        beta_scales: np.ndarray | None = None,
        lipschitz: float = 1.0,
    ):
        sizes = np.asarray(sizes, dtype=np.int64)
        if sizes.ndim != 1 or sizes.size == 0 or sizes.min() < 1:
            raise LearnerStateError("a learner bank needs positive clique sizes")
        scales = np.ones(len(sizes)) if beta_scales is None else np.asarray(beta_scales, dtype=float)
        if scales.shape != sizes.shape or np.any(scales < 0):
            raise LearnerStateError("beta scales must be nonnegative, one per learner")
        self.sizes = sizes
        self.d = d
        self.lipschitz = lipschitz
        self.beta_scales = np.where(scales > 0, scales, 1.0)
        self.theta = np.zeros((len(sizes), int(sizes.max()), d))
        self.colsum = np.zeros((len(sizes), d))
        self.sq_norm = np.zeros(len(sizes))
        self.local_t = np.zeros(len(sizes), dtype=np.int64)
        self.rounds = np.zeros(len(sizes), dtype=np.int64)
        self.sum_u = np.zeros(len(sizes))
        self.sum_bu = np.zeros(len(sizes))
        self.bets = np.zeros(len(sizes))
        self._warned = False
        self._clip_warned = False

    def __len__(self) -> int:
        return len(self.sizes)

    def direction_rows(self, learners: np.ndarray, positions: np.ndarray) -> np.ndarray:
        """Row positions[k] of the unit A-ball FTRL direction of learners[k]."""
        n = self.sizes[learners].astype(float)
        rate = np.sqrt(n) / (self.beta_scales[learners] * np.sqrt(1.0 + self.local_t[learners]))
        colsum = self.colsum[learners]
        rows = (self.theta[learners, positions] + colsum) / (n + 1)[:, None]
        norm_sq = (self.sq_norm[learners] + np.einsum("kd,kd->k", colsum, colsum)) / (n + 1)
        norm = np.sqrt(np.maximum(norm_sq, 0.0))
        factor = -rate
        clipped = rate * norm > 1.0
        factor[clipped] = -1.0 / norm[clipped]
        return factor[:, None] * rows

    def predict(self, learners: np.ndarray, positions: np.ndarray) -> np.ndarray:
        return self.bets[learners, None] * self.direction_rows(learners, positions)

    def update(
        self,
        learners: np.ndarray,
        positions: np.ndarray,
        rows: np.ndarray,
        gradients: np.ndarray,
    ) -> None:
        """Feed gradients[k] to learners[k]; rows are their direction rows this round."""
        if not self._warned:
            worst = float(np.linalg.norm(gradients, axis=1).max())
            if worst > self.lipschitz * (1.0 + 1e-9):
                logger.warning(
                    "weighted gradient norm %.4g exceeds learner bound %.4g", worst, self.lipschitz)
                self._warned = True
        n = self.sizes[learners].astype(float)
        u = np.sqrt(n) / (math.sqrt(2) * self.lipschitz) * np.einsum("kd,kd->k", rows, gradients)
        if np.any(np.abs(u) > 1.0):
            if not self._clip_warned:
                logger.warning("KT outcome %.4g clipped to [-1, 1]", float(u[np.abs(u).argmax()]))
                self._clip_warned = True
            u = np.clip(u, -1.0, 1.0)
        self.sum_bu[learners] += self.bets[learners] * u
        self.sum_u[learners] += u
        self.rounds[learners] += 1
        self.bets[learners] = kt_bet(
            self.rounds[learners] + 1, self.sum_u[learners], self.sum_bu[learners])
        old = self.theta[learners, positions]
        self.sq_norm[learners] += (2.0 * np.einsum("kd,kd->k", old, gradients)
                                   + np.einsum("kd,kd->k", gradients, gradients))
        self.theta[learners, positions] = old + gradients
        self.colsum[learners] += gradients
        self.local_t[learners] += 1

    def learner(self, k: int) -> KTCliqueLearner:
        """Learner k as a standalone KTCliqueLearner."""
        n = int(self.sizes[k])
        learner = KTCliqueLearner(n, self.d, float(self.beta_scales[k]), self.lipschitz)
        learner.theta = self.theta[k, :n].copy()
        learner.local_t = int(self.local_t[k])
        learner.bettor.rounds = int(self.rounds[k])
        learner.bettor.sum_u = float(self.sum_u[k])
        learner.bettor.sum_bu = float(self.sum_bu[k])
        learner.bettor.bet = float(self.bets[k])
        return learner


def restore_snapshot(payload: Mapping[str, Any]) -> CliqueLearner:
    """Rebuild a learner from to_snapshot() output, bit-exactly."""
    kind = LearnerKind(payload["kind"])
    if kind is LearnerKind.HEDGE:
        learner: CliqueLearner = HedgeCliqueLearner(
            payload["n"], payload["d"], payload["beta_scale"],
            payload["lipschitz"], payload["projection"])
        learner.expert_cumloss = np.array(payload["expert_cumloss"], dtype=float)
    else:
        learner = KTCliqueLearner(
            payload["n"], payload["d"], payload["beta_scale"], payload["lipschitz"])
        learner.bettor.sum_u = payload["sum_u"]
        learner.bettor.sum_bu = payload["sum_bu"]
        learner.bettor.bet = payload["bet"]
        learner.bettor.rounds = payload["rounds"]
    learner.theta = np.array(payload["theta"], dtype=float).reshape(payload["n"], payload["d"])
    learner.local_t = payload["local_t"]
    return learner


def make_learner(
    kind: LearnerKind | str,
    n: int,
    d: int,
    beta_scale: float = 1.0,
    lipschitz: float = 1.0,
    projection: ProjectionMode | str = ProjectionMode.BALL,
) -> CliqueLearner:
    if LearnerKind(kind) is LearnerKind.HEDGE:
        return HedgeCliqueLearner(n, d, beta_scale, lipschitz, projection)
    return KTCliqueLearner(n, d, beta_scale, lipschitz)
