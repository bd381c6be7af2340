"""Losses, unit-ball geometry, loss generation and best-in-hindsight oracles."""

from __future__ import annotations

import csv
import hashlib
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Protocol, Sequence, Union

import numpy as np
from scipy.linalg import cholesky, solve_triangular

from mtcool.domain import (
    DomainError,
    NumericError,
    StreamExhaustedError,
    UnsupportedLossError,
)
from mtcool.graph_core import GraphTopology, TaskMatrix, laplacian
from utils import write_csv

logger = logging.getLogger(__name__)

DEFAULT_LOSS_NOISE_STD = 0.01

# A decision point is a d-vector inside the closed unit ball.
DecisionPoint = np.ndarray


def project_unit_ball(x: np.ndarray) -> DecisionPoint:
    x = np.asarray(x, dtype=float)
    norm = float(np.linalg.norm(x))
    return x / norm if norm > 1.0 else x.copy()


@dataclass(frozen=True, eq=False)
class QuadraticLoss:
    """l(x) = 0.5 ||x - center||^2"""

    center: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "center", np.asarray(self.center, dtype=float))

    def value(self, x: np.ndarray) -> float:
        diff = np.asarray(x, dtype=float) - self.center
        return 0.5 * float(diff @ diff)

    def subgradient(self, x: np.ndarray) -> np.ndarray:
        return np.asarray(x, dtype=float) - self.center


@dataclass(frozen=True, eq=False)
class LinearLoss:
    """l(x) = <gradient, x>"""

    gradient: np.ndarray
    lipschitz: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "gradient", np.asarray(self.gradient, dtype=float))
        norm = float(np.linalg.norm(self.gradient))
        if norm > self.lipschitz * (1.0 + 1e-9):
            raise DomainError(
                f"linear loss gradient norm {norm:.6g} exceeds bound {self.lipschitz}")

    def value(self, x: np.ndarray) -> float:
        return float(self.gradient @ np.asarray(x, dtype=float))

    def subgradient(self, x: np.ndarray) -> np.ndarray:
        # Stacked points get one gradient row each.
        return np.broadcast_to(self.gradient, np.shape(x)).copy()


Loss = Union[QuadraticLoss, LinearLoss]


def subgradient(loss: Loss, x: np.ndarray) -> np.ndarray:
    return loss.subgradient(x)


def sample_task_rows(
    g: GraphTopology, lam: float, d: int, rng: np.random.Generator,
) -> np.ndarray:
    """Raw N x d Gaussian draw whose columns have covariance (I + lam L)^-1.

    Uses the Cholesky factor R of the precision I + lam L: with z standard
    normal, x = R^-T z has covariance (R R^T)^-1.
    """
    if lam < 0:
        raise DomainError(f"lambda must be nonnegative, got {lam}")
    precision = np.eye(g.n) + lam * laplacian(g)
    try:
        factor = cholesky(precision, lower=True)
    except np.linalg.LinAlgError as exc:
        raise NumericError(f"Cholesky failed for lambda={lam}: {exc}") from exc
    noise = rng.standard_normal((g.n, d))
    return solve_triangular(factor.T, noise, lower=False)


def sample_task_matrix(
    g: GraphTopology, lam: float, d: int, seed: int | np.random.Generator,
) -> TaskMatrix:
    rng = np.random.default_rng(seed)
    raw = sample_task_rows(g, lam, d, rng)
    return TaskMatrix(np.array([project_unit_ball(row) for row in raw]))


def sample_loss_center(
    u: TaskMatrix,
    active: int,
    rng: np.random.Generator,
    noise_std: float = DEFAULT_LOSS_NOISE_STD,
) -> np.ndarray:
    if not 0 <= active < u.n:
        raise DomainError(f"active agent {active} outside 0..{u.n - 1}")
    if noise_std == 0:
        return u.rows[active].copy()
    return u.rows[active] + noise_std * rng.standard_normal(u.d)


class LossSource(Protocol):
    def loss_at(self, t: int, active: int) -> Loss: ...


class QuadraticLossSource:
    """Quadratic losses centered at the active agent's noisy task row.

    Draws are sequential: each call advances the noise stream once.
    """

    def __init__(self, u: TaskMatrix, noise_std: float, seed: int | np.random.Generator):
        self.u = u
        self.noise_std = noise_std
        self._rng = np.random.default_rng(seed)

    def loss_at(self, t: int, active: int) -> Loss:
        return QuadraticLoss(sample_loss_center(self.u, active, self._rng, self.noise_std))


class LinearLossSource:
    """Linear losses g = P(noise - U_active), with P the unit-ball projection."""

    def __init__(self, u: TaskMatrix, noise_std: float, seed: int | np.random.Generator):
        self.u = u
        self.noise_std = noise_std
        self._rng = np.random.default_rng(seed)

    def loss_at(self, t: int, active: int) -> Loss:
        noise = self.noise_std * self._rng.standard_normal(self.u.d)
        return LinearLoss(project_unit_ball(noise - self.u.rows[active]))


class AlternatingSignSource:
    """Adversarial +e1, -e1, +e1, ... linear losses."""

    def __init__(self, d: int):
        self.d = d

    def loss_at(self, t: int, active: int) -> Loss:
        gradient = np.zeros(self.d)
        gradient[0] = 1.0 if t % 2 == 0 else -1.0
        return LinearLoss(gradient)


@dataclass(frozen=True, eq=False)
class RecordedStream:
    """A fixed (active agent, loss) sequence shared by competing algorithms.

    Acts both as an activation schedule and as a loss source, so replaying it
    reproduces every run that consumed it.
    """

    actives: np.ndarray
    losses: tuple[Loss, ...]
    n_agents: int = field(default=0)

    def __post_init__(self):
        actives = np.asarray(self.actives, dtype=np.int64)
        if actives.shape != (len(self.losses),):
            raise DomainError(
                f"{actives.shape[0]} activations for {len(self.losses)} losses")
        object.__setattr__(self, "actives", actives)
        if not self.n_agents:
            object.__setattr__(self, "n_agents", int(actives.max()) + 1 if len(actives) else 1)

    def __len__(self) -> int:
        return len(self.losses)

    @property
    def d(self) -> int:
        if not self.losses:
            raise DomainError("an empty stream has no dimension")
        loss = self.losses[0]
        return len(loss.center if isinstance(loss, QuadraticLoss) else loss.gradient)

    def agent_at(self, t: int) -> int:
        if t >= len(self.losses):
            raise StreamExhaustedError(f"stream of length {len(self.losses)} has no step {t}")
        return int(self.actives[t])

    def loss_at(self, t: int, active: int) -> Loss:
        if self.agent_at(t) != active:
            raise DomainError(f"step {t} recorded agent {self.actives[t]}, asked for {active}")
        return self.losses[t]

    @property
    def is_linear(self) -> bool:
        return all(isinstance(loss, LinearLoss) for loss in self.losses)

    def lipschitz_bound(self) -> float:
        """Largest gradient norm any unit-ball point can see on this stream."""
        bound = 0.0
        for loss in self.losses:
            if isinstance(loss, QuadraticLoss):
                bound = max(bound, 1.0 + float(np.linalg.norm(loss.center)))
            else:
                bound = max(bound, float(np.linalg.norm(loss.gradient)))
        return bound

    def group_by_agent(self) -> list[list[Loss]]:
        grouped: list[list[Loss]] = [[] for _ in range(self.n_agents)]
        for active, loss in zip(self.actives, self.losses):
            grouped[active].append(loss)
        return grouped

    def digest(self) -> str:
        hasher = hashlib.sha256(self.actives.tobytes())
        for loss in self.losses:
            if isinstance(loss, QuadraticLoss):
                hasher.update(b"q" + loss.center.tobytes())
            else:
                hasher.update(b"l" + loss.gradient.tobytes())
        return hasher.hexdigest()


class StreamTap:
    """Replays a RecordedStream while keeping every loss a run actually read."""

    def __init__(self, stream: RecordedStream):
        self.stream = stream
        self.n_agents = stream.n_agents
        self._actives: list[int] = []
        self._losses: list[Loss] = []

    def agent_at(self, t: int) -> int:
        return self.stream.agent_at(t)

    def loss_at(self, t: int, active: int) -> Loss:
        loss = self.stream.loss_at(t, active)
        self._actives.append(active)
        self._losses.append(loss)
        return loss

    def consumed(self) -> RecordedStream:
        return RecordedStream(
            np.array(self._actives, dtype=np.int64), tuple(self._losses), self.n_agents)


def record_stream(schedule, source: LossSource, horizon: int) -> RecordedStream:
    """Draw `horizon` steps from a schedule and loss source into a RecordedStream."""
    actives = np.empty(horizon, dtype=np.int64)
    losses = []
    for t in range(horizon):
        active = schedule.agent_at(t)
        actives[t] = active
        losses.append(source.loss_at(t, active))
    return RecordedStream(actives, tuple(losses), n_agents=schedule.n_agents)


def best_in_hindsight(losses: Sequence[Sequence[Loss]], d: int) -> TaskMatrix:
    """Per-agent unit-ball minimizer of the summed losses."""
    rows = np.zeros((len(losses), d))
    for i, agent_losses in enumerate(losses):
        if not agent_losses:
            continue
        if all(isinstance(loss, QuadraticLoss) for loss in agent_losses):
            mean = np.mean([loss.center for loss in agent_losses], axis=0)
            rows[i] = project_unit_ball(mean)
        elif all(isinstance(loss, LinearLoss) for loss in agent_losses):
            total = np.sum([loss.gradient for loss in agent_losses], axis=0)
            norm = float(np.linalg.norm(total))
            if norm > 0:
                rows[i] = -total / norm
        else:
            raise UnsupportedLossError(f"agent {i} mixes quadratic and linear losses")
    return TaskMatrix(rows)


def write_stream_csv(stream: RecordedStream, path: Path) -> Path:
    """Write a quadratic stream as `t, active_agent, z_1..z_d`."""
    if not all(isinstance(loss, QuadraticLoss) for loss in stream.losses):
        raise UnsupportedLossError("stream replay files hold quadratic losses only")
    header = ["t", "active_agent"] + [f"z_{k}" for k in range(1, stream.d + 1)]
    return write_csv(path, header, (
        [t, int(active)] + list(loss.center)
        for t, (active, loss) in enumerate(zip(stream.actives, stream.losses))))


def read_stream_csv(path: Path, n_agents: int = 0) -> RecordedStream:
    actives = []
    losses = []
    with Path(path).open(encoding="utf-8", newline="") as handle:
        reader = csv.reader(handle)
        header = next(reader, None)
        if not header or header[:2] != ["t", "active_agent"]:
            raise DomainError(f"{path} is not a loss stream replay file")
        for expected_t, row in enumerate(reader):
            if int(row[0]) != expected_t:
                raise DomainError(f"{path}: step {row[0]} out of order")
            actives.append(int(row[1]))
            losses.append(QuadraticLoss(np.array([float(v) for v in row[2:]])))
    return RecordedStream(np.array(actives, dtype=np.int64), tuple(losses), n_agents)
