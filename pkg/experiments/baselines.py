"""Reference algorithms: independent learners and single-task cooperation.

Both keep one single-task KT-adaptive FTRL learner per agent, packed into a
KTLearnerBank of size-1 cliques.
"""

from __future__ import annotations

import logging

import numpy as np

from mtcool.clique_learner import KTLearnerBank
from mtcool.coolcn_engine import ActivationSchedule, StepRecord, Trajectory
from mtcool.domain import UnsupportedLossError
from mtcool.graph_core import GraphTopology
from mtcool.loss_stream import LossSource

logger = logging.getLogger(__name__)


def _single_task_bank(n: int, d: int, lipschitz: float) -> KTLearnerBank:
    return KTLearnerBank(np.ones(n, dtype=np.int64), d, lipschitz=lipschitz)


def run_iftrl(
    g: GraphTopology,
    schedule: ActivationSchedule,
    loss_source: LossSource,
    horizon: int,
    d: int,
    lipschitz: float = 1.0,
    keep_records: bool = False,
) -> Trajectory:
    """N KT-adaptive FTRL learners that never communicate."""
    bank = _single_task_bank(g.n, d, lipschitz)
    origin = np.zeros(1, dtype=np.int64)
    trajectory = Trajectory.allocate(horizon, d, keep_records)
    max_norm = 0.0
    for t in range(horizon):
        active = schedule.agent_at(t)
        learner = np.array([active])
        rows = bank.direction_rows(learner, origin)
        prediction = bank.bets[active] * rows[0]
        loss = loss_source.loss_at(t, active)
        gradient = loss.subgradient(prediction)
        bank.update(learner, origin, rows, gradient[None, :])
        max_norm = max(max_norm, float(np.linalg.norm(gradient)))
        trajectory.store(t, StepRecord(
            t, active, ((active, prediction),), prediction, loss.value(prediction),
            gradient, ((active, gradient),)))
    trajectory.max_gradient_norm = max_norm
    return trajectory


def run_stftrl(
    g: GraphTopology,
    schedule: ActivationSchedule,
    loss_source: LossSource,
    horizon: int,
    d: int,
    lipschitz: float = 1.0,
    keep_records: bool = False,
) -> Trajectory:
    """One shared-task model per agent, trained on all neighborhood losses.

    Each neighbor j of the active agent queries the loss oracle at its own
    current model and takes a KT-adaptive FTRL step on that gradient. The
    active agent predicts with its own model.
    """
    bank = _single_task_bank(g.n, d, lipschitz)
    members = [np.array(group, dtype=np.int64) for group in g.neighborhoods]
    own_slot = [group.index(agent) for agent, group in enumerate(g.neighborhoods)]
    trajectory = Trajectory.allocate(horizon, d, keep_records)
    max_norm = 0.0
    for t in range(horizon):
        active = schedule.agent_at(t)
        group = members[active]
        origins = np.zeros(len(group), dtype=np.int64)
        rows = bank.direction_rows(group, origins)
        models = bank.bets[group, None] * rows
        prediction = models[own_slot[active]]
        loss = loss_source.loss_at(t, active)
        if not callable(getattr(loss, "subgradient", None)):
            raise UnsupportedLossError(f"{type(loss).__name__} has no gradient oracle")
        # Row k is the oracle gradient at neighbor k's own model.
        oracle_gradients = loss.subgradient(models)
        gradient = oracle_gradients[own_slot[active]]
        bank.update(group, origins, rows, oracle_gradients)
        max_norm = max(max_norm, float(np.linalg.norm(gradient)))
        labels = g.neighborhoods[active]
        trajectory.store(t, StepRecord(
            t, active, tuple(zip(labels, models)), prediction, loss.value(prediction),
            gradient, tuple(zip(labels, oracle_gradients))))
    trajectory.max_gradient_norm = max_norm
    return trajectory
