"""Shared error vocabulary and enums for the multitask learning library."""

from __future__ import annotations

from enum import Enum


class WeightScheme(str, Enum):
    UNIFORM = "uniform"
    STOCHASTIC_CONDITIONAL = "stochastic_conditional"
    DELEGATION = "delegation"
    CUSTOM = "custom"


class LearnerKind(str, Enum):
    HEDGE = "hedge"
    KT = "kt"


class ProjectionMode(str, Enum):
    """Feasible set used by the Hedge experts."""

    BALL = "ball"
    EXACT = "exact"


class DomainError(ValueError):
    """Base class for rejected multitask-learning operations."""


class GraphSizeError(DomainError):
    """Raised when an exact combinatorial computation exceeds its size cap."""


class DominationError(DomainError):
    """Raised when a vertex set fails to dominate the graph."""

    def __init__(self, vertex: int):
        super().__init__(f"vertex {vertex} is not covered by the dominating set")
        self.vertex = vertex


class EdgeListError(DomainError):
    """Raised for malformed edge-list text; carries the 1-based line number."""

    def __init__(self, line_number: int, message: str):
        super().__init__(f"line {line_number}: {message}")
        self.line_number = line_number


class UnsupportedLossError(DomainError):
    """Raised when an operation is asked to handle a loss type it cannot."""


class LearnerStateError(DomainError):
    """Raised when a learner is driven outside its valid state."""


class WeightMatrixError(DomainError):
    """Raised when a weight matrix is not row-stochastic on the neighborhoods."""


class ScheduleExhaustedError(DomainError):
    """Raised when an activation schedule has no agent for the requested step."""


class StreamExhaustedError(DomainError):
    """Raised when a recorded loss stream has no loss for the requested step."""


class CapacityError(DomainError):
    """Raised when an aggregation tree receives more values than its horizon."""


class ConfigurationError(DomainError):
    """Raised for parameter combinations that cannot be run."""


class NumericError(DomainError):
    """Raised when a numerical factorization fails."""
