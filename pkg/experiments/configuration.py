"""Experiment configuration: schema-checked JSON resolved into frozen values."""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Any, Mapping

import config as defaults
from experiments.contracts import (
    ContractName,
    ContractValidationError,
    validate_contract,
)
from mtcool.domain import ConfigurationError, WeightScheme


CONFIG_ROOT = Path(__file__).with_name("config")
DEFAULT_CONFIG = CONFIG_ROOT / "desk.v1.json"


class Algorithm(str, Enum):
    MT_COOL = "mt-cool"
    MT_COOL_HEDGE = "mt-cool-hedge"
    I_FTRL = "i-ftrl"
    ST_FTRL = "st-ftrl"
    DOPE = "dope"


class ActivationModel(str, Enum):
    STOCHASTIC = "stochastic"
    ROUND_ROBIN = "round_robin"


class LossKind(str, Enum):
    QUADRATIC = "quadratic"
    LINEAR = "linear"


@dataclass(frozen=True)
class Figure1Settings:
    sigma_target: float = defaults.FIGURE1_SIGMA_TARGET
    lambda_candidates: tuple[float, ...] = defaults.FIGURE1_LAMBDA_CANDIDATES
    checkpoints: int = defaults.FIGURE1_CHECKPOINTS

    def __post_init__(self):
        object.__setattr__(
            self, "lambda_candidates", tuple(float(v) for v in self.lambda_candidates))
        if not self.lambda_candidates:
            raise ConfigurationError("figure1.lambda_candidates is empty")
        if self.checkpoints < 1:
            raise ConfigurationError("figure1.checkpoints must be positive")


@dataclass(frozen=True)
class ExperimentConfig:
    n: int = defaults.DEFAULT_AGENTS
    p: float = defaults.DEFAULT_EDGE_PROBABILITY
    d: int = defaults.DEFAULT_DIMENSION
    lambdas: tuple[float, ...] = defaults.DEFAULT_LAMBDAS
    horizon: int = defaults.DEFAULT_HORIZON
    seeds: int = defaults.DEFAULT_SEEDS
    master_seed: int = 0
    algorithm: Algorithm = Algorithm.MT_COOL
    algorithms: tuple[Algorithm, ...] = (
        Algorithm.MT_COOL, Algorithm.I_FTRL, Algorithm.ST_FTRL)
    weight_scheme: WeightScheme = WeightScheme.UNIFORM
    activation: ActivationModel = ActivationModel.STOCHASTIC
    q: tuple[float, ...] | None = None
    q_min_lower_bound: float | None = None
    tau_constant: float = 12.0
    loss: LossKind = LossKind.QUADRATIC
    loss_noise_std: float = defaults.DEFAULT_LOSS_NOISE_STD
    epsilons: tuple[float, ...] = ()
    noise_seeds: int = defaults.DEFAULT_NOISE_SEEDS
    figure1: Figure1Settings = field(default_factory=Figure1Settings)
    workers: int = 1
    per_agent_columns: bool = False
    output_dir: str = "default"

    def __post_init__(self):
        set_ = object.__setattr__
        set_(self, "lambdas", tuple(float(v) for v in self.lambdas))
        set_(self, "algorithm", Algorithm(self.algorithm))
        set_(self, "algorithms", tuple(Algorithm(a) for a in self.algorithms))
        set_(self, "weight_scheme", WeightScheme(self.weight_scheme))
        set_(self, "activation", ActivationModel(self.activation))
        set_(self, "loss", LossKind(self.loss))
        set_(self, "epsilons", tuple(float(v) for v in self.epsilons))
        if self.q is not None:
            set_(self, "q", tuple(float(v) for v in self.q))
        if isinstance(self.figure1, Mapping):
            set_(self, "figure1", Figure1Settings(**self.figure1))

        if self.n < 1 or self.d < 1:
            raise ConfigurationError("n and d must be positive")
        if self.horizon < 1:
            raise ConfigurationError("horizon must be at least 1")
        if self.seeds < 1 or self.noise_seeds < 1:
            raise ConfigurationError("seed counts must be at least 1")
        if not self.lambdas:
            raise ConfigurationError("lambdas is empty")
        if self.q is not None and len(self.q) != self.n:
            raise ConfigurationError(f"q has {len(self.q)} entries for n={self.n}")
        if self.weight_scheme is WeightScheme.CUSTOM:
            raise ConfigurationError("custom weights are not available from configs")
        wants_private = (self.algorithm is Algorithm.DOPE
                         or Algorithm.DOPE in self.algorithms)
        if wants_private and self.loss is not LossKind.LINEAR:
            raise ConfigurationError(
                "dope runs are restricted to linear losses; set loss to 'linear'")

    @property
    def activation_q(self) -> tuple[float, ...]:
        """q for stochastic activations, uniform when unset."""
        return self.q if self.q is not None else tuple([1.0 / self.n] * self.n)

    def paper_scale(self) -> ExperimentConfig:
        return replace(self, horizon=defaults.PAPER_HORIZON, seeds=defaults.PAPER_SEEDS)

    def to_payload(self) -> dict[str, Any]:
        return {
            "schema_version": 1,
            "n": self.n,
            "p": self.p,
            "d": self.d,
            "lambdas": list(self.lambdas),
            "horizon": self.horizon,
            "seeds": self.seeds,
            "master_seed": self.master_seed,
            "algorithm": self.algorithm.value,
            "algorithms": [a.value for a in self.algorithms],
            "weight_scheme": self.weight_scheme.value,
            "activation": self.activation.value,
            "q": list(self.q) if self.q is not None else None,
            "q_min_lower_bound": self.q_min_lower_bound,
            "tau_constant": self.tau_constant,
            "loss": self.loss.value,
            "loss_noise_std": self.loss_noise_std,
            "epsilons": list(self.epsilons),
            "noise_seeds": self.noise_seeds,
            "figure1": {
                "sigma_target": self.figure1.sigma_target,
                "lambda_candidates": list(self.figure1.lambda_candidates),
                "checkpoints": self.figure1.checkpoints,
            },
            "workers": self.workers,
            "per_agent_columns": self.per_agent_columns,
            "output_dir": self.output_dir,
        }

    @classmethod
    def from_payload(cls, payload: Mapping[str, Any]) -> ExperimentConfig:
        """Validate a possibly partial payload and materialize the defaults."""
        validate_contract(ContractName.EXPERIMENT_CONFIG, payload)
        values = {key: value for key, value in payload.items() if key != "schema_version"}
        return cls(**values)


def _load_json(path: Path) -> dict[str, Any]:
    try:
        payload = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ContractValidationError(f"cannot load {path}: {exc}") from exc
    if not isinstance(payload, dict):
        raise ContractValidationError(f"{path} must contain a JSON object")
    return payload


def load_experiment_config(path: Path = DEFAULT_CONFIG) -> ExperimentConfig:
    return ExperimentConfig.from_payload(_load_json(Path(path)))


def dump_experiment_config(experiment: ExperimentConfig) -> str:
    return json.dumps(experiment.to_payload(), indent=2, sort_keys=True) + "\n"
