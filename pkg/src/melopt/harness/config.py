"""JSON experiment configuration.

Every section is optional; omitted fields take the simulation defaults of
the model modules. Validation errors name the offending field path, e.g.
``solver.alpha``.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import List, Literal

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from ..edge import (
    DEFAULT_CAPACITANCE,
    DEFAULT_DISTANCE_RANGE_M,
    DEFAULT_FREQUENCY_POOL_HZ,
    MNIST_LAYERS,
    ChannelModel,
    TaskSpec,
    TopologyConfig,
    flops_per_sample,
    weight_count,
)
from ..errors import ConfigError, DomainError
from ..learning import LearningParams
from ..problem import METHODS, SolverConfig

AXES = ("learners", "orchestrators", "T_max", "alpha")

_CHANNEL = ChannelModel()
_TASK = TaskSpec()
_LEARN = LearningParams()
_SOLVER = SolverConfig()


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class ChannelSection(_Section):
    bandwidth: float = Field(_CHANNEL.bandwidth, gt=0)
    tx_power: float = Field(_CHANNEL.tx_power, gt=0)
    noise_variance: float = Field(_CHANNEL.noise_variance, gt=0)
    pathloss_exponent: float = Field(_CHANNEL.pathloss_exponent, ge=2)
    fading: float = Field(_CHANNEL.fading, gt=0)


class TaskSection(_Section):
    dataset_size: int = Field(_TASK.dataset_size, ge=1)
    feature_len: int = Field(_TASK.feature_len, ge=1)
    bits_per_feature: Literal[8, 16, 32, 64] = _TASK.bits_per_feature
    bits_per_weight: Literal[8, 16, 32, 64] = _TASK.bits_per_weight
    layers: List[int] = Field(default_factory=lambda: list(MNIST_LAYERS), min_length=2)

    @field_validator("layers")
    @classmethod
    def _positive_layers(cls, v):
        if any(x < 1 for x in v):
            raise ValueError("layer widths must be positive")
        return v

    def build(self) -> TaskSpec:
        return TaskSpec(
            dataset_size=self.dataset_size,
            feature_len=self.feature_len,
            bits_per_feature=self.bits_per_feature,
            bits_per_weight=self.bits_per_weight,
            weight_count=weight_count(self.layers),
            compute_complexity=flops_per_sample(self.layers),
        )


class TopologySection(_Section):
    distance_range: List[float] = Field(default_factory=lambda: list(DEFAULT_DISTANCE_RANGE_M), min_length=2, max_length=2)
    frequency_pool: List[float] = Field(default_factory=lambda: list(DEFAULT_FREQUENCY_POOL_HZ), min_length=1)
    capacitance: float = Field(DEFAULT_CAPACITANCE, gt=0)
    rayleigh_fading: bool = False
    include_dataset_in_compute: bool = False

    @field_validator("distance_range")
    @classmethod
    def _ordered(cls, v):
        if not 0 < v[0] <= v[1]:
            raise ValueError("distance_range must satisfy 0 < low <= high")
        return v

    @field_validator("frequency_pool")
    @classmethod
    def _positive(cls, v):
        if any(f <= 0 for f in v):
            raise ValueError("frequencies must be positive")
        return v


class LearningSection(_Section):
    eta: float = Field(_LEARN.eta, gt=0)
    phi: float = Field(_LEARN.phi, gt=0)
    delta: float = Field(_LEARN.delta, gt=0)
    beta: float = Field(_LEARN.beta, gt=0)
    tau_max: int = Field(_LEARN.tau_max, ge=1)
    T_max: float = Field(_LEARN.T_max, gt=0)
    c2_mode: Literal["unit", "fitted"] = "unit"
    fit_G_max: int = Field(50, ge=1)

    @model_validator(mode="after")
    def _rate(self):
        if self.eta * self.beta > 1:
            raise ValueError("eta * beta must not exceed 1")
        return self

    def build(self) -> LearningParams:
        return LearningParams(
            eta=self.eta, phi=self.phi, delta=self.delta, beta=self.beta, tau_max=self.tau_max, T_max=self.T_max
        )


class SolverSection(_Section):
    alpha: float = Field(_SOLVER.alpha, ge=0, le=1)
    epsilon_assoc: float = Field(_SOLVER.epsilon_assoc, gt=0)
    tol: float = Field(_SOLVER.tol, gt=0)
    max_stages: int = Field(_SOLVER.max_stages, ge=0)
    max_nodes: int = Field(_SOLVER.max_nodes, ge=1)
    method: Literal[METHODS] = _SOLVER.method
    lambda_floor: float = Field(_SOLVER.lambda_floor, gt=0, lt=1)
    allocation_floor: float = Field(_SOLVER.allocation_floor, gt=0, lt=1)
    copt_polish: bool = _SOLVER.copt_polish
    sp3_scaling: Literal["global", "local"] = _SOLVER.sp3_scaling
    aat_max_alternations: int = Field(_SOLVER.aat_max_alternations, ge=1)
    aat_tol: float = Field(_SOLVER.aat_tol, ge=0)
    oracle_guard: int = Field(_SOLVER.oracle_guard, ge=1)

    def build(self, **overrides) -> SolverConfig:
        return SolverConfig(**{**self.model_dump(), **overrides})


class SweepSection(_Section):
    axis: Literal[AXES] = "learners"
    values: List[float] = Field(default_factory=lambda: [15, 25, 50], min_length=1)

    @model_validator(mode="after")
    def _sorted(self):
        if list(self.values) != sorted(self.values):
            raise ValueError("sweep values must be sorted ascending")
        if self.axis in ("learners", "orchestrators") and any(int(v) != v or v < 1 for v in self.values):
            raise ValueError(f"{self.axis} values must be positive integers")
        if self.axis == "alpha" and any(not 0 <= v <= 1 for v in self.values):
            raise ValueError("alpha values must lie in [0, 1]")
        if self.axis == "T_max" and any(v <= 0 for v in self.values):
            raise ValueError("T_max values must be positive")
        return self


class ExperimentConfig(_Section):
    seed: int = Field(0, ge=0)
    orchestrators: int = Field(3, ge=1)
    learners: int = Field(50, ge=1)
    channel: ChannelSection = Field(default_factory=ChannelSection)
    tasks: List[TaskSection] = Field(default_factory=lambda: [TaskSection()], min_length=1)
    topology: TopologySection = Field(default_factory=TopologySection)
    learning: LearningSection = Field(default_factory=LearningSection)
    solver: SolverSection = Field(default_factory=SolverSection)
    sweep: SweepSection = Field(default_factory=SweepSection)
    monte_carlo_runs: int = Field(50, ge=1)
    methods: List[Literal[METHODS]] = Field(default_factory=lambda: list(METHODS), min_length=1)

    @model_validator(mode="after")
    def _tasks_match(self):
        if len(self.tasks) not in (1, self.orchestrators):
            raise ValueError("tasks must hold one shared entry or one per orchestrator")
        return self

    def topology_config(self, n_learners=None, n_orchestrators=None) -> TopologyConfig:
        n_o = self.orchestrators if n_orchestrators is None else int(n_orchestrators)
        tasks = [t.build() for t in self.tasks]
        if len(tasks) != 1 and len(tasks) != n_o:
            tasks = tasks[:1]  # orchestrator sweeps fall back to the first task
        t = self.topology
        return TopologyConfig(
            n_orchestrators=n_o,
            n_learners=self.learners if n_learners is None else int(n_learners),
            distance_range=tuple(t.distance_range),
            frequency_pool=tuple(t.frequency_pool),
            capacitance=t.capacitance,
            rayleigh_fading=t.rayleigh_fading,
            include_dataset_in_compute=t.include_dataset_in_compute,
            channel=ChannelModel(**self.channel.model_dump()),
            tasks=tuple(tasks),
        )


def _field_path(err) -> str:
    return ".".join(str(p) for p in err["loc"]) or "<root>"


def parse_config(data) -> ExperimentConfig:
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError("<root>: config must be a JSON object")
    try:
        cfg = ExperimentConfig.model_validate(data)
        # enforce the model modules' own invariants too
        cfg.topology_config()
        cfg.learning.build()
        cfg.solver.build()
    except ValidationError as exc:
        first = exc.errors()[0]
        raise ConfigError(f"{_field_path(first)}: {first['msg']}") from None
    except DomainError as exc:
        raise ConfigError(str(exc)) from None
    return cfg


def load_config(path) -> ExperimentConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"<file>: cannot read {path}: {exc.strerror}") from None
    if not text.strip():
        return parse_config({})
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"<file>: invalid JSON at line {exc.lineno}: {exc.msg}") from None
    return parse_config(data)


def dump_config(cfg: ExperimentConfig) -> str:
    """Canonical JSON: every field present, keys sorted, two-space indent."""
    return json.dumps(cfg.model_dump(mode="json"), indent=2, sort_keys=True) + "\n"


def with_overrides(cfg: ExperimentConfig, **changes) -> ExperimentConfig:
    """Copy with dotted-path overrides, re-validated, e.g. ``solver__alpha=0.2``."""
    data = cfg.model_dump(mode="json")
    for key, value in changes.items():
        node = data
        parts = key.split("__")
        for p in parts[:-1]:
            node = node[p]
        node[parts[-1]] = value
    return parse_config(data)

