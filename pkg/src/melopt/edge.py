"""Wireless and compute model of the edge system.

Channel gain follows a power-law path loss with an amplitude fading
coefficient, rates follow Shannon capacity, and per-pair time/energy costs
are folded into six link coefficients so that for allocation fraction n,
local iterations tau and global cycles G:

    t = G * (A2 * tau * n + A1 * n + A0)
    E = G * (Z2 * tau * n + Z1 * n + Z0)
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, UnreachableLearnerError

# Table-1 style defaults
DEFAULT_FREQUENCY_POOL_HZ = (0.5e9, 0.7e9, 1.2e9, 1.8e9)
DEFAULT_DISTANCE_RANGE_M = (5.0, 50.0)
DEFAULT_CAPACITANCE = 1e-19
MNIST_LAYERS = (784, 256, 256, 10)

_VALID_BITS = (8, 16, 32, 64)


@dataclass(frozen=True)
class ChannelModel:
    bandwidth: float = 5e6  # Hz
    tx_power: float = 0.2  # W
    noise_variance: float = 1e-13  # W
    pathloss_exponent: float = 3.0
    fading: float = 1.0

    def __post_init__(self):
        for name in ("bandwidth", "tx_power", "noise_variance", "pathloss_exponent", "fading"):
            if not getattr(self, name) > 0:
                raise DomainError(f"ChannelModel.{name} must be positive")
        if self.pathloss_exponent < 2:
            raise DomainError("ChannelModel.pathloss_exponent must be >= 2")


def weight_count(layers) -> int:
    """Number of weights of a fully connected stack, biases excluded."""
    return int(sum(a * b for a, b in zip(layers[:-1], layers[1:])))


def flops_per_sample(layers) -> int:
    """Two operations per multiply-accumulate of one forward pass."""
    return 2 * weight_count(layers)


@dataclass(frozen=True)
class TaskSpec:
    """Learning task owned by one orchestrator."""

    dataset_size: int = 60_000
    feature_len: int = 784
    bits_per_feature: int = 32
    bits_per_weight: int = 32
    weight_count: int = weight_count(MNIST_LAYERS)
    compute_complexity: int = flops_per_sample(MNIST_LAYERS)

    def __post_init__(self):
        for name in ("dataset_size", "feature_len", "weight_count", "compute_complexity"):
            value = getattr(self, name)
            if int(value) != value or value < 1:
                raise DomainError(f"TaskSpec.{name} must be a positive integer")
        for name in ("bits_per_feature", "bits_per_weight"):
            if getattr(self, name) not in _VALID_BITS:
                raise DomainError(f"TaskSpec.{name} must be one of {_VALID_BITS}")

    @classmethod
    def from_layers(cls, layers, **kwargs) -> "TaskSpec":
        return cls(weight_count=weight_count(layers), compute_complexity=flops_per_sample(layers), **kwargs)

    @property
    def weight_bits(self) -> int:
        return self.weight_count * self.bits_per_weight

    @property
    def dataset_bits(self) -> int:
        return self.dataset_size * self.feature_len * self.bits_per_feature


@dataclass(frozen=True)
class LearnerSpec:
    cpu_freq: float
    distances: tuple  # meters, one per orchestrator
    capacitance: float = DEFAULT_CAPACITANCE

    def __post_init__(self):
        if not self.cpu_freq > 0:
            raise DomainError("LearnerSpec.cpu_freq must be positive")
        if not self.capacitance > 0:
            raise DomainError("LearnerSpec.capacitance must be positive")
        object.__setattr__(self, "distances", tuple(float(d) for d in self.distances))
        if any(not d > 0 for d in self.distances):
            raise DomainError("LearnerSpec.distances must be positive")


@dataclass(frozen=True)
class LinkCoefficients:
    A0: float
    A1: float
    A2: float
    Z0: float
    Z1: float
    Z2: float


def channel_gain(d: float, nu: float, g: float) -> float:
    if not d > 0:
        raise DomainError(f"distance must be positive, got {d}")
    return d ** (-nu) * g**2


def achievable_rate(channel: ChannelModel, gain: float) -> float:
    return channel.bandwidth * math.log2(1.0 + gain * channel.tx_power / channel.noise_variance)


def link_coefficients(
    task: TaskSpec,
    learner: LearnerSpec,
    channel: ChannelModel,
    rate: float,
    include_dataset_in_compute: bool = False,
) -> LinkCoefficients:
    """Fold the communication and computation models of one pair.

    With ``include_dataset_in_compute`` the computation energy coefficient is
    ``mu * N * C_w * f`` (energy of a full pass over the dataset) instead of
    the per-sample ``mu * C_w * f``.
    """
    if not rate > 0:
        raise UnreachableLearnerError(f"non-positive rate {rate}")
    a0 = 2.0 * task.weight_bits / rate
    a1 = task.dataset_bits / rate
    a2 = task.dataset_size * task.compute_complexity / learner.cpu_freq
    z2 = learner.capacitance * task.compute_complexity * learner.cpu_freq
    if include_dataset_in_compute:
        z2 *= task.dataset_size
    return LinkCoefficients(
        A0=a0, A1=a1, A2=a2, Z0=channel.tx_power * a0, Z1=channel.tx_power * a1, Z2=z2
    )


def _check_schedule(n, tau, G):
    if not 0.0 <= n <= 1.0:
        raise DomainError(f"allocation fraction must lie in [0, 1], got {n}")
    if tau < 1:
        raise DomainError(f"tau must be >= 1, got {tau}")
    if G < 1:
        raise DomainError(f"G must be >= 1, got {G}")


def train_time(c: LinkCoefficients, n: float, tau: float, G: float) -> float:
    _check_schedule(n, tau, G)
    return G * (c.A2 * tau * n + c.A1 * n + c.A0)


def train_energy(c: LinkCoefficients, n: float, tau: float, G: float) -> float:
    _check_schedule(n, tau, G)
    return G * (c.Z2 * tau * n + c.Z1 * n + c.Z0)


@dataclass(frozen=True, eq=False)
class SystemTopology:
    """Orchestrator tasks, learner devices and the pairwise coefficient tables.

    The arrays ``A0 .. Z2`` have shape ``(n_learners, n_orchestrators)``.
    """

    tasks: tuple
    learners: tuple
    channel: ChannelModel
    fading: np.ndarray  # (L, O) amplitude coefficients
    include_dataset_in_compute: bool = False
    coefficients: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if not self.tasks:
            raise DomainError("topology needs at least one orchestrator")
        if not self.learners:
            raise DomainError("topology needs at least one learner")
        n_o = len(self.tasks)
        for i, ln in enumerate(self.learners):
            if len(ln.distances) != n_o:
                raise DomainError(f"learner {i} has {len(ln.distances)} distances for {n_o} orchestrators")
        fading = np.array(self.fading, dtype=float)
        if fading.shape != (len(self.learners), n_o):
            raise DomainError("fading table shape must be (learners, orchestrators)")
        fading.setflags(write=False)
        object.__setattr__(self, "fading", fading)

        tables = {k: np.empty((len(self.learners), n_o)) for k in ("A0", "A1", "A2", "Z0", "Z1", "Z2", "rate")}
        for l, ln in enumerate(self.learners):
            for o, task in enumerate(self.tasks):
                gain = channel_gain(ln.distances[o], self.channel.pathloss_exponent, fading[l, o])
                rate = achievable_rate(self.channel, gain)
                c = link_coefficients(task, ln, self.channel, rate, self.include_dataset_in_compute)
                tables["rate"][l, o] = rate
                for k in ("A0", "A1", "A2", "Z0", "Z1", "Z2"):
                    tables[k][l, o] = getattr(c, k)
        for arr in tables.values():
            arr.setflags(write=False)
        object.__setattr__(self, "coefficients", tables)

    @property
    def n_learners(self) -> int:
        return len(self.learners)

    @property
    def n_orchestrators(self) -> int:
        return len(self.tasks)

    @property
    def distances(self) -> np.ndarray:
        return np.array([ln.distances for ln in self.learners])

    @property
    def frequencies(self) -> np.ndarray:
        return np.array([ln.cpu_freq for ln in self.learners])

    def _table(self, key):
        return self.coefficients[key]

    A0 = property(lambda self: self._table("A0"))
    A1 = property(lambda self: self._table("A1"))
    A2 = property(lambda self: self._table("A2"))
    Z0 = property(lambda self: self._table("Z0"))
    Z1 = property(lambda self: self._table("Z1"))
    Z2 = property(lambda self: self._table("Z2"))
    rate = property(lambda self: self._table("rate"))

    def link(self, l: int, o: int) -> LinkCoefficients:
        t = self.coefficients
        return LinkCoefficients(*(float(t[k][l, o]) for k in ("A0", "A1", "A2", "Z0", "Z1", "Z2")))

    def gain(self, l: int, o: int) -> float:
        return channel_gain(
            self.learners[l].distances[o], self.channel.pathloss_exponent, self.fading[l, o]
        )


@dataclass(frozen=True)
class TopologyConfig:
    n_orchestrators: int = 3
    n_learners: int = 50
    distance_range: tuple = DEFAULT_DISTANCE_RANGE_M
    frequency_pool: tuple = DEFAULT_FREQUENCY_POOL_HZ
    capacitance: float = DEFAULT_CAPACITANCE
    rayleigh_fading: bool = False
    include_dataset_in_compute: bool = False
    channel: ChannelModel = ChannelModel()
    tasks: tuple = (TaskSpec(),)  # one entry is shared by every orchestrator


def generate_topology(config: TopologyConfig, seed: int) -> SystemTopology:
    """Sample learner frequencies and pair distances.

    Distances are drawn i.i.d. per (learner, orchestrator) pair; no planar
    geometry is involved. With Rayleigh fading the squared amplitude is a
    unit-mean exponential variate, otherwise the configured constant.
    """
    if config.n_orchestrators < 1 or config.n_learners < 1:
        raise DomainError("need at least one orchestrator and one learner")
    if len(config.tasks) not in (1, config.n_orchestrators):
        raise DomainError("tasks must hold one shared spec or one per orchestrator")
    rng = np.random.default_rng(seed)
    n_l, n_o = config.n_learners, config.n_orchestrators
    d_lo, d_hi = config.distance_range
    distances = rng.uniform(d_lo, d_hi, size=(n_l, n_o))
    freqs = rng.choice(np.asarray(config.frequency_pool, dtype=float), size=n_l)
    if config.rayleigh_fading:
        fading = np.sqrt(rng.exponential(1.0, size=(n_l, n_o)))
    else:
        fading = np.full((n_l, n_o), config.channel.fading)
    tasks = config.tasks * n_o if len(config.tasks) == 1 else tuple(config.tasks)
    learners = tuple(
        LearnerSpec(cpu_freq=float(freqs[l]), distances=tuple(distances[l]), capacitance=config.capacitance)
        for l in range(n_l)
    )
    return SystemTopology(
        tasks=tuple(tasks),
        learners=learners,
        channel=config.channel,
        fading=fading,
        include_dataset_in_compute=config.include_dataset_in_compute,
    )
