"""Gaussian rewards computed from client loss traces, and the running
(Robbins-Monro) estimators of each client's expected reward."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Hashable, Iterable, Sequence

import numpy as np

from .errors import CohortTooSmallError, ConfigError, DomainError, ShapeError


@dataclass(frozen=True)
class LossTrace:
    """Losses observed by one client at each of its S local iterations."""

    client_id: Hashable
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 1 or values.size == 0:
            raise ShapeError(f"loss trace must be a non-empty 1-D sequence, got shape {values.shape}")
        if not np.all(np.isfinite(values)):
            raise DomainError(f"loss trace of client {self.client_id!r} has non-finite entries")
        if np.any(values < 0):
            raise DomainError(f"loss trace of client {self.client_id!r} has negative entries")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    def __len__(self):
        return self.values.size


@dataclass(frozen=True)
class RoundLossStats:
    """Per-iteration cohort mean and sample standard deviation.

    Both are held in units of ``scale``, the largest loss magnitude at each
    iteration. That leaves z-scores unchanged but keeps tiny spreads from
    underflowing; ``mean`` and ``std`` give them back in loss units.
    """

    unit_mean: np.ndarray
    unit_std: np.ndarray
    scale: np.ndarray
    cohort_size: int

    @property
    def mean(self) -> np.ndarray:
        return self.unit_mean * self.scale

    @property
    def std(self) -> np.ndarray:
        return self.unit_std * self.scale

    def __len__(self):
        return self.unit_mean.size


def compute_round_stats(traces: Iterable[LossTrace]) -> RoundLossStats:
    """Per-iteration cohort mean and unbiased sample standard deviation."""
    traces = list(traces)
    if len(traces) < 2:
        raise CohortTooSmallError(f"need at least 2 loss traces, got {len(traces)}")
    lengths = {len(t) for t in traces}
    if len(lengths) != 1:
        raise ShapeError(f"loss traces have mismatched lengths {sorted(lengths)}")
    losses = np.stack([t.values for t in traces])
    scale = np.abs(losses).max(axis=0)
    scale[scale == 0] = 1.0
    unit = losses / scale
    mean = unit.mean(axis=0)
    std = unit.std(axis=0, ddof=1)
    # identical columns: pin mean to the common value so rewards are exactly 1
    flat = np.ptp(losses, axis=0) == 0
    mean[flat] = unit[0, flat]
    std[flat] = 0.0
    return RoundLossStats(unit_mean=mean, unit_std=std, scale=scale, cohort_size=len(traces))


def gaussian_rewards(trace: LossTrace, stats: RoundLossStats) -> np.ndarray:
    """Gaussian kernel of each loss around the cohort mean, in (0, 1].

    Where the cohort spread is zero the kernel degenerates to the indicator
    of the mean: 1 if the loss equals it, 0 otherwise.
    """
    if len(trace) != len(stats):
        raise ShapeError(f"trace length {len(trace)} != stats length {len(stats)}")
    dev = trace.values / stats.scale - stats.unit_mean
    out = np.empty_like(dev)
    degenerate = stats.unit_std == 0
    live = ~degenerate
    z = dev[live] / stats.unit_std[live]
    out[live] = np.exp(-0.5 * z**2)
    out[degenerate] = np.where(dev[degenerate] == 0, 1.0, 0.0)
    return out


def average_reward(rewards: Sequence[float]) -> float:
    rewards = np.asarray(rewards, dtype=np.float64)
    if rewards.ndim != 1 or rewards.size == 0:
        raise ShapeError("cannot average an empty reward sequence")
    return float(rewards.mean())


def cohort_rewards(traces: Sequence[LossTrace]) -> dict:
    """Average Gaussian reward of every client in a cohort, keyed by client id."""
    stats = compute_round_stats(traces)
    return {t.client_id: average_reward(gaussian_rewards(t, stats)) for t in traces}


@dataclass
class GaussianWeightState:
    """Running estimates of each client's expected reward.

    Clients that were never sampled report a weight of exactly 0.
    """

    gamma: dict = field(default_factory=dict)
    sample_count: dict = field(default_factory=dict)

    def weight(self, client) -> float:
        return self.gamma.get(client, 0.0)

    def count(self, client) -> int:
        return self.sample_count.get(client, 0)

    def subset(self, clients) -> "GaussianWeightState":
        keep = set(clients)
        return GaussianWeightState(
            gamma={c: g for c, g in self.gamma.items() if c in keep},
            sample_count={c: n for c, n in self.sample_count.items() if c in keep},
        )


def check_alpha(alpha: float) -> float:
    if not 0.0 < alpha < 1.0:
        raise ConfigError(f"step size alpha must lie in (0, 1), got {alpha}")
    return float(alpha)


def update_weight(state: GaussianWeightState, client, omega: float, alpha: float) -> GaussianWeightState:
    """Convex step ``gamma <- (1 - alpha) * gamma + alpha * omega`` for one sampled client."""
    check_alpha(alpha)
    if not 0.0 < omega <= 1.0:
        raise DomainError(f"average reward must lie in (0, 1], got {omega}")
    state.gamma[client] = (1.0 - alpha) * state.weight(client) + alpha * omega
    state.sample_count[client] = state.count(client) + 1
    return state


class ConstantStep:
    """Constant step size; the default uses the participation rate."""

    def __init__(self, alpha: float):
        self.alpha = check_alpha(alpha)

    def __call__(self, t: int) -> float:
        return self.alpha


class HarmonicStep:
    """``alpha_t = 1 / (t + offset)`` for t = 1, 2, ...

    Square-summable but not summable. With ``offset=0`` the first step is
    1, which replaces the initial value by the first observation.
    """

    def __init__(self, offset: int = 0):
        self.offset = offset

    def __call__(self, t: int) -> float:
        return 1.0 / (t + self.offset)


def run_estimator(omegas: np.ndarray, step, gamma0=0.0) -> np.ndarray:
    """Apply the weight recursion along the last axis of ``omegas``.

    Vectorized over leading axes so many independent replicas run at once.
    ``step`` is a float or a callable ``t -> alpha_t`` (t starting at 1).
    Unlike :func:`update_weight` this does not restrict the step to (0, 1),
    so ``alpha_1 = 1`` is allowed. Returns the final weights.
    """
    omegas = np.asarray(omegas, dtype=np.float64)
    gamma = np.full(omegas.shape[:-1], gamma0, dtype=np.float64)
    for t in range(omegas.shape[-1]):
        a = step(t + 1) if callable(step) else step
        gamma = (1.0 - a) * gamma + a * omegas[..., t]
    return gamma
