"""Domain types for the two-bin balls-in-bins process with power feedback.

The process adds one ball per step; bin 1 receives it with probability
``f(n1) / (f(n1) + f(n2))`` where ``f(x) = x**p``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np


class DomainError(ValueError):
    """Raised when an argument lies outside the domain of an operation."""


@dataclass(frozen=True)
class PowerFeedback:
    """The feedback law ``f(x) = x**p``."""

    p: float

    def __post_init__(self):
        if not (math.isfinite(self.p) and self.p > 0):
            raise DomainError(f"feedback exponent must be positive and finite, got {self.p!r}")

    def evaluate(self, n):
        # exp(p ln n) in double precision; exact enough for n <= 1e7
        return np.exp(self.p * np.log(n))


@dataclass(frozen=True)
class UrnState:
    n1: int
    n2: int

    def __post_init__(self):
        if self.n1 < 1 or self.n2 < 1:
            raise DomainError(f"ball counts must be >= 1, got ({self.n1}, {self.n2})")

    @property
    def total(self) -> int:
        return self.n1 + self.n2


@dataclass(frozen=True)
class InitialCondition:
    """The ``[t, alpha]`` encoding: ``(ceil(alpha t), t - ceil(alpha t))``."""

    t: int
    alpha: float

    def __post_init__(self):
        if self.t < 2:
            raise DomainError(f"t must be >= 2, got {self.t}")
        if not 0.0 < self.alpha < 1.0:
            raise DomainError(f"alpha must lie in (0, 1), got {self.alpha}")
        x = self.bin1
        if x < 1 or self.t - x < 1:
            raise DomainError(f"[t={self.t}, alpha={self.alpha}] leaves an empty bin")

    @property
    def bin1(self) -> int:
        return ceil_mul(self.alpha, self.t)

    def to_state(self) -> UrnState:
        x = self.bin1
        return UrnState(x, self.t - x)


def ceil_mul(alpha: float, t: int) -> int:
    """``ceil(alpha * t)`` guarded against products like 0.35 * 20 = 7.000000000000001."""
    v = alpha * t
    r = round(v)
    if abs(v - r) <= 1e-9 * max(1.0, abs(v)):
        return int(r)
    return int(math.ceil(v))


class Regime(enum.Enum):
    MONOPOLY = "Monopoly"
    EVENTUAL_LEADERSHIP = "EventualLeadership"
    ALMOST_BALANCED = "AlmostBalanced"


@dataclass(frozen=True)
class Trajectory:
    """A sample path, stored as absolute bin-1 counts (entry 0 is the start)."""

    init: InitialCondition
    bin1_counts: np.ndarray
    start: UrnState | None = None

    def __post_init__(self):
        counts = np.asarray(self.bin1_counts, dtype=np.int64)
        if counts.ndim != 1 or counts.size == 0:
            raise ValueError("bin1_counts must be a non-empty 1-d sequence")
        d = np.diff(counts)
        if np.any((d != 0) & (d != 1)):
            raise ValueError("consecutive bin-1 counts must differ by 0 or 1")
        counts.setflags(write=False)
        object.__setattr__(self, "bin1_counts", counts)

    @property
    def n_steps(self) -> int:
        return self.bin1_counts.size - 1

    @property
    def total0(self) -> int:
        return self.start.total if self.start is not None else self.init.t

    def bin2_counts(self) -> np.ndarray:
        return self.total0 + np.arange(self.bin1_counts.size) - self.bin1_counts


def transition_prob_bin1(state: UrnState, fb: PowerFeedback) -> float:
    """Probability that the next ball joins bin 1.

    Computed as ``1 / (1 + (n2/n1)**p)`` so neither power is formed on its own.
    """
    n1, n2 = state.n1, state.n2
    if n1 <= 0 or n2 <= 0:
        raise DomainError("transition probability needs n1, n2 >= 1")
    return float(_q(np.float64(n1), np.float64(n2), fb.p))


def _q(n1, n2, p):
    # vectorised kernel; the larger count is divided out of both powers
    m = np.maximum(n1, n2)
    a = np.exp(p * np.log(n1 / m))
    b = np.exp(p * np.log(n2 / m))
    return a / (a + b)


def transition_prob_array(n1, n2, p: float) -> np.ndarray:
    """Vectorised :func:`transition_prob_bin1` over count arrays."""
    n1 = np.asarray(n1, dtype=np.float64)
    n2 = np.asarray(n2, dtype=np.float64)
    if np.any(n1 <= 0) or np.any(n2 <= 0):
        raise DomainError("transition probability needs n1, n2 >= 1")
    return _q(n1, n2, p)


def classify_regime(fb: PowerFeedback) -> Regime:
    # sum n^-p converges iff p > 1; sum n^-2p converges iff p > 1/2
    if fb.p > 1.0:
        return Regime.MONOPOLY
    if fb.p > 0.5:
        return Regime.EVENTUAL_LEADERSHIP
    return Regime.ALMOST_BALANCED


def fraction_at(traj: Trajectory, s: float) -> float:
    """Fraction of balls in bin 1 after ``ceil(s t)`` added balls."""
    if s < 0:
        raise DomainError("s must be non-negative")
    t = traj.init.t
    k = ceil_mul(s, t) if s > 0 else 0
    if k > traj.n_steps:
        raise IndexError(f"trajectory has {traj.n_steps} steps, fraction at s={s} needs {k}")
    return traj.bin1_counts[k] / (traj.total0 + k)
