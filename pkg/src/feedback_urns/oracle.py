"""Exact ground truths, coded independently of the samplers and quadratures.

* :func:`dp_race` / :func:`dp_table` -- backward induction for the
  race-to-level-``R`` win probability of bin 1.
* :func:`cp_closed_form_p1` -- the ``p = 1`` rate function from elementary
  antiderivatives.
* :func:`enumerate_paths` -- exhaustive short-horizon path enumeration.
* :func:`lemma_b`, :func:`lemma_verify` -- brute-force checks of the
  unimodality / concentration lemma for ``C(m,n) rho^n a^n (1-rho)^(m-n)``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaln

from .core import DomainError, transition_prob_array

MAX_DP_TABLE_R = 8000
MAX_DP_ROLLING_R = 200_000


class BudgetError(RuntimeError):
    """A request exceeds a configured memory or enumeration budget."""


# --------------------------------------------------------------------------
# race-to-R dynamic programme


@dataclass(frozen=True)
class DpTable:
    """``W[n1, n2]`` = P(bin 1 reaches ``R`` balls before bin 2), 1 <= n1, n2 <= R.

    ``W[R, n2] = 1`` for ``n2 < R`` and ``W[n1, R] = 0`` for ``n1 < R``;
    ``W[R, R]`` and row/column 0 are unused (NaN).
    """

    R: int
    p: float
    W: np.ndarray = field(repr=False)

    def __call__(self, n1: int, n2: int) -> float:
        return float(self.W[n1, n2])


def _diagonal(d, R):
    lo = max(1, d - (R - 1))
    hi = min(R - 1, d - 1)
    return np.arange(lo, hi + 1)


def dp_table(R: int, p: float) -> DpTable:
    """Full ``(R+1) x (R+1)`` table, swept backwards over anti-diagonals."""
    if R < 2:
        raise DomainError("R must be >= 2")
    if R > MAX_DP_TABLE_R:
        raise BudgetError(f"full DP table with R={R} exceeds cap {MAX_DP_TABLE_R}")
    W = np.full((R + 1, R + 1), np.nan)
    W[R, 1:R] = 1.0
    W[1:R, R] = 0.0
    for d in range(2 * R - 2, 1, -1):
        n1 = _diagonal(d, R)
        n2 = d - n1
        q = transition_prob_array(n1, n2, p)
        W[n1, n2] = q * W[n1 + 1, n2] + (1.0 - q) * W[n1, n2 + 1]
    W.setflags(write=False)
    return DpTable(R=R, p=p, W=W)


def dp_race(x: int, y: int, R: int, p: float) -> float:
    """Win probability of the race to ``R`` from ``(x, y)`` with O(R) memory.

    Two rolling anti-diagonals indexed by ``n1``; the diagonal ``d`` holds
    states with ``n1 + n2 = d``.
    """
    if not (1 <= x < R and 1 <= y < R):
        raise DomainError(f"need 1 <= x, y < R, got ({x}, {y}), R={R}")
    if R > MAX_DP_ROLLING_R:
        raise BudgetError(f"R={R} exceeds cap {MAX_DP_ROLLING_R}")
    target = x + y
    # prev[n1] holds W(n1, d+1-n1) for the diagonal below the one being filled
    prev = np.full(R + 2, np.nan)
    cur = np.full(R + 2, np.nan)
    d = 2 * R - 1
    # diagonal 2R-1: (R-1, R) -> 0 and (R, R-1) -> 1
    prev[R - 1] = 0.0
    prev[R] = 1.0
    for d in range(2 * R - 2, target - 1, -1):
        cur.fill(np.nan)
        n1 = _diagonal(d, R)
        n2 = d - n1
        q = transition_prob_array(n1, n2, p)
        cur[n1] = q * prev[n1 + 1] + (1.0 - q) * prev[n1]
        # boundary states on this diagonal
        if d - R >= 1:
            cur[R] = 1.0
            cur[d - R] = 0.0
        prev, cur = cur, prev
    return float(prev[x])


def dp_recurrence_residual(table: DpTable) -> float:
    """Max one-step recurrence residual over interior states."""
    R = table.R
    n1, n2 = np.meshgrid(np.arange(1, R), np.arange(1, R), indexing="ij")
    q = transition_prob_array(n1, n2, table.p)
    W = table.W
    res = W[1:R, 1:R] - (q * W[2:R + 1, 1:R] + (1 - q) * W[1:R, 2:R + 1])
    return float(np.max(np.abs(res)))


# --------------------------------------------------------------------------
# p = 1 closed forms


def _check_p1(alpha, rho):
    if not 0.0 < rho < 1.0:
        raise DomainError(f"rho must lie in (0, 1), got {rho}")
    if not 0.0 < alpha < 0.5:
        raise DomainError(f"alpha must lie in (0, 1/2), got {alpha}")


def antiderivative_head(u, rho):
    """Antiderivative of ``log(1 + rho/u)``."""
    return u * math.log1p(rho / u) + rho * math.log(u + rho)


def antiderivative_tail(u, rho):
    """Antiderivative of ``log(1 - rho^2/u^2)`` for ``u > rho``."""
    return u * math.log1p(-(rho / u) ** 2) + rho * math.log((u + rho) / (u - rho))


def cp_closed_form_p1(alpha: float, rho: float) -> float:
    """``F_1(rho, alpha)`` from elementary antiderivatives."""
    _check_p1(alpha, rho)
    x = alpha / (1.0 - alpha)
    head = -(antiderivative_head(1.0, rho) - antiderivative_head(x, rho))
    # antiderivative_tail -> 0 as u -> inf
    tail = antiderivative_tail(1.0, rho)
    return (1.0 - alpha) * (head + tail)


def dF_drho_closed_form_p1(alpha: float, rho: float) -> float:
    _check_p1(alpha, rho)
    x = alpha / (1.0 - alpha)
    return (1.0 - alpha) * (-math.log((1.0 + rho) / (x + rho)) + math.log((1.0 + rho) / (1.0 - rho)))


def rho_star_closed_form_p1(alpha: float) -> float:
    # root of (x + rho) = (1 - rho) with x = alpha/(1-alpha)
    x = alpha / (1.0 - alpha)
    return (1.0 - x) / 2.0


def c1_entropy(alpha: float) -> float:
    """``H(alpha) - log 2``: the p = 1 decay rate via the Beta limit of the Polya urn."""
    return -alpha * math.log(alpha) - (1 - alpha) * math.log1p(-alpha) - math.log(2.0)


# --------------------------------------------------------------------------
# path enumeration


@dataclass(frozen=True)
class PathDistribution:
    probs: dict
    path_counts: dict

    @property
    def total_mass(self) -> float:
        return math.fsum(self.probs.values())


def enumerate_paths(x: int, y: int, p: float, k: int) -> PathDistribution:
    """Exact law of the bin-1 increment over ``k`` steps, by summing all 2^k paths."""
    if k > 20:
        raise BudgetError("path enumeration limited to k <= 20")
    if k < 0:
        raise DomainError("k must be >= 0")
    if x < 1 or y < 1:
        raise DomainError("start counts must be >= 1")
    if k == 0:
        return PathDistribution({0: 1.0}, {0: 1})
    codes = np.arange(2 ** k, dtype=np.int64)
    bits = (codes[:, None] >> np.arange(k)) & 1  # bit i = ball i goes to bin 1
    prob = np.ones(2 ** k)
    n1 = np.full(2 ** k, x, dtype=np.int64)
    n2 = np.full(2 ** k, y, dtype=np.int64)
    for i in range(k):
        q = transition_prob_array(n1, n2, p)
        b = bits[:, i].astype(bool)
        prob *= np.where(b, q, 1.0 - q)
        n1 += b
        n2 += ~b
    inc = bits.sum(axis=1)
    probs = {}
    counts = {}
    for j in range(k + 1):
        sel = inc == j
        probs[j] = math.fsum(prob[sel])
        counts[j] = int(sel.sum())
    return PathDistribution(probs, counts)


def enumerate_paths_bruteforce(x, y, p, k):
    """Scalar-loop version of :func:`enumerate_paths` (used in tests)."""
    out = {}
    for path in itertools.product((0, 1), repeat=k):
        n1, n2, pr = x, y, 1.0
        for b in path:
            q = n1 ** p / (n1 ** p + n2 ** p)
            pr *= q if b else 1 - q
            n1 += b
            n2 += 1 - b
        out[sum(path)] = out.get(sum(path), 0.0) + pr
    return out


# --------------------------------------------------------------------------
# binomial-type concentration lemma


@dataclass(frozen=True)
class LemmaCase:
    m: int
    rho: float
    a: float

    def __post_init__(self):
        if self.m < 2:
            raise DomainError("m must be >= 2")
        if not 0.0 < self.rho < 1.0:
            raise DomainError("rho must lie in (0, 1)")
        if not self.a > 0:
            raise DomainError("a must be positive")


def lemma_b(case: LemmaCase, n) -> np.ndarray | float:
    """``C(m,n) rho^n a^n (1-rho)^(m-n)`` through log-gamma arithmetic."""
    m, rho, a = case.m, case.rho, case.a
    n_arr = np.asarray(n)
    if np.any((n_arr < 0) | (n_arr > m)):
        raise DomainError("n must lie in [0, m]")
    logb = (
        gammaln(m + 1) - gammaln(n_arr + 1) - gammaln(m - n_arr + 1)
        + n_arr * math.log(rho * a) + (m - n_arr) * math.log1p(-rho)
    )
    out = np.exp(logb)
    return float(out) if np.ndim(out) == 0 else out


def lemma_n0(case: LemmaCase) -> int:
    """Predicted argmax ``ceil(x0 m)`` with ``x0 m = (rho a m - (1-rho)) / (rho a + 1 - rho)``.

    The value where ``b(n)/b(n+1)`` crosses 1; a near-integer ``x0 m`` is
    rounded before the ceiling so floating noise cannot push it up by one.
    """
    m, rho, a = case.m, case.rho, case.a
    v = (rho * a * m - (1.0 - rho)) / (rho * a + 1.0 - rho)
    r = round(v)
    if abs(v - r) <= 1e-9:
        return int(r)
    return int(math.ceil(v))


@dataclass
class LemmaReport:
    case: LemmaCase
    n0: int
    unimodal: bool
    argmax_ok: bool
    tail_ok: dict
    tail_sided_ok: dict
    skipped_tail: bool = False
    witnesses: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.unimodal and self.argmax_ok and all(self.tail_ok.values())

    @property
    def passed_sided(self) -> bool:
        return self.unimodal and self.argmax_ok and all(self.tail_sided_ok.values())


def lemma_verify(case: LemmaCase, K_grid=(0.5, 1.0, 2.0, 4.0), rtol: float = 1e-12) -> LemmaReport:
    """Exhaustively check the three claims of the lemma for one case.

    ``tail_ok`` is the bound exactly as stated, with the exponent
    ``K^2 / (2 (1 - n0/m))`` on both tails.  ``tail_sided_ok`` uses that
    exponent on the upper tail and ``K^2 / (2 n0/m)`` on the lower tail.
    """
    m = case.m
    if m > 10_000:
        raise BudgetError("lemma verification limited to m <= 1e4")
    n = np.arange(m + 1)
    b = lemma_b(case, n)
    bmax = b.max()
    witnesses = []

    d = np.diff(b)
    k = int(np.argmax(b))
    tol = rtol * bmax
    unimodal = bool(np.all(d[:k] >= -tol) and np.all(d[k:] <= tol))
    if not unimodal:
        witnesses.append(("unimodal", k))

    n0 = lemma_n0(case)
    argmax_ok = 0 <= n0 <= m and b[n0] >= bmax * (1.0 - rtol)
    if not argmax_ok:
        witnesses.append(("argmax", n0, k))

    tail_ok = {}
    tail_sided_ok = {}
    skipped = n0 >= m
    x = n0 / m
    for K in K_grid:
        if skipped:
            continue
        far = np.abs(n - n0) > K * math.sqrt(m)
        lhs = math.fsum(b[far])
        bound = m * b[n0] * math.exp(-K * K / (2.0 * (1.0 - x)))
        tail_ok[K] = lhs <= bound * (1.0 + rtol)
        if not tail_ok[K]:
            witnesses.append(("tail", K, lhs, bound))
        up = math.fsum(b[(n - n0) > K * math.sqrt(m)])
        lo = math.fsum(b[(n0 - n) > K * math.sqrt(m)])
        b_up = m * b[n0] * math.exp(-K * K / (2.0 * (1.0 - x)))
        b_lo = m * b[n0] * math.exp(-K * K / (2.0 * x)) if x > 0 else 0.0
        tail_sided_ok[K] = up <= b_up * (1.0 + rtol) and lo <= b_lo * (1.0 + rtol)
    return LemmaReport(case, n0, unimodal, bool(argmax_ok), tail_ok, tail_sided_ok,
                       skipped_tail=skipped, witnesses=witnesses)
