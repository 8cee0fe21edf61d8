"""Fixed-step RK4 for ``dA/ds = g_p(A)``, ``A(0) = alpha0``.

``g_p`` needs a root-find and several quadratures per evaluation, so it is
tabulated once on a uniform grid and replaced by a cubic spline.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.interpolate import CubicHermiteSpline, CubicSpline

from .ratefn import DEFAULT_QUAD, QuadConfig, rate_profile

DEFAULT_STOP_MARGIN = 1e-4
DEFAULT_GRID = 512


class OdeError(RuntimeError):
    pass


class GpTable:
    """Cubic-spline interpolant of ``g_p`` on ``[lo, hi]`` (uniform grid)."""

    def __init__(self, p: float, lo: float, hi: float, n: int = DEFAULT_GRID,
                 cfg: QuadConfig = DEFAULT_QUAD):
        if not 0.0 < lo < hi < 0.5:
            raise OdeError(f"g_p table range [{lo}, {hi}] must lie inside (0, 1/2)")
        self.p, self.lo, self.hi, self.n = p, lo, hi, n
        self.alphas = np.linspace(lo, hi, n)
        self.values = np.array([rate_profile(float(a), p, cfg).g_p for a in self.alphas])
        self.spline = CubicSpline(self.alphas, self.values)
        self._dx = (hi - lo) / (n - 1)
        # per-interval cubic coefficients, highest power first
        self._c = [tuple(row) for row in self.spline.c.T.tolist()]

    def __call__(self, a: float) -> float:
        i = int((a - self.lo) / self._dx)
        if i < 0:
            i = 0
        elif i > self.n - 2:
            i = self.n - 2
        d = a - self.alphas[i]
        c3, c2, c1, c0 = self._c[i]
        return ((c3 * d + c2) * d + c1) * d + c0

    def max_spline_error(self, n_check: int = 32, cfg: QuadConfig = DEFAULT_QUAD) -> float:
        """Largest deviation from direct evaluation at midpoints of random cells."""
        rng = np.random.default_rng(0)
        cells = rng.choice(self.n - 1, size=n_check, replace=False)
        mids = self.alphas[cells] + 0.5 * self._dx
        return max(abs(self(float(a)) - rate_profile(float(a), self.p, cfg).g_p) for a in mids)


@lru_cache(maxsize=32)
def gp_table(p: float, lo: float, hi: float, n: int = DEFAULT_GRID,
             cfg: QuadConfig = DEFAULT_QUAD) -> GpTable:
    return GpTable(p, lo, hi, n, cfg)


def default_table(alpha0: float, p: float, stop_margin: float = DEFAULT_STOP_MARGIN) -> GpTable:
    lo = max(alpha0 - 0.01, 1e-3)
    hi = 0.5 - stop_margin / 2
    return gp_table(p, round(lo, 12), round(hi, 12))


@dataclass(frozen=True)
class OdeSolution:
    alpha0: float
    p: float
    step: float
    s: np.ndarray = field(repr=False)
    A: np.ndarray = field(repr=False)
    slopes: np.ndarray = field(repr=False)
    terminated_at_half: bool
    s_end: float

    @property
    def nodes(self):
        return list(zip(self.s.tolist(), self.A.tolist()))


def solve_A(alpha0: float, p: float, s_max: float, h: float,
            stop_margin: float = DEFAULT_STOP_MARGIN, table: GpTable | None = None) -> OdeSolution:
    """Classic RK4 with fixed step ``h`` until ``s_max`` or ``A >= 1/2 - stop_margin``."""
    if not h > 0:
        raise OdeError("step must be positive")
    if not 0.0 < stop_margin < 0.25:
        raise OdeError("stop_margin must lie in (0, 1/4)")
    if not 0.0 < alpha0 < 0.5:
        raise OdeError("alpha0 must lie in (0, 1/2)")
    g = table if table is not None else default_table(alpha0, p, stop_margin)
    n_max = int(math.floor(s_max / h + 1e-9))
    A = [alpha0]
    slopes = [g(alpha0)]
    a = alpha0
    stop = 0.5 - stop_margin
    terminated = a >= stop
    k = 0
    while k < n_max and not terminated:
        k1 = slopes[-1]
        k2 = g(a + 0.5 * h * k1)
        k3 = g(a + 0.5 * h * k2)
        k4 = g(a + h * k3)
        a = a + h * (k1 + 2 * k2 + 2 * k3 + k4) / 6.0
        if not alpha0 <= a < 0.5:
            raise OdeError(f"A left [alpha0, 1/2) at s={(k + 1) * h}: {a}")
        A.append(a)
        slopes.append(g(a))
        k += 1
        terminated = a >= stop
    s = np.arange(len(A)) * h
    return OdeSolution(alpha0, p, h, s, np.array(A), np.array(slopes), terminated, float(s[-1]))


def eval_A(sol: OdeSolution, s) -> float | np.ndarray:
    """Cubic Hermite dense output through the nodes with slopes ``g_p(A_k)``."""
    s_arr = np.asarray(s, dtype=np.float64)
    tol = 1e-12 * max(1.0, sol.s_end)
    if np.any(s_arr < -tol) or np.any(s_arr > sol.s_end + tol):
        raise IndexError(f"s outside [0, {sol.s_end}]")
    if sol.s.size == 1:
        out = np.full(s_arr.shape, sol.A[0])
    else:
        k = np.clip(np.rint(s_arr / sol.step).astype(np.int64), 0, sol.s.size - 1)
        on_node = np.abs(s_arr - sol.s[k]) <= 1e-12 * max(1.0, sol.s_end)
        herm = _hermite(sol)
        out = np.where(on_node, sol.A[k], herm(np.clip(s_arr, 0.0, sol.s_end)))
    return float(out) if out.ndim == 0 else out


def _hermite(sol):
    h = sol.__dict__.get("_herm")
    if h is None:
        h = CubicHermiteSpline(sol.s, sol.A, sol.slopes)
        object.__setattr__(sol, "_herm", h)
    return h


@dataclass(frozen=True)
class BlowupProbe:
    reached_half_at: float | None
    horizon_exceeded: bool


def probe_blowup(alpha0: float, p: float, s_budget: float,
                 stop_margin: float = DEFAULT_STOP_MARGIN, h: float = 1e-3) -> BlowupProbe:
    """First ``s`` with ``A(s) >= 1/2 - stop_margin`` within ``s_budget``, if any.

    Observational only: hitting the band says nothing about whether the
    exact solution reaches 1/2 in finite time.
    """
    if alpha0 >= 0.5 - stop_margin:
        return BlowupProbe(0.0, False)
    sol = solve_A(alpha0, p, s_budget, h, stop_margin)
    if not sol.terminated_at_half:
        return BlowupProbe(None, True)
    # locate the crossing inside the last step on the dense output
    target = 0.5 - stop_margin
    lo, hi = sol.s[-2], sol.s[-1]
    herm = _hermite(sol)
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if herm(mid) >= target:
            hi = mid
        else:
            lo = mid
    return BlowupProbe(float(hi), False)
