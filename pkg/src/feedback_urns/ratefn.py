"""Rate function of the eventual-leadership probability.

For ``alpha in (0, 1/2)`` and ``rho in (0, 1)`` the scaled log-Laplace
transform of the embedding variable converges to

    F(rho, alpha) = (1 - alpha) * [ int_{x}^{1} -log(1 + rho u^-p) du
                                  + int_{1}^{inf} -log(1 - rho^2 u^-2p) du ],

with ``x = alpha / (1 - alpha)``.  ``F`` is strictly convex in ``rho``; its
minimum value ``c_p(alpha)`` is the exponential decay rate of
``P_[t,alpha](ELead)``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from .core import DomainError, ceil_mul

__all__ = [
    "QuadConfig",
    "QuadratureError",
    "BracketError",
    "RateProfile",
    "F_p",
    "dF_drho",
    "d2F_drho2",
    "dF_dalpha",
    "rho_star",
    "rate_profile",
    "g_p",
    "g_t_discrete",
]

RHO_LO = 1e-8
RHO_HI = 1.0 - 1e-8


class QuadratureError(ArithmeticError):
    def __init__(self, msg, abserr=float("nan")):
        super().__init__(f"{msg} (estimated error {abserr:.3g})")
        self.abserr = abserr


class BracketError(ArithmeticError):
    pass


@dataclass(frozen=True)
class QuadConfig:
    """Tolerances for the adaptive quadratures.

    ``tail_cut`` splits the ``[1, inf)`` integral: ``[1, tail_cut]`` is
    integrated directly, the rest after the substitution ``u = 1/v``.
    """

    abs_tol: float = 1e-10
    rel_tol: float = 1e-10
    max_subdivisions: int = 2000
    tail_cut: float = 2.0
    root_tol: float = 1e-12

    def __post_init__(self):
        if not (self.abs_tol > 0 and self.rel_tol > 0):
            raise ValueError("quadrature tolerances must be positive")
        if self.max_subdivisions < 10:
            raise ValueError("max_subdivisions must be >= 10")
        if not self.tail_cut > 1.0:
            raise ValueError("tail_cut must exceed 1")


DEFAULT_QUAD = QuadConfig()


@dataclass(frozen=True)
class RateProfile:
    alpha: float
    p: float
    rho_star: float
    c_p: float
    c_p_prime: float
    g_p: float
    grad_norm_at_star: float


def _check(rho, alpha, p):
    if not 0.0 < rho < 1.0:
        raise DomainError(f"rho must lie in (0, 1), got {rho}")
    _check_alpha(alpha, p)


def _check_alpha(alpha, p):
    if not 0.0 < alpha < 0.5:
        raise DomainError(f"alpha must lie in (0, 1/2), got {alpha}")
    if not p > 0.5:
        raise DomainError(f"rate function needs p > 1/2, got {p}")


def _quad(f, a, b, cfg, **kw):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        val, err, _info, *msg = integrate.quad(
            f, a, b, epsabs=cfg.abs_tol, epsrel=cfg.rel_tol,
            limit=cfg.max_subdivisions, full_output=1, **kw,
        )
    # a roundoff warning still returns the best attainable value
    if msg and "roundoff" not in str(msg[0]) and err > 100 * max(cfg.abs_tol, cfg.rel_tol * abs(val)):
        raise QuadratureError(f"quadrature on [{a}, {b}] did not converge", err)
    return val


def _tail_quad(h, p, cfg):
    """``int_0^{1/tail_cut} v^(2p-2) h(v) dv`` with an algebraic end-point weight."""
    vmax = 1.0 / cfg.tail_cut
    e = 2.0 * p - 2.0
    if e == 0.0:
        return _quad(h, 0.0, vmax, cfg)
    return _quad(h, 0.0, vmax, cfg, weight="alg", wvar=(e, 0.0))


def F_p(rho: float, alpha: float, p: float, cfg: QuadConfig = DEFAULT_QUAD) -> float:
    _check(rho, alpha, p)
    x = alpha / (1.0 - alpha)
    r2 = rho * rho
    head = _quad(lambda u: -math.log1p(rho * u ** -p), x, 1.0, cfg)
    near = _quad(lambda u: -math.log1p(-r2 * u ** (-2 * p)), 1.0, cfg.tail_cut, cfg)

    def h(v):
        w = v ** (2 * p)
        return r2 if w == 0.0 else -math.log1p(-r2 * w) / w

    far = _tail_quad(h, p, cfg)
    return (1.0 - alpha) * (head + near + far)


def dF_drho(rho: float, alpha: float, p: float, cfg: QuadConfig = DEFAULT_QUAD) -> float:
    _check(rho, alpha, p)
    x = alpha / (1.0 - alpha)
    r2 = rho * rho
    head = _quad(lambda u: 1.0 / (u ** p + rho), x, 1.0, cfg)
    near = _quad(lambda u: 2.0 * rho / (u ** (2 * p) - r2), 1.0, cfg.tail_cut, cfg)
    far = _tail_quad(lambda v: 2.0 * rho / (1.0 - r2 * v ** (2 * p)), p, cfg)
    return (1.0 - alpha) * (-head + near + far)


def d2F_drho2(rho: float, alpha: float, p: float, cfg: QuadConfig = DEFAULT_QUAD) -> float:
    _check(rho, alpha, p)
    x = alpha / (1.0 - alpha)
    r2 = rho * rho
    head = _quad(lambda u: 1.0 / (u ** p + rho) ** 2, x, 1.0, cfg)

    def g_near(u):
        u2p = u ** (2 * p)
        return (2.0 * u2p + 2.0 * r2) / (u2p - r2) ** 2

    def g_far(v):
        w = v ** (2 * p)
        return (2.0 + 2.0 * r2 * w) / (1.0 - r2 * w) ** 2

    near = _quad(g_near, 1.0, cfg.tail_cut, cfg)
    far = _tail_quad(g_far, p, cfg)
    return (1.0 - alpha) * (head + near + far)


def dF_dalpha(rho: float, alpha: float, p: float, F: float | None = None,
              cfg: QuadConfig = DEFAULT_QUAD) -> float:
    """Partial derivative of ``F`` in ``alpha`` at fixed ``rho``.

    Differentiating the lower limit ``x = alpha/(1-alpha)`` (``dx/dalpha =
    (1-alpha)^-2``) and the ``(1-alpha)`` prefactor gives
    ``[log(1 + rho x^-p) - F] / (1 - alpha)``.
    """
    _check(rho, alpha, p)
    if F is None:
        F = F_p(rho, alpha, p, cfg)
    x = alpha / (1.0 - alpha)
    return (math.log1p(rho * x ** -p) - F) / (1.0 - alpha)


def rho_star(alpha: float, p: float, cfg: QuadConfig = DEFAULT_QUAD) -> float:
    """Unique minimiser of ``F(., alpha)`` on ``(0, 1)``.

    Bisection down to a bracket of width 1e-3, then Newton steps on
    ``dF/drho`` clamped to the bracket.
    """
    _check_alpha(alpha, p)
    lo, hi = RHO_LO, RHO_HI
    flo = dF_drho(lo, alpha, p, cfg)
    fhi = dF_drho(hi, alpha, p, cfg)
    if not (flo < 0.0 < fhi):
        raise BracketError(
            f"dF/drho does not change sign on [{lo}, {hi}]: {flo:.3g}, {fhi:.3g}"
        )
    while hi - lo >= 1e-3:
        mid = 0.5 * (lo + hi)
        fm = dF_drho(mid, alpha, p, cfg)
        if fm < 0.0:
            lo = mid
        else:
            hi = mid
    r = 0.5 * (lo + hi)
    for _ in range(60):
        g = dF_drho(r, alpha, p, cfg)
        if abs(g) <= cfg.root_tol:
            break
        if g < 0.0:
            lo = r
        else:
            hi = r
        step = g / d2F_drho2(r, alpha, p, cfg)
        nr = r - step
        if not lo < nr < hi:
            nr = 0.5 * (lo + hi)
        if abs(nr - r) <= 4e-16 * r:
            r = nr
            break
        r = nr
    return r


def _g_from(alpha, p, cprime):
    # odds form of a^p e^c / (a^p e^c + (1-a)^p)
    log_odds = p * (math.log(alpha) - math.log1p(-alpha)) + cprime
    return -alpha + 1.0 / (1.0 + math.exp(-log_odds))


def rate_profile(alpha: float, p: float, cfg: QuadConfig = DEFAULT_QUAD) -> RateProfile:
    r = rho_star(alpha, p, cfg)
    c = F_p(r, alpha, p, cfg)
    # envelope theorem: dc/dalpha = dF/dalpha at the minimiser
    cprime = dF_dalpha(r, alpha, p, F=c, cfg=cfg)
    return RateProfile(
        alpha=alpha,
        p=p,
        rho_star=r,
        c_p=c,
        c_p_prime=cprime,
        g_p=_g_from(alpha, p, cprime),
        grad_norm_at_star=abs(dF_drho(r, alpha, p, cfg)),
    )


def g_p(alpha: float, p: float, cfg: QuadConfig = DEFAULT_QUAD) -> float:
    """Drift of the leadership-conditioned fraction of bin-1 balls."""
    return rate_profile(alpha, p, cfg).g_p


def _phi_tail_series(a: float, c: float, p: float, nterms: int = 200):
    """Integral and odd derivatives at ``a`` of ``phi(u) = -log(1 - c u^-2p)``.

    Uses ``phi = sum_k c^k u^(-2pk) / k``; requires ``c a^-2p`` well below 1.
    """
    z = c * a ** (-2 * p)
    integral = d1 = d3 = 0.0
    zk = 1.0
    for k in range(1, nterms + 1):
        zk *= z
        e = 2 * p * k
        integral += zk * a / (k * (e - 1.0))
        d1 += -e * zk / (k * a)
        d3 += -e * (e + 1) * (e + 2) * zk / (k * a ** 3)
        if zk < 1e-18:
            break
    return integral, d1, d3


def g_t_discrete(rho: float, alpha: float, t: int, p: float,
                 tail_terms_tol: float = 1e-12) -> float:
    """Exact finite-``t`` log-Laplace transform ``log E[exp(-lambda Z_t)]``.

    ``lambda = rho (1-alpha)^p t^p``.  The first sum runs over the indices of
    bin 1's catch-up time, the second over the coupled pairs.  The second sum
    is carried explicitly up to an index ``J`` and the remainder is added via
    Euler-Maclaurin with the series of its integrand; ``J`` grows until the
    next omitted correction is below ``tail_terms_tol``.
    """
    if not 0.0 <= rho < 1.0:
        raise DomainError(f"rho must lie in [0, 1), got {rho}")
    _check_alpha(alpha, p)
    x = ceil_mul(alpha, t)
    y = t - x
    if x < 1 or y <= x - 1:
        raise DomainError(f"invalid [t={t}, alpha={alpha}]")
    lam_scaled = (1.0 - alpha) ** p * rho  # lambda / t^p
    c2 = (lam_scaled * lam_scaled) * float(t) ** (2 * p)  # lambda^2
    if rho > 0 and c2 >= float(y) ** (2 * p):
        raise DomainError("Laplace transform is infinite: lambda >= y^p")
    if rho == 0.0:
        return 0.0

    j = np.arange(x, y, dtype=np.float64)
    first = -np.log1p(lam_scaled / (j / t) ** p)

    J = max(4 * y, 1024)
    # omitted Euler-Maclaurin term ~ |phi^(5)(J)| / 30240
    while True:
        e = 2 * p
        rem = c2 * e * (e + 1) * (e + 2) * (e + 3) * (e + 4) * J ** (-e - 5) / 30240.0
        if rem <= tail_terms_tol or J > 10**8:
            break
        J *= 2
    jj = np.arange(y, J, dtype=np.float64)
    second = -np.log1p(-c2 * jj ** (-2 * p))
    integral, d1, d3 = _phi_tail_series(float(J), c2, p)
    # sum_{j>=J} phi(j) = int_J^inf phi + phi(J)/2 - phi'(J)/12 + phi'''(J)/720 - ...
    phiJ = -math.log1p(-c2 * float(J) ** (-2 * p))
    tail = integral + phiJ / 2.0 - d1 / 12.0 + d3 / 720.0
    # smallest terms first
    parts = np.concatenate([second[::-1], first[::-1]])
    return math.fsum(np.concatenate([[tail], parts]))
