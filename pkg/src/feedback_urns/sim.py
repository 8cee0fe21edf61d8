"""Monte Carlo for the two-bin feedback process.

Eventual leadership of bin 1 from ``(x, y)``, ``x < y``, is the event
``Z < 0`` with

    Z = sum_{j=x}^{y-1} X(1,j) + sum_{j>=y} (X(1,j) - X(2,j)),

all ``X(i,j) ~ exp(j**p)`` independent.  The series is cut at index ``R``.
Indices up to ``exact_upto`` are drawn one by one; the block
``(exact_upto, R]`` of zero-mean pair differences is drawn as a single
Gaussian with the matching variance (its excess kurtosis is
``O(1/exact_upto)``).  Pass ``exact_upto=R`` for fully exact draws.

With ``tail="gaussian"`` (the default) the pairs beyond ``R`` are not
dropped but folded into the same Gaussian, with variance
``2 zeta(2p, R+1)``.  Dropping them shrinks the spread of ``Z`` and biases
rare-event estimates: under a tilt ``lambda`` the log-probability moves by
about ``lambda^2 sum_{j>R} j^(-2p)``, which is 0.18 at ``t = 400``.

Replicas are generated in fixed-size blocks; block ``b`` uses the stream
``(seed, b)``, so estimates do not depend on the number of worker threads.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.special import zeta

from . import oracle
from .core import (
    DomainError,
    InitialCondition,
    PowerFeedback,
    Trajectory,
    UrnState,
    transition_prob_array,
    transition_prob_bin1,
)

BLOCK_REPS = 2048
PATH_BLOCK = 8192
DEFAULT_VARIANCE_CEILING = 1e-3


class TruncationError(ValueError):
    """The dropped tail of the embedding series is too heavy for the chosen ``R``."""


class BudgetExhausted(RuntimeError):
    pass


class NullConditioning(ArithmeticError):
    """The h-transform hit a state whose harmonic weight is zero."""


@dataclass(frozen=True)
class RngStream:
    """Counter-based (Philox) stream keyed by ``(seed, stream_id)``."""

    seed: int
    stream_id: int = 0
    gen: np.random.Generator = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        ss = np.random.SeedSequence(self.seed, spawn_key=(self.stream_id,))
        object.__setattr__(self, "gen", np.random.Generator(np.random.Philox(ss)))


@dataclass(frozen=True)
class McEstimate:
    estimate: float
    std_error: float
    n_reps: int
    method: str
    seed: int
    truncation_R: int | None = None
    tilt_rho: float | None = None
    log_estimate: float = float("nan")
    log_std_error: float = float("nan")
    ess: float = float("nan")
    ess_warning: bool = False


@dataclass(frozen=True)
class ZSample:
    value: float
    truncation_R: int
    residual_variance_bound: float


def exp_variate(rate: float, rng: RngStream) -> float:
    """One ``exp(rate)`` draw by inversion of the CDF."""
    if not rate > 0:
        raise DomainError(f"rate must be positive, got {rate}")
    return float(rng.gen.standard_exponential(method="inv")) / rate


def exp_variates(rate, rng: RngStream, size=None) -> np.ndarray:
    rate = np.asarray(rate, dtype=np.float64)
    if np.any(rate <= 0):
        raise DomainError("rates must be positive")
    if size is None:
        size = rate.shape
    return rng.gen.standard_exponential(size, method="inv") / rate


def run_discrete(init: InitialCondition, fb: PowerFeedback, n_steps: int, rng: RngStream,
                 start: UrnState | None = None) -> Trajectory:
    """Simulate ``n_steps`` balls sequentially from ``init`` (or an explicit ``start``)."""
    if n_steps < 0:
        raise ValueError("n_steps must be >= 0")
    st = start if start is not None else init.to_state()
    n1, n2 = st.n1, st.n2
    counts = np.empty(n_steps + 1, dtype=np.int64)
    counts[0] = n1
    u = rng.gen.random(n_steps)
    for k in range(n_steps):
        if u[k] < transition_prob_bin1(UrnState(n1, n2), fb):
            n1 += 1
        else:
            n2 += 1
        counts[k + 1] = n1
    return Trajectory(init, counts, start=start)


def run_discrete_batch(x: int, y: int, p: float, n_steps: int, n_paths: int,
                       rng: RngStream) -> np.ndarray:
    """Vectorised unconditioned paths; returns bin-1 counts, shape ``(n_paths, n_steps+1)``."""
    n1 = np.full(n_paths, x, dtype=np.int64)
    n2 = np.full(n_paths, y, dtype=np.int64)
    out = np.empty((n_paths, n_steps + 1), dtype=np.int64)
    out[:, 0] = x
    for k in range(n_steps):
        q = transition_prob_array(n1, n2, p)
        step = rng.gen.random(n_paths) < q
        n1 += step
        n2 += ~step
        out[:, k + 1] = n1
    return out


# --------------------------------------------------------------------------
# the embedding variable Z


def default_R(t: int) -> int:
    return max(10**4, 50 * t)


def residual_variance_bound(R: int, p: float) -> float:
    """Bound on ``sum_{j>R} 2 / j^(2p)`` by integral comparison."""
    return 2.0 * R ** (1.0 - 2.0 * p) / (2.0 * p - 1.0)


def _resolve_start(t, alpha, state):
    if state is not None:
        return state.n1, state.n2
    s = InitialCondition(t, alpha).to_state()
    return s.n1, s.n2


@dataclass(frozen=True)
class _ZLayout:
    """Column weights for ``Z = E @ w + sqrt(gauss_var) * N + gauss_mean``."""

    weights: np.ndarray
    gauss_var: float
    gauss_mean: float
    log_transform: float  # log E_P[exp(-lam Z)] of the sampled model
    lam: float
    R: int
    exact_upto: int


def _layout(x, y, p, R, lam=0.0, exact_upto=None, tail="gaussian") -> _ZLayout:
    if not p > 0.5:
        raise DomainError("the embedding series needs p > 1/2")
    if x > y:
        raise DomainError("start state must have x <= y")
    if R < y:
        raise DomainError(f"truncation index R={R} below y={y}")
    J = min(R, exact_upto if exact_upto is not None else 4 * y + 64)
    J = max(J, y - 1)
    j1 = np.arange(x, J + 1, dtype=np.float64)  # X(1, j)
    j2 = np.arange(y, J + 1, dtype=np.float64)  # X(2, j)
    r1 = j1 ** p
    r2 = j2 ** p
    if lam > 0 and np.any(r2 - lam <= 0):
        raise DomainError("tilted rate j^p - lambda not positive; need lambda < y^p")
    w = np.concatenate([1.0 / (r1 + lam), -1.0 / (r2 - lam)])
    jg = np.arange(J + 1, R + 1, dtype=np.float64)
    var = float(np.sum(2.0 / jg ** (2 * p))) if jg.size else 0.0
    if tail == "gaussian":
        var += 2.0 * float(zeta(2 * p, R + 1))
    elif tail != "drop":
        raise ValueError(f"tail must be 'gaussian' or 'drop', got {tail!r}")
    logt = 0.0
    if lam > 0:
        lt = -np.log1p(lam / r1).sum() - np.log1p(-lam / r2).sum()
        logt = float(lt + 0.5 * lam * lam * var)
    return _ZLayout(w, var, -lam * var, logt, lam, R, J)


def _draw_Z(layout: _ZLayout, n: int, rng: RngStream) -> np.ndarray:
    g = rng.gen
    E = g.standard_exponential((n, layout.weights.size), method="inv")
    z = E @ layout.weights
    if layout.gauss_var > 0:
        z += layout.gauss_mean + math.sqrt(layout.gauss_var) * g.standard_normal(n)
    return z


def sample_Z(t: int, alpha: float, p: float, R: int, rng: RngStream, *,
             state: UrnState | None = None, exact_upto: int | None = None,
             variance_ceiling: float = DEFAULT_VARIANCE_CEILING, tail: str = "gaussian") -> ZSample:
    x, y = _resolve_start(t, alpha, state)
    if R < 2 * t and state is None:
        raise DomainError("sample_Z needs R >= 2t")
    bound = residual_variance_bound(R, p)
    if bound > variance_ceiling:
        raise TruncationError(f"residual variance bound {bound:.3g} exceeds {variance_ceiling:.3g}")
    lay = _layout(x, y, p, R, exact_upto=exact_upto, tail=tail)
    return ZSample(float(_draw_Z(lay, 1, rng)[0]), R, bound)


def sample_Z_parts(x: int, y: int, p: float, R: int, n: int, rng: RngStream):
    """Exact draws of the two independent parts of ``Z`` (catch-up time, pair sum)."""
    lay = _layout(x, y, p, R, exact_upto=R, tail="drop")
    E = rng.gen.standard_exponential((n, lay.weights.size), method="inv")
    k = y - x
    return E[:, :k] @ lay.weights[:k], E[:, k:] @ lay.weights[k:]


def _blocks(n_reps):
    nb = -(-n_reps // BLOCK_REPS)
    return [(b, min(BLOCK_REPS, n_reps - b * BLOCK_REPS)) for b in range(nb)]


def _map_blocks(fn, n_reps, threads):
    blocks = _blocks(n_reps)
    threads = threads or os.cpu_count() or 1
    if threads <= 1 or len(blocks) == 1:
        return [fn(b, n) for b, n in blocks]
    with ThreadPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(lambda bn: fn(*bn), blocks))


def mc_elead_direct(t: int, alpha: float, p: float, n_reps: int, R: int | None, seed: int, *,
                    state: UrnState | None = None, exact_upto: int | None = None,
                    threads: int | None = 1,
                    variance_ceiling: float = DEFAULT_VARIANCE_CEILING,
                    tail: str = "gaussian") -> McEstimate:
    """Fraction of replicas with ``Z < 0``; binomial standard error."""
    if n_reps < 1000:
        raise ValueError("n_reps must be >= 1000")
    x, y = _resolve_start(t, alpha, state)
    R = R if R is not None else default_R(t)
    if residual_variance_bound(R, p) > variance_ceiling:
        raise TruncationError(f"R={R} leaves residual variance above {variance_ceiling:.3g}")
    lay = _layout(x, y, p, R, exact_upto=exact_upto, tail=tail)

    def block(b, n):
        z = _draw_Z(lay, n, RngStream(seed, b))
        return int(np.count_nonzero(z < 0))

    hits = sum(_map_blocks(block, n_reps, threads))
    est = hits / n_reps
    se = math.sqrt(est * (1 - est) / n_reps)
    return McEstimate(est, se, n_reps, "Direct", seed, truncation_R=R,
                      log_estimate=math.log(est) if est > 0 else -math.inf,
                      log_std_error=se / est if est > 0 else math.inf)


def tilt_lambda(t: int, alpha: float, p: float, rho: float) -> float:
    return rho * ((1.0 - alpha) * t) ** p


def mc_elead_tilted(t: int, alpha: float, p: float, n_reps: int, rho: float | None,
                    R: int | None, seed: int, *, state: UrnState | None = None,
                    exact_upto: int | None = None, threads: int | None = 1,
                    variance_ceiling: float = DEFAULT_VARIANCE_CEILING,
                    tail: str = "gaussian") -> McEstimate:
    """Importance sampling under the exponential tilt ``lambda = rho ((1-alpha) t)^p``.

    Bin-1 rates become ``j^p + lambda`` and bin-2 rates ``j^p - lambda``;
    each replica carries the likelihood ratio ``exp(lambda Z + log E[exp(-lambda Z)])``.
    Weights are merged in log space (running max plus scaled sums).
    """
    if n_reps < 1000:
        raise ValueError("n_reps must be >= 1000")
    x, y = _resolve_start(t, alpha, state)
    R = R if R is not None else default_R(t)
    if residual_variance_bound(R, p) > variance_ceiling:
        raise TruncationError(f"R={R} leaves residual variance above {variance_ceiling:.3g}")
    if rho is None:
        from .ratefn import rho_star
        rho = rho_star(alpha, p)
    if not 0.0 <= rho < 1.0:
        raise DomainError(f"rho must lie in [0, 1), got {rho}")
    lam = tilt_lambda(t, alpha, p, rho)
    if lam >= y ** p:
        raise DomainError(f"lambda={lam:.6g} >= y^p={y ** p:.6g}: tilted rates not positive")
    lay = _layout(x, y, p, R, lam=lam, exact_upto=exact_upto, tail=tail)

    def block(b, n):
        z = _draw_Z(lay, n, RngStream(seed, b))
        lw = lam * z[z < 0] + lay.log_transform
        if lw.size == 0:
            return (-math.inf, 0.0, 0.0)
        M = float(lw.max())
        s = np.exp(lw - M)
        return (M, float(s.sum()), float((s * s).sum()))

    parts = _map_blocks(block, n_reps, threads)
    M = max(pt[0] for pt in parts)
    if M == -math.inf:
        return McEstimate(0.0, 0.0, n_reps, "Tilted", seed, truncation_R=R, tilt_rho=rho,
                          log_estimate=-math.inf, ess=0.0, ess_warning=True)
    S1 = math.fsum(pt[1] * math.exp(pt[0] - M) for pt in parts if pt[1] > 0)
    S2 = math.fsum(pt[2] * math.exp(2 * (pt[0] - M)) for pt in parts if pt[2] > 0)
    mean_s = S1 / n_reps
    var_s = max(S2 / n_reps - mean_s * mean_s, 0.0) * n_reps / (n_reps - 1)
    log_est = M + math.log(mean_s)
    rel_se = math.sqrt(var_s / n_reps) / mean_s
    ess = S1 * S1 / S2
    return McEstimate(
        estimate=math.exp(log_est),
        std_error=math.exp(log_est) * rel_se,
        n_reps=n_reps,
        method="Tilted",
        seed=seed,
        truncation_R=R,
        tilt_rho=rho,
        log_estimate=log_est,
        log_std_error=rel_se,
        ess=ess,
        ess_warning=ess < n_reps / 100,
    )


def mc_laplace(x: int, y: int, p: float, lam: float, R: int, n_reps: int, seed: int) -> tuple:
    """Plain MC mean and standard error of ``exp(-lambda Z)`` (exact draws up to ``R``)."""
    lay = _layout(x, y, p, R, exact_upto=R, tail="drop")
    s1 = s2 = 0.0
    for b, n in _blocks(n_reps):
        v = np.exp(-lam * _draw_Z(lay, n, RngStream(seed, b)))
        s1 += float(v.sum())
        s2 += float((v * v).sum())
    mean = s1 / n_reps
    var = (s2 / n_reps - mean * mean) * n_reps / (n_reps - 1)
    return mean, math.sqrt(var / n_reps)


# --------------------------------------------------------------------------
# conditioned trajectories


def _check_table_reach(x, y, horizon_steps, R):
    if x + horizon_steps >= R or y + horizon_steps >= R:
        raise DomainError(
            f"DP table with R={R} does not cover {horizon_steps} steps from ({x}, {y})"
        )


def htransform_counts(x: int, y: int, p: float, horizon_steps: int, table: oracle.DpTable,
                      n_paths: int, seed: int) -> np.ndarray:
    """Paths of the chain reweighted by the race-win table ``W``.

    From ``(n1, n2)`` bin 1 is chosen with probability
    ``q W(n1+1, n2) / (q W(n1+1, n2) + (1-q) W(n1, n2+1))``.
    Returns bin-1 counts of shape ``(n_paths, horizon_steps + 1)``.
    """
    _check_table_reach(x, y, horizon_steps, table.R)
    if not table.W[x, y] > 0:
        raise NullConditioning(f"W({x}, {y}) = 0")
    W = table.W
    out = np.empty((n_paths, horizon_steps + 1), dtype=np.int64)
    for b in range(-(-n_paths // PATH_BLOCK)):
        lo = b * PATH_BLOCK
        n = min(PATH_BLOCK, n_paths - lo)
        g = RngStream(seed, b).gen
        n1 = np.full(n, x, dtype=np.int64)
        n2 = np.full(n, y, dtype=np.int64)
        out[lo:lo + n, 0] = x
        for k in range(horizon_steps):
            q = transition_prob_array(n1, n2, p)
            a = q * W[n1 + 1, n2]
            den = a + (1.0 - q) * W[n1, n2 + 1]
            if np.any(den <= 0):
                raise NullConditioning("conditioning on a null event along a path")
            step = g.random(n) < a / den
            n1 += step
            n2 += ~step
            out[lo:lo + n, k + 1] = n1
    return out


def conditioned_paths_htransform(t: int, alpha: float, p: float, horizon_steps: int, R_dp: int,
                                 n_paths: int, seed: int, *, table: oracle.DpTable | None = None,
                                 state: UrnState | None = None) -> list[Trajectory]:
    x, y = _resolve_start(t, alpha, state)
    if table is None:
        table = oracle.dp_table(R_dp, p)
    counts = htransform_counts(x, y, p, horizon_steps, table, n_paths, seed)
    init = InitialCondition(t, alpha)
    return [Trajectory(init, row, start=state) for row in counts]


@dataclass
class RejectionSample:
    """Accepted path prefixes plus the attempt bookkeeping."""

    paths: list
    counts: np.ndarray
    n_attempts: int
    n_accepted_total: int

    @property
    def acceptance_rate(self) -> float:
        return self.n_accepted_total / self.n_attempts

    @property
    def acceptance_se(self) -> float:
        a = self.acceptance_rate
        return math.sqrt(a * (1 - a) / self.n_attempts)

    def __len__(self):
        return len(self.paths)

    def __iter__(self):
        return iter(self.paths)

    def __getitem__(self, i):
        return self.paths[i]


def _race_batch(x, y, p, R, horizon, n, g):
    """Run ``n`` unconditioned races to level ``R``; returns (won, prefixes)."""
    n1 = np.full(n, x, dtype=np.int64)
    n2 = np.full(n, y, dtype=np.int64)
    pref = np.empty((n, horizon + 1), dtype=np.int64)
    pref[:, 0] = x
    idx = np.arange(n)
    won = np.zeros(n, dtype=bool)
    k = 0
    while idx.size:
        a1, a2 = n1[idx], n2[idx]
        q = transition_prob_array(a1, a2, p)
        step = g.random(idx.size) < q
        a1 += step
        a2 += ~step
        n1[idx], n2[idx] = a1, a2
        k += 1
        if k <= horizon:
            pref[idx, k] = a1
        done = (a1 >= R) | (a2 >= R)
        if done.any():
            won[idx[done]] = a1[done] >= R
            idx = idx[~done]
    return won, pref


def conditioned_paths_rejection(t: int, alpha: float, p: float, horizon_steps: int, R_dp: int,
                                n_accept_target: int, max_attempts: int, seed: int, *,
                                state: UrnState | None = None,
                                batch: int = 65536) -> RejectionSample:
    """Keep unconditioned paths on which bin 1 wins the race to ``R_dp``.

    Every attempt in a batch is run to completion, so ``acceptance_rate``
    is an unbiased estimate of the race-win probability.
    """
    x, y = _resolve_start(t, alpha, state)
    if R_dp - max(x, y) < horizon_steps:
        raise DomainError("the race can be decided inside the horizon; raise R_dp")
    kept = []
    attempts = accepted = 0
    b = 0
    while sum(len(c) for c in kept) < n_accept_target:
        if attempts >= max_attempts:
            raise BudgetExhausted(
                f"{accepted} of {n_accept_target} paths accepted after {attempts} attempts"
            )
        n = min(batch, max_attempts - attempts)
        won, pref = _race_batch(x, y, p, R_dp, horizon_steps, n, RngStream(seed, b).gen)
        b += 1
        attempts += n
        accepted += int(won.sum())
        kept.append(pref[won])
    counts = np.concatenate(kept)[:n_accept_target]
    init = InitialCondition(t, alpha)
    paths = [Trajectory(init, row, start=state) for row in counts]
    return RejectionSample(paths, counts, attempts, accepted)


def race_acceptance(t: int, alpha: float, p: float, R_dp: int, n_attempts: int, seed: int, *,
                    state: UrnState | None = None, batch: int = 65536) -> McEstimate:
    """Race-win frequency of unconditioned paths (the rejection sampler's acceptance rate)."""
    x, y = _resolve_start(t, alpha, state)
    wins = 0
    done = 0
    b = 0
    while done < n_attempts:
        n = min(batch, n_attempts - done)
        won, _ = _race_batch(x, y, p, R_dp, 0, n, RngStream(seed, b).gen)
        wins += int(won.sum())
        done += n
        b += 1
    est = wins / n_attempts
    return McEstimate(est, math.sqrt(est * (1 - est) / n_attempts), n_attempts, "Rejection", seed,
                      truncation_R=R_dp)
