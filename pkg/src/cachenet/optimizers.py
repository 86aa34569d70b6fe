"""Caching-policy solvers.

The concave programs all share one structure: maximize a sum of terms
p_f q_f / (c1 + c2 q_f) under the cache budget and box constraints. Their
KKT solutions are truncated power laws q_f = [sqrt(gain/mu) sqrt(p_f) -
offset] clipped to [0, 1], with the multiplier found by bisection. The
nonconcave problems (full success probability, ASE) are handled by
multi-start projected gradient ascent with finite-difference gradients.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from . import analytics
from .errors import NumericError
from .model import Catalog, CachingPolicy, NetworkConfig, popular_policy, uniform_policy
from .specfun import kernels_c123

__all__ = [
    "WaterfillSpec",
    "SolverReport",
    "waterfill",
    "maximize_tier2_association",
    "maximize_success_lower_bound",
    "optimal_high_density",
    "optimal_low_density",
    "projection_capped_simplex",
    "local_search",
]

#: Relative bisection tolerance on Lagrange multipliers.
MULTIPLIER_TOL = 1e-10
MULTIPLIER_MAX_ITER = 200

#: Budget slack accepted in solver outputs (complementary slackness check).
BUDGET_TOL = 1e-7


@dataclass(frozen=True)
class WaterfillSpec:
    """Truncated power-law problem: q_f = [sqrt(gain/mu) sqrt(w_f) - offset]_0^1
    with the multiplier mu pinned by sum(q) = budget."""

    weights: np.ndarray
    gain: float
    offset: float
    budget: float

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if w.ndim != 1 or w.size == 0 or np.any(w < 0):
            raise ValueError("weights must be a non-negative 1-D vector")
        if np.any(np.diff(w) > 1e-12):
            raise ValueError("weights must be non-increasing")
        if self.gain <= 0:
            raise ValueError("gain must be > 0")
        if self.offset < 0:
            raise ValueError("offset must be >= 0")
        if not 0 < self.budget <= w.size:
            raise ValueError("budget must satisfy 0 < budget <= n_files")
        w = w.copy()
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)


@dataclass(frozen=True)
class SolverReport:
    """Outcome of a policy solver."""

    policy: CachingPolicy
    multiplier: float
    objective: float
    iterations: int
    restarts_used: int
    converged: bool


def _report_budget(budget: float) -> int:
    return int(np.ceil(budget - 1e-9))


def waterfill(spec: WaterfillSpec) -> SolverReport:
    """Solve the truncated power-law allocation by bisection on the multiplier.

    The budget curve sum_f q_f(mu) is continuous and non-increasing, so the
    bracket never fails; saturated budgets (budget = n_files) return the
    all-ones policy directly.
    """
    w = spec.weights
    n = w.size
    if spec.budget >= n:
        policy = CachingPolicy(np.ones(n), _report_budget(spec.budget))
        return SolverReport(policy=policy, multiplier=0.0,
                            objective=_implied_objective(spec, np.ones(n)),
                            iterations=0, restarts_used=0, converged=True)

    sqrt_w = np.sqrt(w)

    def q_of(mu):
        return np.clip(np.sqrt(spec.gain / mu) * sqrt_w - spec.offset, 0.0, 1.0)

    wmax = float(w.max())
    wmin = float(w[w > 0].min()) if np.any(w > 0) else wmax
    # q = 1 everywhere needs sqrt(gain w / mu) >= 1 + offset
    mu_lo = 0.25 * spec.gain * wmin / (1.0 + spec.offset) ** 2
    # q = 0 everywhere once sqrt(gain w / mu) <= offset
    mu_hi = 4.0 * spec.gain * wmax / max(spec.offset, 0.5) ** 2
    iterations = 0
    for iterations in range(1, MULTIPLIER_MAX_ITER + 1):
        mu = np.sqrt(mu_lo * mu_hi)
        if q_of(mu).sum() > spec.budget:
            mu_lo = mu
        else:
            mu_hi = mu
        if mu_hi - mu_lo <= MULTIPLIER_TOL * mu_lo:
            break
    mu = np.sqrt(mu_lo * mu_hi)
    q = q_of(mu)

    interior = (q > 1e-12) & (q < 1.0 - 1e-12)
    if np.any(interior) and abs(q.sum() - spec.budget) > BUDGET_TOL:
        raise NumericError(
            f"multiplier bisection left budget residual {q.sum() - spec.budget:.3g}")
    _check_stationarity(spec, q, mu, interior)
    policy = CachingPolicy(q, _report_budget(spec.budget))
    return SolverReport(policy=policy, multiplier=float(mu),
                        objective=_implied_objective(spec, q),
                        iterations=iterations, restarts_used=0, converged=True)


def _implied_objective(spec: WaterfillSpec, q: np.ndarray) -> float:
    """Value of the underlying fractional objective at q.

    For offset > 0 this is sum w q / (c1 + c2 q) with c1 = offset^2/gain and
    c2 = offset/gain; the offset -> 0 limit degenerates to the cached mass.
    """
    if spec.offset > 0:
        c1 = spec.offset ** 2 / spec.gain
        c2 = spec.offset / spec.gain
        return float(np.sum(spec.weights * q / (c1 + c2 * q)))
    return float(np.sum(spec.weights[q > 1e-15]))


def _check_stationarity(spec: WaterfillSpec, q, mu, interior, tol=1e-6):
    if spec.offset <= 0 or not np.any(interior):
        return
    c1 = spec.offset ** 2 / spec.gain
    c2 = spec.offset / spec.gain
    deriv = spec.weights[interior] * c1 / (c1 + c2 * q[interior]) ** 2
    residual = np.max(np.abs(deriv - mu)) / mu
    if residual > tol:
        raise NumericError(f"KKT stationarity residual {residual:.3g} exceeds {tol}")


def _c_ratio(cfg: NetworkConfig) -> float:
    """lambda_12 (P_12 B_12)^(2/alpha), the MBS association weight."""
    two_a = 2.0 / cfg.alpha
    return (cfg.lambda_mbs / cfg.lambda_helper) * (
        (cfg.p_mbs / cfg.p_helper) * (cfg.bias_mbs / cfg.bias_helper)) ** two_a


def _waterfill_c1_c2(catalog: Catalog, c1: float, c2: float) -> SolverReport:
    """Waterfill for the fractional objective with denominator c1 + c2 q."""
    c2 = max(c2, 1e-300)
    spec = WaterfillSpec(weights=catalog.popularity, gain=c1 / c2 ** 2,
                         offset=c1 / c2, budget=float(catalog.cache_size))
    return waterfill(spec)


def maximize_tier2_association(cfg: NetworkConfig, catalog: Catalog) -> SolverReport:
    """Policy maximizing the helper-tier association probability.

    Concave fractional program; the objective reported is the association
    probability evaluated on the returned policy.
    """
    c = _c_ratio(cfg)
    report = _waterfill_c1_c2(catalog, c, 1.0)
    p2 = analytics.association(cfg, catalog, report.policy).tier_prob[1]
    if abs(p2 - report.objective) > 1e-9:
        raise NumericError("association objective mismatch between solver and analytics")
    return SolverReport(policy=report.policy, multiplier=report.multiplier,
                        objective=float(p2), iterations=report.iterations,
                        restarts_used=0, converged=report.converged)


def maximize_success_lower_bound(cfg: NetworkConfig, catalog: Catalog) -> SolverReport:
    """Policy maximizing the concave lower bound of the success probability.

    Three steps: solve the association problem, freeze its worst-case
    activity and SINR requirement, then waterfill the resulting concave
    surrogate. Interior coordinates follow a shifted power law with
    exponent -skew/2.
    """
    gamma_bar, pa_bar = analytics.lower_bound_constants(cfg, catalog)
    c1k, c2k, c3k = kernels_c123(gamma_bar, cfg)
    c1 = c1k + pa_bar * c2k
    c2 = pa_bar * c3k + 1.0
    report = _waterfill_c1_c2(catalog, c1, c2)
    obj = analytics.helper_tier_success(cfg, catalog, report.policy,
                                        active_prob=pa_bar, sinr_threshold=gamma_bar)
    return SolverReport(policy=report.policy, multiplier=report.multiplier,
                        objective=float(obj), iterations=report.iterations,
                        restarts_used=0, converged=report.converged)


def optimal_high_density(cfg: NetworkConfig, catalog: Catalog) -> SolverReport:
    """Lower-bound maximizer when every helper is active.

    Same surrogate as :func:`maximize_success_lower_bound` with the activity
    pinned to 1; as the rate target grows the solution collapses onto
    caching the most popular files everywhere.
    """
    gamma_bar, _ = analytics.lower_bound_constants(cfg, catalog)
    c1k, c2k, c3k = kernels_c123(gamma_bar, cfg)
    report = _waterfill_c1_c2(catalog, c1k + c2k, c3k + 1.0)
    obj = analytics.helper_tier_success(cfg, catalog, report.policy,
                                        active_prob=1.0, sinr_threshold=gamma_bar)
    return SolverReport(policy=report.policy, multiplier=report.multiplier,
                        objective=float(obj), iterations=report.iterations,
                        restarts_used=0, converged=report.converged)


def optimal_low_density(cfg: NetworkConfig, catalog: Catalog) -> SolverReport:
    """Exact success maximizer when each helper serves at most one user.

    With idle helpers dominant the SINR requirement is policy-independent
    (single-user load) and the helper-tier success is concave; this is its
    exact optimum, not a bound.
    """
    gamma0 = 2.0 ** (cfg.rate_target / cfg.bandwidth) - 1.0
    c1k, _, _ = kernels_c123(gamma0, cfg)
    report = _waterfill_c1_c2(catalog, c1k, 1.0)
    obj = analytics.helper_tier_success(cfg, catalog, report.policy,
                                        active_prob=0.0, sinr_threshold=gamma0)
    return SolverReport(policy=report.policy, multiplier=report.multiplier,
                        objective=float(obj), iterations=report.iterations,
                        restarts_used=0, converged=report.converged)


# ---------------------------------------------------------------------------
# projection and multi-start ascent


def projection_capped_simplex(q: np.ndarray, budget: float) -> np.ndarray:
    """Euclidean projection onto {0 <= q <= 1, sum(q) <= budget}.

    Clipping alone settles the box; when the clipped point overshoots the
    budget, a uniform shift tau with re-clipping is found by bisection
    (the KKT conditions of the projection QP).
    """
    q = np.asarray(q, dtype=float)
    if not np.all(np.isfinite(q)):
        raise ValueError("projection input must be finite")
    if budget < 0:
        raise ValueError("budget must be >= 0")
    clipped = np.clip(q, 0.0, 1.0)
    if clipped.sum() <= budget:
        return clipped
    lo, hi = 0.0, float(q.max())
    for _ in range(200):
        tau = 0.5 * (lo + hi)
        s = np.clip(q - tau, 0.0, 1.0).sum()
        if s > budget:
            lo = tau
        else:
            hi = tau
        if hi - lo <= 1e-14 * max(1.0, hi):
            break
    return np.clip(q - 0.5 * (lo + hi), 0.0, 1.0)


def _fd_gradient(objective, q: np.ndarray, step: float) -> np.ndarray:
    grad = np.empty_like(q)
    probe = q.copy()
    for i in range(q.size):
        qi = probe[i]
        probe[i] = qi + step
        hi = objective(probe)
        probe[i] = qi - step
        lo = objective(probe)
        probe[i] = qi
        grad[i] = (hi - lo) / (2.0 * step)
    return grad


def local_search(objective: Callable[[np.ndarray], float], catalog: Catalog,
                 restarts: int, rng: np.random.Generator, *,
                 seeds: Sequence[CachingPolicy] | None = None,
                 max_iter: int = 500, fd_step: float = 1e-5,
                 grad_tol: float = 1e-4, armijo: float = 1e-4,
                 step0: float = 0.1) -> SolverReport:
    """Multi-start projected gradient ascent over feasible caching vectors.

    ``objective`` receives a bare probability vector (it is evaluated at
    points perturbed by the finite-difference step, which may stick out of
    the box by that amount). Default seeds are the popular and uniform
    policies; callers usually add the closed-form solver outputs. Remaining
    restarts start from projected uniform-random points. The best restart
    wins, ties broken by restart order.
    """
    if restarts < 1:
        raise ValueError("restarts must be >= 1")
    budget = float(catalog.cache_size)
    starts = [popular_policy(catalog).q, uniform_policy(catalog).q]
    if seeds:
        starts.extend(np.asarray(p.q, dtype=float) for p in seeds)
    while len(starts) < restarts:
        starts.append(projection_capped_simplex(rng.random(catalog.n_files), budget))

    best_q, best_val, best_iters, best_conv = None, -np.inf, 0, True
    for idx, q0 in enumerate(starts):
        q = projection_capped_simplex(np.asarray(q0, dtype=float), budget)
        val = objective(q)
        if not np.isfinite(val):
            raise NumericError(f"objective is not finite at restart {idx}: {val!r}")
        converged = False
        it = 0
        for it in range(1, max_iter + 1):
            grad = _fd_gradient(objective, q, fd_step)
            if not np.all(np.isfinite(grad)):
                raise NumericError(
                    f"objective produced non-finite values near q = {q!r}")
            pg = projection_capped_simplex(q + grad, budget) - q
            if np.linalg.norm(pg) <= grad_tol:
                converged = True
                break
            step = step0
            improved = False
            for _ in range(40):
                cand = projection_capped_simplex(q + step * grad, budget)
                cand_val = objective(cand)
                if cand_val >= val + armijo * float(grad @ (cand - q)):
                    q, val, improved = cand, cand_val, True
                    break
                step *= 0.5
            if not improved:
                converged = True  # no ascent direction left at line-search scale
                break
        if val > best_val:
            best_q, best_val, best_iters, best_conv = q, val, it, converged
    policy = CachingPolicy(np.clip(best_q, 0.0, 1.0), catalog.cache_size)
    return SolverReport(policy=policy, multiplier=float("nan"),
                        objective=float(best_val), iterations=best_iters,
                        restarts_used=len(starts), converged=best_conv)
