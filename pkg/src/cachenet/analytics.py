"""Closed-form and quadrature evaluation of association, success probability
and area spectral efficiency (ASE) for the cache-enabled two-tier network and
its backhaul-limited baseline.

All success probabilities use base-2 rate thresholds (rate targets are in
bit/s); ASE values are computed and stored in nat/s/Hz/m^2 with a bit-rate
accessor on the report. The expressions are interference-limited: thermal
noise is deliberately absent here and only enters the Monte Carlo simulator.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NumericError, UnsupportedConfig
from .model import Catalog, CachingPolicy, NetworkConfig, TraditionalConfig, nats_to_bits, NATS_PER_BIT
from .specfun import hyp2f1_neg_arg, interference_gamma_factor, kernels_c123

__all__ = [
    "AssociationReport",
    "LoadReport",
    "EvalReport",
    "association",
    "active_probability",
    "mean_load",
    "load_report",
    "success_probability",
    "helper_tier_success",
    "success_lower_bound",
    "ase_quadrature",
    "ase_closed_form",
    "traditional_ase_quadrature",
    "traditional_ase_closed_form",
]

#: Quadrature truncation: the integrand is cut once it falls below this.
_INTEGRAND_FLOOR = 1e-12
#: Absolute tolerance per semi-infinite rate integral.
_QUAD_ATOL = 1e-10

_MBS, _HELPER = 0, 1


@dataclass(frozen=True)
class AssociationReport:
    """Tier association probabilities, total and per requested file."""

    tier_prob: tuple            # (P_mbs, P_helper), sums to 1
    conditional: np.ndarray     # (n_files, 2); row f: association given rank f+1

    def __post_init__(self):
        t = self.tier_prob
        if abs(t[0] + t[1] - 1.0) > 1e-10:
            raise NumericError("tier association probabilities must sum to 1")
        rows = self.conditional.sum(axis=1)
        if np.any(np.abs(rows - 1.0) > 1e-10):
            raise NumericError("conditional association rows must sum to 1")
        if self.conditional.min() < -1e-12 or self.conditional.max() > 1 + 1e-12:
            raise NumericError("association probabilities must lie in [0, 1]")


@dataclass(frozen=True)
class LoadReport:
    """Per-tier activity, mean load and equivalent SINR requirement."""

    active_prob: tuple          # (1.0, p_a2)
    mean_load: tuple            # (E[U_1], E[U_2]), each >= 1
    sinr_threshold: tuple       # (gamma_0_1, gamma_0_2), > 0


@dataclass(frozen=True)
class EvalReport:
    """Success probability and/or ASE of one policy under one method.

    ``method`` is one of closed-form | quadrature | lower-bound | simulation.
    Success fields are None for ASE-only evaluations and vice versa.
    """

    method: str
    success_total: float | None = None
    success_tier1: float | None = None
    success_tier2: float | None = None
    ase: float | None = None    # nat/s/Hz/m^2

    def __post_init__(self):
        for p in (self.success_total, self.success_tier1, self.success_tier2):
            if p is not None and not -1e-12 <= p <= 1 + 1e-9:
                raise NumericError(f"probability out of range: {p}")
        if (self.method != "simulation"
                and None not in (self.success_total, self.success_tier1, self.success_tier2)):
            if abs(self.success_total - self.success_tier1 - self.success_tier2) > 1e-10:
                raise NumericError("tier success probabilities do not add up")

    @property
    def ase_bps(self) -> float:
        """ASE converted to bit/s/Hz/m^2."""
        if self.ase is None:
            raise ValueError("no ASE value in this report")
        return nats_to_bits(self.ase)


# ---------------------------------------------------------------------------
# association and load


def _policy_q(policy) -> np.ndarray:
    """Caching probability vector of a policy.

    Bare ndarrays are accepted unvalidated so optimizer internals can probe
    points a finite-difference step outside the box.
    """
    if isinstance(policy, CachingPolicy):
        return policy.q
    return np.asarray(policy, dtype=float)


def _ratio_constants(cfg: NetworkConfig):
    """(c21, c12): cross-tier BRP weights lambda_jk (P_jk B_jk)^(2/alpha)."""
    two_a = 2.0 / cfg.alpha
    c21 = (cfg.lambda_helper / cfg.lambda_mbs) * (
        (cfg.p_helper / cfg.p_mbs) * (cfg.bias_helper / cfg.bias_mbs)) ** two_a
    if c21 == 0:
        # bias_helper = 0 disables the helper tier entirely
        return 0.0, np.inf
    return c21, 1.0 / c21


def association(cfg: NetworkConfig, catalog: Catalog, policy: CachingPolicy) -> AssociationReport:
    """Tier association probabilities under biased received power.

    Given rank f, the helper tier wins with probability
    q_f / (lambda_12 (P_12 B_12)^(2/alpha) + q_f); files with q_f = 0 always
    associate with the MBS tier.
    """
    if cfg.lambda_mbs <= 0 and cfg.lambda_helper <= 0:
        raise ValueError("at least one tier must have positive density")
    q = _policy_q(policy)
    pf = catalog.popularity
    c21, c12 = _ratio_constants(cfg)
    cond = np.empty((catalog.n_files, 2))
    cond[:, _MBS] = 1.0 / (1.0 + q * c21)
    with np.errstate(invalid="ignore"):
        cond[:, _HELPER] = np.where(q > 0, q / (c12 + q), 0.0)
    p1 = float(pf @ cond[:, _MBS])
    p2 = float(pf @ cond[:, _HELPER])
    return AssociationReport(tier_prob=(p1, p2), conditional=cond)


def active_probability(assoc_prob: float, lambda_user: float, lambda_bs: float) -> float:
    """Probability that a BS serving a tier with association share
    ``assoc_prob`` has at least one user (cell-size moment match)."""
    return 1.0 - (1.0 + assoc_prob * lambda_user / (3.5 * lambda_bs)) ** -3.5


def mean_load(assoc_prob: float, lambda_user: float, lambda_bs: float) -> float:
    """Mean number of users sharing the typical user's serving BS."""
    return 1.0 + 1.28 * lambda_user * assoc_prob / lambda_bs


def _sinr_threshold(cfg: NetworkConfig, load: float, m_k: int) -> float:
    """Equivalent per-user SINR requirement 2^(R0 load / (W m_k)) - 1."""
    return 2.0 ** (cfg.rate_target * load / (cfg.bandwidth * m_k)) - 1.0


def load_report(cfg: NetworkConfig, catalog: Catalog, policy: CachingPolicy) -> LoadReport:
    """Activity probabilities, mean loads and SINR thresholds per tier.

    The MBS tier is always active (users vastly outnumber MBSs); the helper
    tier thins with its association share.
    """
    rep = association(cfg, catalog, policy)
    p2 = rep.tier_prob[_HELPER]
    pa2 = active_probability(p2, cfg.lambda_user, cfg.lambda_helper)
    u1 = mean_load(rep.tier_prob[_MBS], cfg.lambda_user, cfg.lambda_mbs)
    u2 = mean_load(p2, cfg.lambda_user, cfg.lambda_helper)
    g1 = _sinr_threshold(cfg, u1, cfg.m_mbs)
    g2 = _sinr_threshold(cfg, u2, cfg.m_helper)
    return LoadReport(active_prob=(1.0, pa2), mean_load=(u1, u2),
                      sinr_threshold=(g1, g2))


# ---------------------------------------------------------------------------
# success probability


def _tier_params(cfg: NetworkConfig):
    lam = (cfg.lambda_mbs, cfg.lambda_helper)
    pw = (cfg.p_mbs, cfg.p_helper)
    m = (cfg.m_mbs, cfg.m_helper)
    b = (cfg.bias_mbs, cfg.bias_helper)
    return lam, pw, m, b


def _denominator(cfg, k: int, q: np.ndarray, pa: tuple, gamma_k) -> np.ndarray:
    """Normalized interference-plus-association weight for serving tier k.

    Affine in the helper caching probability: returns a + q * b where the
    coefficients sum the per-interferer-tier kernels. ``gamma_k`` may be a
    scalar threshold or an array (quadrature nodes); the result broadcasts
    to shape (len(gamma_k), len(q)) in that case.
    """
    lam, pw, m, b = _tier_params(cfg)
    two_a = 2.0 / cfg.alpha
    a_neg = -two_a
    g = np.asarray(gamma_k, dtype=float)
    a_coef = np.zeros_like(g)
    b_coef = np.zeros_like(g)
    for j in (_MBS, _HELPER):
        ljk = lam[j] / lam[k]
        pjk = (pw[j] / pw[k]) ** two_a
        mjk = m[j] / m[k]
        bjk = b[j] / b[k]
        z1 = hyp2f1_neg_arg(a_neg, m[j], 1.0 + a_neg, -g / (mjk * bjk)) - 1.0
        z2 = interference_gamma_factor(cfg.alpha, m[j]) * (g / mjk) ** two_a
        if j == _MBS:
            # q_{f,1} = 1 and p_{a,1} = 1: no unrestricted-interferer term
            a_coef = a_coef + ljk * pjk * bjk ** two_a * (z1 + 1.0)
        else:
            a_coef = a_coef + ljk * pjk * pa[j] * z2
            b_coef = b_coef + ljk * pjk * (
                pa[j] * bjk ** two_a * z1 - pa[j] * z2 + bjk ** two_a)
    if g.ndim == 0:
        return a_coef + q * b_coef
    return a_coef[:, None] + np.multiply.outer(b_coef, q)


def success_probability(cfg: NetworkConfig, catalog: Catalog, policy: CachingPolicy) -> EvalReport:
    """Success probability of the typical user, total and per tier.

    Combines the association distribution, the mean-load SINR thresholds and
    the interference kernels; decreasing in the rate target and in the user
    density.
    """
    loads = load_report(cfg, catalog, policy)
    pa = loads.active_prob
    q = _policy_q(policy)
    pf = catalog.popularity
    tiers = []
    for k, qk in ((_MBS, np.ones_like(q)), (_HELPER, q)):
        denom = _denominator(cfg, k, q, pa, loads.sinr_threshold[k])
        tiers.append(float(np.sum(pf * qk / denom)))
    return EvalReport(method="closed-form", success_total=tiers[0] + tiers[1],
                      success_tier1=tiers[0], success_tier2=tiers[1])


def helper_tier_success(cfg: NetworkConfig, catalog: Catalog, policy: CachingPolicy,
                        *, active_prob: float | None = None,
                        sinr_threshold: float | None = None) -> float:
    """Helper-tier success probability through the C1/C2/C3 kernels.

    Identical to the helper-tier term of :func:`success_probability`;
    ``active_prob`` and ``sinr_threshold`` may be overridden to probe the
    monotonicity of the expression or to evaluate bounds.
    """
    loads = load_report(cfg, catalog, policy)
    pa2 = loads.active_prob[_HELPER] if active_prob is None else active_prob
    g2 = loads.sinr_threshold[_HELPER] if sinr_threshold is None else sinr_threshold
    c1, c2, c3 = kernels_c123(g2, cfg)
    q = _policy_q(policy)
    return float(np.sum(catalog.popularity * q / (c1 + c2 * pa2 + c3 * pa2 * q + q)))


def _waterfill_q(pf: np.ndarray, c1: float, c2: float, budget: float,
                 rel_tol: float = 1e-10, max_iter: int = 200):
    """Maximize sum of pf*q/(c1 + c2*q) over the capped simplex.

    KKT solution q_f = clip((sqrt(c1 pf / mu) - c1) / c2, 0, 1) with the
    multiplier found by bisection on the monotone budget curve. Returns
    (q, mu, iterations).
    """
    n = pf.size
    if budget >= n:
        return np.ones(n), 0.0, 0
    if budget <= 0:
        return np.zeros(n), np.inf, 0
    c2 = max(c2, 1e-300)

    def q_of(mu):
        return np.clip((np.sqrt(c1 * pf / mu) - c1) / c2, 0.0, 1.0)

    # bracket: at mu_lo everything saturates at 1, at mu_hi everything is 0
    pmax, pmin = float(pf.max()), float(pf[pf > 0].min())
    mu_lo = c1 * pmin / (c1 + c2) ** 2 * 0.25
    mu_hi = pmax / c1 * 4.0
    it = 0
    for it in range(max_iter):
        mu = np.sqrt(mu_lo * mu_hi)
        if q_of(mu).sum() > budget:
            mu_lo = mu
        else:
            mu_hi = mu
        if mu_hi - mu_lo <= rel_tol * mu_lo:
            break
    mu = np.sqrt(mu_lo * mu_hi)
    return q_of(mu), mu, it + 1


def _assoc_upper_bound(cfg: NetworkConfig, catalog: Catalog):
    """Largest achievable helper-tier association share and its maximizer."""
    _, c12 = _ratio_constants(cfg)
    q, _, _ = _waterfill_q(catalog.popularity, c12, 1.0, float(catalog.cache_size))
    p2 = float(np.sum(catalog.popularity * q / (c12 + q)))
    return p2, q


def lower_bound_constants(cfg: NetworkConfig, catalog: Catalog):
    """Policy-independent (gamma_bar, pa_bar) built from the association
    upper bound; substituting them into the helper-tier expression yields a
    concave lower bound on the helper-tier success probability."""
    p2_ub, _ = _assoc_upper_bound(cfg, catalog)
    pa_bar = active_probability(p2_ub, cfg.lambda_user, cfg.lambda_helper)
    load = mean_load(p2_ub, cfg.lambda_user, cfg.lambda_helper)
    gamma_bar = _sinr_threshold(cfg, load, cfg.m_helper)
    return gamma_bar, pa_bar


def success_lower_bound(cfg: NetworkConfig, catalog: Catalog, policy: CachingPolicy) -> EvalReport:
    """Concave lower bound on the success probability.

    The helper tier is evaluated with the policy-independent worst-case
    activity and SINR requirement; the MBS tier keeps its exact term. Tight
    when the user-to-helper density ratio is small.
    """
    gamma_bar, pa_bar = lower_bound_constants(cfg, catalog)
    tier2 = helper_tier_success(cfg, catalog, policy,
                                active_prob=pa_bar, sinr_threshold=gamma_bar)
    exact = success_probability(cfg, catalog, policy)
    return EvalReport(method="lower-bound",
                      success_total=exact.success_tier1 + tier2,
                      success_tier1=exact.success_tier1,
                      success_tier2=tier2)


# ---------------------------------------------------------------------------
# ASE: quadrature route


def _gl_nodes(order: int):
    x, w = np.polynomial.legendre.leggauss(order)
    return x, w


_GL_LO = _gl_nodes(10)
_GL_HI = _gl_nodes(20)


def _panel(f, lo, hi, nodes):
    x, w = nodes
    mid, half = 0.5 * (lo + hi), 0.5 * (hi - lo)
    vals = f(mid + half * x)
    return half * np.tensordot(w, vals, axes=(0, 0))


def _adaptive_quad_vec(f, lo: float, hi: float, atol: float, max_depth: int = 48):
    """Adaptive vector-valued quadrature on [lo, hi].

    ``f`` maps a node vector (n,) to an (n, m) matrix; the integral of each
    column is returned. Panels are bisected until the 10- vs 20-point
    Gauss-Legendre estimates agree within the panel's share of ``atol``.
    """
    total = None
    stack = [(lo, hi, 0)]
    span = hi - lo
    while stack:
        a, b, depth = stack.pop()
        coarse = _panel(f, a, b, _GL_LO)
        fine = _panel(f, a, b, _GL_HI)
        err = np.max(np.abs(fine - coarse))
        if err <= atol * max((b - a) / span, 1e-3) or depth >= max_depth:
            if depth >= max_depth and err > 1e3 * atol:
                raise NumericError(
                    f"rate integral did not converge on [{a:.3g}, {b:.3g}], "
                    f"error {err:.3g}")
            total = fine if total is None else total + fine
        else:
            m = 0.5 * (a + b)
            stack.append((a, m, depth + 1))
            stack.append((m, b, depth + 1))
    return total


def _truncation_limit(cfg: NetworkConfig, k: int, pa: tuple) -> float:
    """Upper limit where the rate integrand of tier k falls below the floor.

    The denominator grows like K1 e^(2x/alpha) (the MBS-tier term alone
    guarantees exponential growth), so inverting the floor gives the cut.
    """
    lam, pw, m, _ = _tier_params(cfg)
    two_a = 2.0 / cfg.alpha
    k1 = sum(
        (lam[j] / lam[k]) * (pw[j] / pw[k]) ** two_a * pa[j]
        * interference_gamma_factor(cfg.alpha, m[j]) * (m[j] / m[k]) ** -two_a
        for j in (_MBS, _HELPER))
    x = (cfg.alpha / 2.0) * np.log(1.0 / (_INTEGRAND_FLOOR * k1))
    return max(x + 2.0, 5.0)


def ase_quadrature(cfg: NetworkConfig, catalog: Catalog, policy: CachingPolicy) -> EvalReport:
    """ASE of the cache-enabled network by numerical rate integration.

    Evaluates the per-file, per-tier mean-rate integrals over the truncated
    half line and combines them with activity, density and antenna weights.
    Result in nat/s/Hz/m^2.
    """
    loads = load_report(cfg, catalog, policy)
    rep = association(cfg, catalog, policy)
    pa = loads.active_prob
    q = _policy_q(policy)
    pf = catalog.popularity
    lam = (cfg.lambda_mbs, cfg.lambda_helper)
    m = (cfg.m_mbs, cfg.m_helper)
    total = 0.0
    for k, qk in ((_MBS, np.ones_like(q)), (_HELPER, q)):
        mass = pf * qk
        live = mass > 0
        if not np.any(live):
            continue
        uq, inv = np.unique(q[live], return_inverse=True)

        def integrand(x, k=k, uq=uq):
            return 1.0 / _denominator(cfg, k, uq, pa, np.expm1(x))

        hi = _truncation_limit(cfg, k, pa)
        integrals = _adaptive_quad_vec(integrand, 0.0, hi, _QUAD_ATOL)
        per_file = integrals[inv]
        total += lam[k] * pa[k] * m[k] * float(
            np.sum(mass[live] / rep.tier_prob[k] * per_file))
    return EvalReport(method="quadrature", ase=total)


# ---------------------------------------------------------------------------
# ASE: closed forms (equal association biases)


def _log1p_over_z(z):
    """ln(1 + z)/z continued through z = 0."""
    z = np.asarray(z, dtype=float)
    safe = np.where(z > 1e-12, z, 1.0)
    return np.where(z > 1e-12, np.log1p(safe) / safe, 1.0 - z / 2.0)


def _k_constants(cfg: NetworkConfig, k: int, pa: tuple, q: np.ndarray):
    lam, pw, m, _ = _tier_params(cfg)
    two_a = 2.0 / cfg.alpha
    k1 = sum(
        (lam[j] / lam[k]) * (pw[j] / pw[k]) ** two_a * pa[j]
        * interference_gamma_factor(cfg.alpha, m[j]) * (m[j] / m[k]) ** -two_a
        for j in (_MBS, _HELPER))
    # p_{a,1} = 1 leaves only the helper tier in the idle-interferer weight
    k2 = (lam[_HELPER] / lam[k]) * (pw[_HELPER] / pw[k]) ** two_a * q * (1.0 - pa[_HELPER])
    return k1, k2


def ase_closed_form(cfg: NetworkConfig, catalog: Catalog, policy: CachingPolicy) -> EvalReport:
    """Closed-form ASE approximation, valid for equal association biases.

    Splits the rate integral at ln 2 and replaces both pieces with their
    small/large-rate asymptotics; no numerical integration. Raises
    UnsupportedConfig when the biases differ.
    """
    if abs(cfg.bias_mbs - cfg.bias_helper) > 1e-12 * max(cfg.bias_mbs, cfg.bias_helper):
        raise UnsupportedConfig("closed-form ASE requires equal association biases")
    loads = load_report(cfg, catalog, policy)
    rep = association(cfg, catalog, policy)
    pa = loads.active_prob
    q = _policy_q(policy)
    pf = catalog.popularity
    lam = (cfg.lambda_mbs, cfg.lambda_helper)
    m = (cfg.m_mbs, cfg.m_helper)
    quarter = 4.0 ** (-1.0 / cfg.alpha)
    total = 0.0
    for k, qk in ((_MBS, np.ones_like(q)), (_HELPER, q)):
        k1, k2 = _k_constants(cfg, k, pa, q)
        z = (k2 / k1) * quarter
        tail = (cfg.alpha / (2.0 * k1)) * quarter * _log1p_over_z(z)
        head = NATS_PER_BIT  # ln 2
        s = float(np.sum(pf * qk / rep.tier_prob[k] * tail))
        total += pa[k] * lam[k] * m[k] * (head + s)
    return EvalReport(method="closed-form", ase=total)


# ---------------------------------------------------------------------------
# traditional (backhaul-limited) baseline


def _all_ones_policy(catalog: Catalog) -> CachingPolicy:
    return CachingPolicy(np.ones(catalog.n_files), catalog.n_files)


def traditional_ase_quadrature(cfg: NetworkConfig, catalog: Catalog,
                               trad: TraditionalConfig) -> EvalReport:
    """ASE of the baseline where every PBS reaches the whole catalog over a
    finite backhaul; the PBS-tier rate integral stops at the per-cell
    backhaul ceiling (converted to nats)."""
    ones = _all_ones_policy(catalog)
    loads = load_report(cfg, catalog, ones)
    rep = association(cfg, catalog, ones)
    pa = loads.active_prob
    lam = (cfg.lambda_mbs, cfg.lambda_helper)
    m = (cfg.m_mbs, cfg.m_helper)
    cap_nats = trad.backhaul_capacity_pbs * NATS_PER_BIT / cfg.bandwidth
    one = np.ones(1)
    total = 0.0
    for k in (_MBS, _HELPER):
        hi = _truncation_limit(cfg, k, pa)
        if k == _HELPER:
            hi = min(hi, cap_nats)
        if hi <= 0:
            continue

        def integrand(x, k=k):
            return 1.0 / _denominator(cfg, k, one, pa, np.expm1(x))

        integral = float(_adaptive_quad_vec(integrand, 0.0, hi, _QUAD_ATOL)[0])
        total += lam[k] * pa[k] * m[k] / rep.tier_prob[k] * integral
    return EvalReport(method="quadrature", ase=total)


def traditional_ase_closed_form(cfg: NetworkConfig, catalog: Catalog,
                                trad: TraditionalConfig) -> EvalReport:
    """Closed-form baseline ASE: the PBS tier contributes its backhaul
    ceiling per active cell, the MBS tier its split-integral approximation.

    Accurate for backhaul ceilings below one bit per channel use; a warning
    is emitted above that.
    """
    if abs(cfg.bias_mbs - cfg.bias_helper) > 1e-12 * max(cfg.bias_mbs, cfg.bias_helper):
        raise UnsupportedConfig("closed-form ASE requires equal association biases")
    cap_nats = trad.backhaul_capacity_pbs * NATS_PER_BIT / cfg.bandwidth
    if cap_nats > NATS_PER_BIT:
        import warnings
        warnings.warn(
            "backhaul ceiling exceeds ln 2 nat per channel use; the "
            "closed form loses accuracy", stacklevel=2)
    ones = _all_ones_policy(catalog)
    loads = load_report(cfg, catalog, ones)
    rep = association(cfg, catalog, ones)
    pa = loads.active_prob
    quarter = 4.0 ** (-1.0 / cfg.alpha)
    k1, k2v = _k_constants(cfg, _MBS, pa, np.ones(1))
    k2 = float(k2v[0])
    z = (k2 / k1) * quarter
    tail = (cfg.alpha / (2.0 * rep.tier_prob[_MBS] * k1)) * quarter * float(_log1p_over_z(z))
    mbs = cfg.lambda_mbs * cfg.m_mbs * (NATS_PER_BIT + tail)
    pbs = cfg.lambda_helper * pa[_HELPER] * cap_nats
    return EvalReport(method="closed-form", ase=mbs + pbs)
