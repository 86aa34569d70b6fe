"""Monte Carlo ground truth for the cache-enabled network.

One snapshot realizes the three Poisson point processes on a toroidal
square, draws cache contents per helper, associates every user with its
best biased-received-power station among those that can serve its request,
computes loads, fading, SINR and per-user rates, and aggregates per-BS
throughput. Idle helpers are muted; all MBSs transmit.

Implementation notes: the user-station distance matrices and fading draws
dominate the cost and are kept in float32 (relative error ~1e-6, far below
Monte Carlo noise); per-user SINR and rates are finished in float64. All
randomness flows through the passed generator in a fixed draw order, so a
seed pins a snapshot bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from .errors import InvalidSnapshot
from .model import Catalog, CachingPolicy, NetworkConfig, TraditionalConfig, NATS_PER_BIT

__all__ = [
    "Region",
    "Snapshot",
    "EstimateReport",
    "sample_ppp",
    "realize_caches",
    "associate",
    "simulate_snapshot",
    "simulate_traditional",
    "estimate",
    "dump_snapshot",
]

_F32 = np.float32


@dataclass(frozen=True)
class Region:
    """Square deployment region with wrap-around (toroidal) distances."""

    side: float

    def __post_init__(self):
        if self.side <= 0:
            raise ValueError("side must be > 0")

    @property
    def area(self) -> float:
        return self.side * self.side


@dataclass
class Snapshot:
    """One Monte Carlo realization.

    Stage outputs filled by :func:`simulate_snapshot`; ``assoc_index`` points
    into the tier's own point list. Ranks in ``requests`` are 1-based.
    """

    region: Region
    mbs_xy: np.ndarray
    helper_xy: np.ndarray
    user_xy: np.ndarray
    requests: np.ndarray
    cache: np.ndarray                      # (n_helpers, n_files) bool
    assoc_tier: np.ndarray | None = None   # 1 = MBS, 2 = helper
    assoc_index: np.ndarray | None = None
    mbs_load: np.ndarray | None = None
    helper_load: np.ndarray | None = None
    helper_active: np.ndarray | None = None
    sinr: np.ndarray | None = None
    rate: np.ndarray | None = None         # bit/s
    mbs_throughput: np.ndarray | None = None
    helper_throughput: np.ndarray | None = None

    @property
    def n_users(self) -> int:
        return self.user_xy.shape[0]


@dataclass(frozen=True)
class EstimateReport:
    """Monte Carlo mean with a 95% confidence half-width.

    ``mean`` and ``ci_halfwidth`` are scalars, or arrays when the metric was
    evaluated on a grid (one success probability per rate target).
    """

    mean: object
    ci_halfwidth: object
    n_snapshots: int
    seed: int


def sample_ppp(density: float, region: Region, rng: np.random.Generator) -> np.ndarray:
    """Poisson point process on the region: Poisson count, uniform positions."""
    if density < 0:
        raise ValueError("density must be >= 0")
    n = rng.poisson(density * region.area)
    return rng.uniform(0.0, region.side, size=(n, 2))


def realize_caches(policy: CachingPolicy, n_helpers: int,
                   rng: np.random.Generator) -> np.ndarray:
    """Draw cache contents per helper with the interval method.

    File intervals of length q_f tile [0, sum q); one uniform u per helper
    selects the files whose intervals contain u + i for integer i. Marginal
    inclusion probability is exactly q_f and no draw exceeds the cache size.
    """
    q = policy.q
    n_files = q.size
    u = rng.random(n_helpers)
    out = np.zeros((n_helpers, n_files), dtype=bool)
    total = float(q.sum())
    if total <= 0:
        return out
    if np.all(q >= 1.0):
        return np.ones((n_helpers, n_files), dtype=bool)
    cum = np.cumsum(q)
    n_pts = int(np.ceil(total))
    pts = u[:, None] + np.arange(n_pts)[None, :]
    valid = pts < total - 1e-12
    files = np.searchsorted(cum, pts.ravel(), side="right").reshape(n_helpers, n_pts)
    rows = np.broadcast_to(np.arange(n_helpers)[:, None], files.shape)
    out[rows[valid], files[valid]] = True
    return out


def _torus_d2(a: np.ndarray, b: np.ndarray, side: float) -> np.ndarray:
    """Squared wrap-around distances, (len(a), len(b)) in float32."""
    a = a.astype(_F32, copy=False)
    b = b.astype(_F32, copy=False)
    side = _F32(side)
    dx = np.abs(a[:, 0][:, None] - b[:, 0][None, :])
    np.minimum(dx, side - dx, out=dx)
    dy = np.abs(a[:, 1][:, None] - b[:, 1][None, :])
    np.minimum(dy, side - dy, out=dy)
    dx *= dx
    dy *= dy
    dx += dy
    return dx


def _associate_core(snap: Snapshot, cfg: NetworkConfig,
                    d2_mbs: np.ndarray, d2_helper: np.ndarray):
    """Best-BRP association given precomputed squared distances.

    MBSs always qualify; helpers only where they cache the request. Within a
    tier BRP ordering equals distance ordering, so only the cross-tier
    comparison needs the path-loss exponent.
    """
    if snap.mbs_xy.shape[0] == 0:
        raise InvalidSnapshot("no MBS in the region; requests cannot be guaranteed")
    n_users = snap.n_users
    half_alpha = cfg.alpha / 2.0
    i_mbs = np.argmin(d2_mbs, axis=1) if n_users else np.empty(0, dtype=np.intp)
    r2_mbs = d2_mbs[np.arange(n_users), i_mbs]
    tier = np.ones(n_users, dtype=np.int8)
    index = i_mbs.copy()
    if snap.helper_xy.shape[0] and n_users:
        eligible = snap.cache[:, snap.requests - 1].T
        d2e = np.where(eligible, d2_helper, _F32(np.inf))
        i_h = np.argmin(d2e, axis=1)
        r2_h = d2e[np.arange(n_users), i_h]
        with np.errstate(over="ignore"):
            brp_m = cfg.p_mbs * cfg.bias_mbs * np.power(r2_mbs.astype(float), -half_alpha)
            brp_h = np.where(np.isfinite(r2_h),
                             cfg.p_helper * cfg.bias_helper
                             * np.power(r2_h.astype(float), -half_alpha), 0.0)
        helper_wins = brp_h > brp_m
        tier[helper_wins] = 2
        index[helper_wins] = i_h[helper_wins]
    return tier, index


def associate(snap: Snapshot, cfg: NetworkConfig):
    """Fill and return (tier, index) association arrays for a snapshot."""
    d2_mbs = _torus_d2(snap.user_xy, snap.mbs_xy, snap.region.side)
    d2_helper = _torus_d2(snap.user_xy, snap.helper_xy, snap.region.side)
    tier, index = _associate_core(snap, cfg, d2_mbs, d2_helper)
    snap.assoc_tier, snap.assoc_index = tier, index
    return tier, index


def _loads(snap: Snapshot):
    t2 = snap.assoc_tier == 2
    snap.mbs_load = np.bincount(snap.assoc_index[~t2],
                                minlength=snap.mbs_xy.shape[0])
    snap.helper_load = np.bincount(snap.assoc_index[t2],
                                   minlength=snap.helper_xy.shape[0])
    snap.helper_active = snap.helper_load > 0


def _link_budget(snap: Snapshot, cfg: NetworkConfig, rng: np.random.Generator,
                 d2_mbs: np.ndarray, d2_helper: np.ndarray):
    """Fading, SINR and per-user rates.

    Serving links fade exponentially (unit mean); interference from an
    m-antenna station fades Gamma(m, 1/m). Idle helpers are excluded from
    the interference sums; every MBS transmits regardless of load.
    """
    n_users = snap.n_users
    n_mbs = snap.mbs_xy.shape[0]
    half_alpha = _F32(cfg.alpha / 2.0)
    h_serve = rng.standard_exponential(n_users)
    m1 = cfg.m_mbs
    h_mbs = rng.standard_gamma(m1, size=(n_users, n_mbs), dtype=_F32)
    if m1 > 1:
        h_mbs /= _F32(m1)
    act = np.flatnonzero(snap.helper_active)
    h_act = rng.standard_exponential(size=(n_users, act.size), dtype=_F32)

    if n_users == 0:
        snap.sinr = np.zeros(0)
        snap.rate = np.zeros(0)
        snap.mbs_throughput = np.zeros(n_mbs)
        snap.helper_throughput = np.zeros(snap.helper_xy.shape[0])
        return

    pow_mbs = h_mbs
    pow_mbs *= np.exp(-half_alpha * np.log(d2_mbs))
    pow_mbs *= _F32(cfg.p_mbs)
    i_from_mbs = pow_mbs.sum(axis=1, dtype=np.float64)

    if act.size:
        pow_act = h_act
        pow_act *= np.exp(-half_alpha * np.log(d2_helper[:, act]))
        pow_act *= _F32(cfg.p_helper)
        i_from_helpers = pow_act.sum(axis=1, dtype=np.float64)
    else:
        pow_act = np.zeros((n_users, 0), dtype=_F32)
        i_from_helpers = np.zeros(n_users)

    users = np.arange(n_users)
    t2 = snap.assoc_tier == 2
    t1 = ~t2
    total_i = i_from_mbs + i_from_helpers + cfg.noise_power
    sinr = np.empty(n_users)
    rate = np.empty(n_users)

    # MBS-served users: power split over m1 streams, own column removed
    r2_own = d2_mbs[users[t1], snap.assoc_index[t1]].astype(float)
    own_i = pow_mbs[users[t1], snap.assoc_index[t1]].astype(float)
    signal = (cfg.p_mbs / m1) * h_serve[t1] * r2_own ** (-cfg.alpha / 2.0)
    sinr[t1] = signal / (total_i[t1] - own_i)
    share = cfg.bandwidth * m1 / snap.mbs_load[snap.assoc_index[t1]]
    rate[t1] = share * np.log2(1.0 + sinr[t1])

    # helper-served users
    col_of = np.full(snap.helper_xy.shape[0], -1)
    col_of[act] = np.arange(act.size)
    serve_col = col_of[snap.assoc_index[t2]]
    r2_own = d2_helper[users[t2], snap.assoc_index[t2]].astype(float)
    own_i = pow_act[users[t2], serve_col].astype(float)
    signal = cfg.p_helper * h_serve[t2] * r2_own ** (-cfg.alpha / 2.0)
    sinr[t2] = signal / (total_i[t2] - own_i)
    share = cfg.bandwidth / snap.helper_load[snap.assoc_index[t2]]
    rate[t2] = share * np.log2(1.0 + sinr[t2])

    snap.sinr = sinr
    snap.rate = rate
    snap.mbs_throughput = np.bincount(snap.assoc_index[t1], weights=rate[t1],
                                      minlength=n_mbs)
    snap.helper_throughput = np.bincount(snap.assoc_index[t2], weights=rate[t2],
                                         minlength=snap.helper_xy.shape[0])


def simulate_snapshot(cfg: NetworkConfig, catalog: Catalog, policy: CachingPolicy,
                      region: Region, rng: np.random.Generator) -> Snapshot:
    """Produce one complete cache-enabled snapshot.

    Draw order: MBS points, helper points, user points, requests, caches,
    serving fades, MBS interference fades, helper interference fades.
    """
    mbs_xy = sample_ppp(cfg.lambda_mbs, region, rng)
    helper_xy = sample_ppp(cfg.lambda_helper, region, rng)
    user_xy = sample_ppp(cfg.lambda_user, region, rng)
    n_users = user_xy.shape[0]
    cdf = np.cumsum(catalog.popularity)
    requests = np.minimum(np.searchsorted(cdf, rng.random(n_users), side="right"),
                          catalog.n_files - 1).astype(np.int64) + 1
    cache = realize_caches(policy, helper_xy.shape[0], rng)
    snap = Snapshot(region=region, mbs_xy=mbs_xy, helper_xy=helper_xy,
                    user_xy=user_xy, requests=requests, cache=cache)
    d2_mbs = _torus_d2(user_xy, mbs_xy, region.side)
    d2_helper = _torus_d2(user_xy, helper_xy, region.side)
    snap.assoc_tier, snap.assoc_index = _associate_core(snap, cfg, d2_mbs, d2_helper)
    _loads(snap)
    _link_budget(snap, cfg, rng, d2_mbs, d2_helper)
    return snap


def simulate_traditional(cfg: NetworkConfig, catalog: Catalog, trad: TraditionalConfig,
                         region: Region, rng: np.random.Generator) -> Snapshot:
    """Backhaul-limited baseline snapshot.

    Identical to the cache-enabled path with every file reachable at every
    PBS (same draw order, so matching seeds give matching realizations up
    to the rate cap), then per-user rates are capped by the backhaul share.
    """
    full_cat = Catalog(catalog.n_files, catalog.n_files, catalog.zipf_skew)
    ones = CachingPolicy(np.ones(catalog.n_files), catalog.n_files)
    snap = simulate_snapshot(cfg, full_cat, ones, region, rng)
    t2 = snap.assoc_tier == 2
    cap = trad.backhaul_capacity_pbs / np.maximum(snap.helper_load[snap.assoc_index[t2]], 1)
    snap.rate[t2] = np.minimum(snap.rate[t2], cap)
    n_mbs = snap.mbs_xy.shape[0]
    snap.mbs_throughput = np.bincount(snap.assoc_index[~t2], weights=snap.rate[~t2],
                                      minlength=n_mbs)
    snap.helper_throughput = np.bincount(snap.assoc_index[t2], weights=snap.rate[t2],
                                         minlength=snap.helper_xy.shape[0])
    return snap


# ---------------------------------------------------------------------------
# estimation


def _snapshot_metric(snap: Snapshot, metric: str, region: Region,
                     cfg: NetworkConfig, rate_targets):
    if metric == "success":
        if snap.n_users == 0:
            return None
        return (snap.rate[None, :] >= np.asarray(rate_targets)[:, None]).mean(axis=1)
    if metric == "ase":
        total = snap.rate.sum() if snap.n_users else 0.0
        return np.array([total / (region.area * cfg.bandwidth) * NATS_PER_BIT])
    raise ValueError(f"unknown metric {metric!r}")


def _run_batch(args):
    (metric, cfg, catalog, policy, trad, region, entropies, rate_targets) = args
    vals = []
    for ent in entropies:
        rng = np.random.default_rng(np.random.SeedSequence(ent))
        if trad is not None:
            snap = simulate_traditional(cfg, catalog, trad, region, rng)
        else:
            snap = simulate_snapshot(cfg, catalog, policy, region, rng)
        vals.append(_snapshot_metric(snap, metric, region, cfg, rate_targets))
    return vals


def estimate(metric: str, cfg: NetworkConfig, catalog: Catalog,
             policy: CachingPolicy | None, region: Region, *,
             n_snapshots: int, seed: int,
             rate_targets=None, trad: TraditionalConfig | None = None,
             workers: int = 1) -> EstimateReport:
    """Monte Carlo estimate of ``success`` or ``ase``.

    ``rate_targets`` (success only) evaluates one estimate per target from
    the same snapshots; defaults to the config's rate target. Passing
    ``trad`` simulates the backhaul-limited baseline instead of ``policy``.
    Snapshot i derives its generator from (seed, i), so results do not
    depend on the worker count; snapshots without users carry no success
    information and reduce the effective count.
    """
    if n_snapshots < 1:
        raise ValueError("n_snapshots must be >= 1")
    scalar_target = rate_targets is None
    targets = [cfg.rate_target] if scalar_target else list(rate_targets)
    entropies = [(seed, i) for i in range(n_snapshots)]
    args = (metric, cfg, catalog, policy, trad, region, entropies, targets)
    if workers > 1 and n_snapshots > 1:
        chunks = [entropies[i::workers] for i in range(workers)]
        batches = [(metric, cfg, catalog, policy, trad, region, c, targets)
                   for c in chunks if c]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_run_batch, batches))
        # restore snapshot order: chunk j holds snapshots j, j+workers, ...
        vals = [None] * n_snapshots
        for j, part in enumerate(parts):
            for slot, v in enumerate(part):
                vals[j + slot * workers] = v
    else:
        vals = _run_batch(args)
    rows = np.array([v for v in vals if v is not None], dtype=float)
    if rows.size == 0:
        raise InvalidSnapshot("no snapshot produced any users")
    mean = rows.mean(axis=0)
    if rows.shape[0] > 1:
        ci = 1.96 * rows.std(axis=0, ddof=1) / np.sqrt(rows.shape[0])
    else:
        ci = np.full(mean.shape, np.nan)
    if metric == "ase" or scalar_target:
        return EstimateReport(float(mean[0]), float(ci[0]), rows.shape[0], seed)
    return EstimateReport(mean, ci, rows.shape[0], seed)


def dump_snapshot(snap: Snapshot, path):
    """Debug dump, line oriented: one record per entity.

    ``mbs i x y load`` / ``helper i x y load active`` / ``user i x y rank
    tier serving sinr rate``.
    """
    with open(path, "w", encoding="utf-8") as fh:
        for i, (x, y) in enumerate(snap.mbs_xy):
            fh.write(f"mbs {i} {x:.6f} {y:.6f} {snap.mbs_load[i]}\n")
        for i, (x, y) in enumerate(snap.helper_xy):
            fh.write(f"helper {i} {x:.6f} {y:.6f} {snap.helper_load[i]} "
                     f"{int(snap.helper_active[i])}\n")
        for i, (x, y) in enumerate(snap.user_xy):
            fh.write(f"user {i} {x:.6f} {y:.6f} {snap.requests[i]} "
                     f"{snap.assoc_tier[i]} {snap.assoc_index[i]} "
                     f"{snap.sinr[i]:.8g} {snap.rate[i]:.8g}\n")
