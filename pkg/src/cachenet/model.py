"""Configuration types, Zipf demand model and baseline caching policies.

Conventions used throughout the package:

* densities are in 1/m^2, powers in watts (use :func:`dbm_to_watts` at the
  config boundary), bandwidth in Hz, rates in bit/s,
* file ranks are 1-based (rank 1 = most popular); popularity vectors are
  plain 0-based numpy arrays where entry ``i`` belongs to rank ``i + 1``,
* area spectral efficiency is handled internally in nat/s/Hz/m^2; rate
  unit conversion lives in :func:`bits_to_nats` / :func:`nats_to_bits` and
  nowhere else.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

__all__ = [
    "NATS_PER_BIT",
    "dbm_to_watts",
    "watts_to_dbm",
    "bits_to_nats",
    "nats_to_bits",
    "zipf_popularity",
    "sample_request",
    "NetworkConfig",
    "Catalog",
    "CachingPolicy",
    "TraditionalConfig",
    "popular_policy",
    "uniform_policy",
]

#: 1 bit = ln(2) nats; equivalently 1 nat/s ~ 1.443 bit/s.
NATS_PER_BIT = math.log(2.0)

#: Slack allowed on the cache-size constraint, absorbs multiplier bisection
#: round-off in the policy solvers.
POLICY_BUDGET_TOL = 1e-9


def dbm_to_watts(dbm: float) -> float:
    """Convert a power level from dBm to watts."""
    return 10.0 ** ((dbm - 30.0) / 10.0)


def watts_to_dbm(watts: float) -> float:
    """Convert a power level from watts to dBm."""
    if watts <= 0:
        raise ValueError("power must be positive")
    return 10.0 * math.log10(watts) + 30.0


def bits_to_nats(x):
    """Convert a rate (or spectral efficiency) from bit units to nat units."""
    return x * NATS_PER_BIT


def nats_to_bits(x):
    """Convert a rate (or spectral efficiency) from nat units to bit units."""
    return x / NATS_PER_BIT


def zipf_popularity(n_files: int, skew: float) -> np.ndarray:
    """Zipf request distribution over ranks 1..n_files.

    p_f = f^(-skew) / sum_n n^(-skew); index i of the returned array holds
    the probability of rank i+1.
    """
    if n_files < 1:
        raise ValueError(f"n_files must be >= 1, got {n_files}")
    if skew < 0:
        raise ValueError(f"skew must be >= 0, got {skew}")
    p = np.arange(1, n_files + 1, dtype=float) ** (-float(skew))
    p /= p.sum()
    return p


@dataclass(frozen=True)
class NetworkConfig:
    """Physical-layer and deployment parameters of the two-tier network.

    Tier 1 is the macro (MBS) tier, tier 2 the cache-equipped helper tier.
    Helpers are single-antenna; only the MBS antenna count is configurable.
    ``noise_power`` is used by the Monte Carlo simulator only — the
    analytical expressions are interference-limited and assume 0.
    """

    lambda_mbs: float            # MBS density [1/m^2]
    lambda_helper: float         # helper density [1/m^2]
    lambda_user: float           # user density [1/m^2]
    p_mbs: float                 # MBS transmit power [W]
    p_helper: float              # helper transmit power [W]
    m_mbs: int = 1               # MBS antenna count
    bias_mbs: float = 1.0        # association bias of the MBS tier
    bias_helper: float = 1.0     # association bias of the helper tier
    alpha: float = 3.7           # path-loss exponent, > 2
    bandwidth: float = 20e6      # W [Hz]
    rate_target: float = 2e6     # R0 [bit/s]
    noise_power: float = 0.0     # sigma^2 [W]

    #: Helpers are single-antenna by model assumption.
    M_HELPER = 1

    def __post_init__(self):
        for name in ("lambda_mbs", "lambda_helper", "lambda_user", "p_mbs",
                     "p_helper", "bandwidth", "rate_target"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be > 0")
        if self.m_mbs < 1:
            raise ValueError("m_mbs must be >= 1")
        if self.bias_mbs < 0 or self.bias_helper < 0:
            raise ValueError("association biases must be >= 0")
        if self.alpha <= 2:
            raise ValueError(f"alpha must be > 2, got {self.alpha}")
        if self.noise_power < 0:
            raise ValueError("noise_power must be >= 0")
        if self.lambda_user < self.lambda_mbs:
            # The load model assumes users vastly outnumber MBSs; still usable.
            warnings.warn(
                "lambda_user < lambda_mbs: the load approximation assumes "
                "lambda_user >> lambda_mbs", stacklevel=2)

    @property
    def m_helper(self) -> int:
        return self.M_HELPER


@dataclass(frozen=True)
class Catalog:
    """Content catalog: size, per-helper cache capacity and Zipf skew."""

    n_files: int
    cache_size: int
    zipf_skew: float

    def __post_init__(self):
        if self.n_files < 1:
            raise ValueError("n_files must be >= 1")
        if not 0 <= self.cache_size <= self.n_files:
            raise ValueError("cache_size must satisfy 0 <= N_c <= N_f")
        if self.zipf_skew < 0:
            raise ValueError("zipf_skew must be >= 0")
        pop = zipf_popularity(self.n_files, self.zipf_skew)
        pop.setflags(write=False)
        object.__setattr__(self, "_popularity", pop)

    @property
    def popularity(self) -> np.ndarray:
        """Request probabilities by rank (read-only, sums to 1)."""
        return self._popularity


@dataclass(frozen=True)
class CachingPolicy:
    """Helper-tier caching probability vector with its cache budget.

    ``q[i]`` is the probability that a helper caches the file of rank i+1.
    Feasibility (box constraint and sum(q) <= cache_size) is enforced at
    construction; the MBS tier implicitly caches everything.
    """

    q: np.ndarray
    cache_size: int

    def __post_init__(self):
        q = np.asarray(self.q, dtype=float)
        if q.ndim != 1 or q.size == 0:
            raise ValueError("q must be a non-empty 1-D vector")
        if not np.all(np.isfinite(q)):
            raise ValueError("q must be finite")
        if q.min() < -1e-12 or q.max() > 1 + 1e-12:
            raise ValueError("q entries must lie in [0, 1]")
        if q.sum() > self.cache_size + POLICY_BUDGET_TOL:
            raise ValueError(
                f"sum(q) = {q.sum():.12g} exceeds the cache size {self.cache_size}")
        q = np.clip(q, 0.0, 1.0)
        q.setflags(write=False)
        object.__setattr__(self, "q", q)

    @property
    def n_files(self) -> int:
        return self.q.size


@dataclass(frozen=True)
class TraditionalConfig:
    """Backhaul-limited baseline: per-PBS backhaul capacity in bit/s.

    The MBS tier's backhaul is treated as unlimited. A zero capacity is
    allowed and silences the PBS tier entirely.
    """

    backhaul_capacity_pbs: float

    def __post_init__(self):
        if self.backhaul_capacity_pbs < 0:
            raise ValueError("backhaul_capacity_pbs must be >= 0")


def sample_request(catalog: Catalog, rng: np.random.Generator, size=None):
    """Draw file rank(s) in 1..n_files according to the catalog popularity.

    Returns a scalar int when ``size`` is None, else an int array.
    """
    cdf = np.cumsum(catalog.popularity)
    u = rng.random(size)
    idx = np.searchsorted(cdf, u, side="right")
    # searchsorted can land on n_files for u within rounding of 1.0
    idx = np.minimum(idx, catalog.n_files - 1)
    if size is None:
        return int(idx) + 1
    return idx + 1


def popular_policy(catalog: Catalog) -> CachingPolicy:
    """Cache the cache_size most popular files everywhere (no file diversity)."""
    q = np.zeros(catalog.n_files)
    q[: catalog.cache_size] = 1.0
    return CachingPolicy(q, catalog.cache_size)


def uniform_policy(catalog: Catalog) -> CachingPolicy:
    """Cache every file with equal probability cache_size/n_files."""
    q = np.full(catalog.n_files, catalog.cache_size / catalog.n_files)
    return CachingPolicy(q, catalog.cache_size)
