"""Special functions for the coverage analytics.

Implements the Gamma function (Lanczos approximation), the Gauss
hypergeometric function 2F1 for the parameter pattern that appears in the
interference Laplace transforms, and the kernels built from them:

* ``Z1``: normalized interference from co-tier/cross-tier stations that
  cache the requested file (minimum-distance exclusion at the association
  boundary),
* ``Z2``: interference from stations that do not cache the file and can
  therefore be arbitrarily close,
* ``C1, C2, C3``: the helper-tier specialization used by the policy
  optimizers.

Only the pattern ``2F1(-2/alpha, m; 1 - 2/alpha; x <= 0)`` with ``alpha > 2``
and integer ``m >= 1`` is supported; general parameters are out of scope.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import NumericError

__all__ = [
    "gamma_value",
    "hyp2f1_neg_arg",
    "interference_gamma_factor",
    "KernelParams",
    "kernel_z1",
    "kernel_z2",
    "kernels_c123",
]

# Lanczos approximation, g = 7, 9 coefficients. Relative accuracy is a few
# ulps over the range needed here (tested to 1e-13 on (0, 30]).
_LANCZOS_G = 7.0
_LANCZOS_C = (
    0.99999999999980993,
    676.5203681218851,
    -1259.1392167224028,
    771.32342877765313,
    -176.61502916214059,
    12.507343278686905,
    -0.13857109526572012,
    9.9843695780195716e-6,
    1.5056327351493116e-7,
)

_SQRT_2PI = math.sqrt(2.0 * math.pi)

#: Above this magnitude of the argument the linear transformation is used
#: instead of the defining power series.
SERIES_RADIUS = 0.5

_MAX_TERMS = 800
_EPS = 1e-17


def gamma_value(z: float) -> float:
    """Gamma function for real non-pole arguments.

    Integer arguments up to 21 return the exact factorial; elsewhere the
    Lanczos approximation is used, with the reflection formula for z < 0.5.
    """
    z = float(z)
    if z <= 0 and z == math.floor(z):
        raise ValueError(f"gamma pole at z = {z}")
    if z == math.floor(z) and 1 <= z <= 21:
        return float(math.factorial(int(z) - 1))
    if z < 0.5:
        # reflection: Gamma(z) Gamma(1-z) = pi / sin(pi z)
        return math.pi / (math.sin(math.pi * z) * gamma_value(1.0 - z))
    w = z - 1.0
    x = _LANCZOS_C[0]
    for i in range(1, len(_LANCZOS_C)):
        x += _LANCZOS_C[i] / (w + i)
    t = w + _LANCZOS_G + 0.5
    return _SQRT_2PI * t ** (w + 0.5) * math.exp(-t) * x


def _series(a: float, b: float, c: float, z) -> np.ndarray:
    """Power series sum_n (a)_n (b)_n / (c)_n z^n / n! for |z| < 1."""
    z = np.asarray(z, dtype=float)
    total = np.ones_like(z)
    term = np.ones_like(z)
    for n in range(_MAX_TERMS):
        term = term * ((a + n) * (b + n)) / ((c + n) * (n + 1.0)) * z
        total += term
        if np.all(np.abs(term) <= _EPS * np.abs(total)):
            return total
    raise NumericError(
        f"2F1 series did not converge for parameters ({a}, {b}, {c}), "
        f"max |z| = {np.max(np.abs(z)):.3g}")


def _series_any(a: float, b: float, c: float, z) -> np.ndarray:
    """Series for z <= 0 of any magnitude, mapping |z| >= 1/2 onto (0, 1)
    with the Pfaff transformation (1-z)^(-b) 2F1(c-a, b; c; z/(z-1))."""
    z = np.asarray(z, dtype=float)
    out = np.empty_like(z)
    near = np.abs(z) < SERIES_RADIUS
    if np.any(near):
        out[near] = _series(a, b, c, z[near])
    if np.any(~near):
        zz = z[~near]
        w = zz / (zz - 1.0)
        out[~near] = (1.0 - zz) ** (-b) * _series(c - a, b, c, w)
    return out


def hyp2f1_neg_arg(a: float, b: float, c: float, x) -> np.ndarray | float:
    """2F1(a, b; c; x) for the interference-kernel parameter pattern.

    Requires a = -2/alpha in (-1, 0), integer b >= 1, c = a + 1 and x <= 0
    (scalar or array). Small arguments use the defining series; large ones
    use the Gradshteyn-Ryzhik 9.132 linear transformation, whose second
    series is itself evaluated through a Pfaff map when 1/x lands outside
    the series radius.
    """
    if c <= 0 and float(c) == math.floor(c):
        raise ValueError(f"c = {c} is a non-positive integer")
    if not -1.0 < a < 0.0:
        raise ValueError(f"expected a = -2/alpha in (-1, 0), got {a}")
    if b < 1 or abs(b - round(b)) > 1e-9:
        raise ValueError(f"expected integer b >= 1, got {b}")
    if abs(c - (a + 1.0)) > 1e-9:
        raise ValueError(f"expected c = a + 1, got a = {a}, c = {c}")
    b = float(round(b))
    # Numerical safeguard: keep b - a away from integers so the
    # transformation coefficients stay finite (only reachable for alpha
    # astronomically large or within round-off of 2).
    if a + 1.0 < 1e-9:
        a = -1.0 + 1e-9
        c = a + 1.0
    elif -a < 1e-9:
        a = -1e-9
        c = a + 1.0

    x_arr = np.asarray(x, dtype=float)
    if np.any(x_arr > 0):
        raise ValueError("argument must be <= 0")
    scalar = x_arr.ndim == 0
    x_arr = np.atleast_1d(x_arr)
    out = np.empty_like(x_arr)

    near = np.abs(x_arr) < SERIES_RADIUS
    if np.any(near):
        out[near] = _series(a, b, c, x_arr[near])
    far = ~near
    if np.any(far):
        xf = x_arr[far]
        inv = 1.0 / xf
        # First transformed series has upper parameter a + 1 - c = 0, so it
        # is identically 1 for this pattern; Gamma(c - a) = Gamma(1) = 1.
        t1 = (gamma_value(c) * gamma_value(b - a) / gamma_value(b)) * (-xf) ** (-a)
        # Second coefficient Gamma(c)Gamma(a-b) / (Gamma(a)Gamma(c-b))
        # collapses to a / (a - b) when c = a + 1.
        f2 = _series_any(b, b + 1.0 - c, b + 1.0 - a, inv)
        t2 = (a / (a - b)) * (-xf) ** (-b) * f2
        out[far] = t1 + t2
    return float(out[0]) if scalar else out


def interference_gamma_factor(alpha: float, m: int) -> float:
    """Gamma(1 - 2/alpha) Gamma(m + 2/alpha) / Gamma(m)."""
    if alpha <= 2:
        raise ValueError("alpha must be > 2")
    return gamma_value(1.0 - 2.0 / alpha) * gamma_value(m + 2.0 / alpha) / gamma_value(m)


@dataclass(frozen=True)
class KernelParams:
    """Tier-pair ratios entering the interference kernels.

    ``m_j`` is the interferer-tier antenna count and ``m_k`` the serving
    tier's; the ratios are interferer-over-serving (bias B_j/B_k, power
    P_j/P_k, density lambda_j/lambda_k).
    """

    alpha: float
    m_j: int
    m_k: int
    bias_ratio: float
    power_ratio: float = 1.0
    density_ratio: float = 1.0

    def __post_init__(self):
        if self.alpha <= 2:
            raise ValueError("alpha must be > 2")
        if self.m_j < 1 or self.m_k < 1:
            raise ValueError("antenna counts must be >= 1")
        if self.bias_ratio < 0:
            raise ValueError("bias_ratio must be >= 0")
        if self.power_ratio <= 0 or self.density_ratio <= 0:
            raise ValueError("power and density ratios must be > 0")


def kernel_z1(x, params: KernelParams):
    """Excluded-zone interference kernel.

    Z1(x) = 2F1(-2/alpha, m_j; 1 - 2/alpha; -x / (m_jk * B_jk)) - 1, with
    Z1(0) = 0, strictly increasing in x >= 0.
    """
    if params.bias_ratio == 0:
        raise ValueError("bias_ratio must be > 0 for the Z1 kernel")
    x = np.asarray(x, dtype=float)
    if np.any(x < 0):
        raise ValueError("x must be >= 0")
    a = -2.0 / params.alpha
    m_jk = params.m_j / params.m_k
    arg = -x / (m_jk * params.bias_ratio)
    res = hyp2f1_neg_arg(a, params.m_j, 1.0 + a, arg) - 1.0
    return res


def kernel_z2(x, params: KernelParams):
    """Unrestricted-interferer kernel, closed form proportional to x^(2/alpha)."""
    x = np.asarray(x, dtype=float)
    if np.any(x < 0):
        raise ValueError("x must be >= 0")
    m_jk = params.m_j / params.m_k
    coeff = interference_gamma_factor(params.alpha, params.m_j)
    res = coeff * (x / m_jk) ** (2.0 / params.alpha)
    return float(res) if res.ndim == 0 else res


def kernels_c123(x, cfg):
    """Helper-tier denominators (C1, C2, C3) at SINR threshold x >= 0.

    C1 carries the macro-tier interference plus association weight, C2 the
    unrestricted helper interferers, and C3 = 2F1(-2/alpha, 1; 1-2/alpha; -x)
    - C2 - 1 (always in [-1, 0]). Accepts scalar or array x.
    """
    x = np.asarray(x, dtype=float)
    if np.any(x < 0):
        raise ValueError("x must be >= 0")
    alpha = cfg.alpha
    a = -2.0 / alpha
    two_a = 2.0 / alpha
    lam_12 = cfg.lambda_mbs / cfg.lambda_helper
    p_12 = cfg.p_mbs / cfg.p_helper
    b_12 = cfg.bias_mbs / cfg.bias_helper
    m_12 = cfg.m_mbs / cfg.m_helper
    c1 = lam_12 * (p_12 * b_12) ** two_a * hyp2f1_neg_arg(
        a, cfg.m_mbs, 1.0 + a, -x / (m_12 * b_12))
    c2 = interference_gamma_factor(alpha, cfg.m_helper) * x ** two_a
    c3 = hyp2f1_neg_arg(a, cfg.m_helper, 1.0 + a, -x) - c2 - 1.0
    if x.ndim == 0:
        return float(c1), float(c2), float(c3)
    return c1, c2, c3
