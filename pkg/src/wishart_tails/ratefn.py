"""Saddle point of the tilted weight ensemble and the large-deviation rate function.

Both receivers share s(x) = 1/u(x) with u affine: u(x) = 1 + rho x (MMSE)
or u(x) = x (ZF).  Working with u instead of s keeps every expression finite
at the ergodic point (where s(c) blows up) and at z = alpha (where c runs
off to infinity).
"""

from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import special

from .core import (
    DEFAULT_NODES,
    DomainError,
    QuadratureRule,
    SystemParams,
    find_root,
    mp_edges,
    mp_integrate,
    mp_log_mean,
    nodes_for_pole,
    quadrature_rule,
)

W_LO = 0.0
W_CAP = 1e6
ORACLE_NODES = 4096


class InfeasibleError(ArithmeticError):
    """The condensation equation has no positive root."""


class RegimeError(DomainError):
    """Operation requested in a regime where it is not defined."""


class DegenerateVarianceWarning(UserWarning):
    pass


class Regime(str, enum.Enum):
    INNER = "inner"
    OUTER_LOW = "outer_low"
    OUTER_HIGH = "outer_high"

    @property
    def is_outer(self) -> bool:
        return self is not Regime.INNER


@dataclass(frozen=True)
class TiltSolution:
    z: float
    regime: Regime
    pole: float
    lam: float
    k: float
    w: Optional[float] = None
    detached_weight: Optional[float] = None


@dataclass(frozen=True)
class ErgodicStats:
    z_erg: float
    gamma_erg: Optional[float]
    v_erg: float


def _affine(params: SystemParams):
    """(intercept, slope) of u(x) = 1/s(x)."""
    if params.is_zf:
        return 0.0, 1.0
    return 1.0, float(params.rho)


def _check_z(z):
    z = np.asarray(z, dtype=float)
    if np.any(~(z > 0)):
        raise DomainError("normalized SINR z must be > 0")
    return z


def s_func(x, params: SystemParams):
    x = np.asarray(x, dtype=float)
    if np.any(x < 0):
        raise DomainError("s(x) needs x >= 0")
    if params.is_zf and np.any(x == 0):
        raise DomainError("ZF s(x) = 1/x is undefined at x = 0")
    kappa, slope = _affine(params)
    val = 1.0 / (kappa + slope * x)
    return val[()] if val.ndim == 0 else val


def regime_of(z: float, alpha: float) -> Regime:
    if not z > 0:
        raise DomainError("normalized SINR z must be > 0")
    r = math.sqrt(alpha)
    if abs(z - alpha) <= r:
        return Regime.INNER
    return Regime.OUTER_LOW if z < alpha else Regime.OUTER_HIGH


def pole_location(z, alpha: float):
    """c(z) in the inner regime, detached eigenvalue y(z) in the outer one.

    Returns +inf at z = alpha, where the pole has run off to infinity.
    """
    z = _check_z(z)
    with np.errstate(divide="ignore"):
        p = z * (1.0 + 1.0 / (z - alpha))
    p = np.where(z == alpha, np.inf, p)
    return float(p) if p.ndim == 0 else p


def tilt_parameters(z, params: SystemParams):
    """(lambda, k) with lambda + k s(z) = 1 in every regime.

    lambda = s(p)/(s(p) - s(z)) and k = 1/(s(z) - s(p)), rewritten through u
    so that z = z_erg (k = 0) and z = alpha (lambda = 0) need no limits.
    """
    z = _check_z(z)
    kappa, slope = _affine(params)
    d = z - params.alpha
    uz = kappa + slope * z
    lam = -uz * d / (slope * z)
    k = uz * (kappa * d + slope * z * (d + 1.0)) / (slope * z)
    if lam.ndim == 0:
        return float(lam), float(k)
    return lam, k


def mean_weight(x, z: float, params: SystemParams):
    """Mean eigenvector weight t(x|z) = (s(z) - s(p)) / (s(x) - s(p)), no bulk check."""
    kappa, slope = _affine(params)
    x = np.asarray(x, dtype=float)
    d = z - params.alpha
    denom = (kappa + slope * z) * (z * (d + 1.0) - d * x)
    return (kappa + slope * x) * z / denom


def _condensation_rhs(w: float) -> float:
    if w < 1e-3:
        return 0.5 - w / 12.0 + w**3 / 720.0
    return 1.0 / w - 1.0 / math.expm1(w) if w < 700 else 1.0 / w


def pole_rule(z: float, params: SystemParams, base: int = DEFAULT_NODES) -> QuadratureRule:
    """Quadrature rule refined for the pole of t(x|z) next to the bulk."""
    return quadrature_rule(params.alpha, nodes_for_pole(params.alpha, pole_location(z, params.alpha), base))


def condensation_lhs(z: float, params: SystemParams, rule: Optional[QuadratureRule] = None) -> float:
    """int p0(x) (s(z) - s(y)) / (s(x) - s(y)) dx at the detached position y(z)."""
    if rule is None:
        rule = pole_rule(z, params)
    return mp_integrate(lambda x: mean_weight(x, z, params), params.alpha, rule)


def solve_w(z: float, params: SystemParams, rule: Optional[QuadratureRule] = None) -> float:
    if not regime_of(z, params.alpha).is_outer:
        raise RegimeError(f"z={z} is in the inner regime; w is only defined outside")
    lhs = condensation_lhs(z, params, rule)
    if not (0.0 < lhs < 0.5):
        raise InfeasibleError(
            f"condensation equation has no root at z={z}: bulk integral {lhs:.6g} not in (0, 1/2)"
        )
    hi = 1.0
    while _condensation_rhs(hi) > lhs:
        hi *= 2.0
        if hi > W_CAP:
            raise InfeasibleError(f"w exceeds {W_CAP:g} at z={z}")
    return find_root(lambda w: _condensation_rhs(w) - lhs, W_LO, hi)


def ergodic_stats(params: SystemParams) -> ErgodicStats:
    alpha = params.alpha
    if params.is_zf:
        if alpha == 1:
            warnings.warn(
                "ZF with alpha = 1 has zero variance coefficient; Gaussian approximation breaks down",
                DegenerateVarianceWarning,
                stacklevel=2,
            )
        gamma = None if params.rho is None else params.rho * (alpha - 1.0)
        return ErgodicStats(alpha - 1.0, gamma, alpha - 1.0)
    rho = params.rho
    root = math.sqrt((1.0 - (alpha - 1.0) * rho) ** 2 + 4.0 * alpha * rho)
    gamma = 0.5 * (root + rho * (alpha - 1.0) - 1.0)
    # (alpha-1)^2 multiplies rho: this is 1/I''(z_erg) exactly and tends to
    # alpha - 1 as rho -> inf, matching the ZF value
    v = ((alpha - 1.0) * root + rho * (alpha - 1.0) ** 2 + alpha + 1.0) / (2.0 * root)
    return ErgodicStats(gamma / rho, gamma, v)


def _g(z, params: SystemParams):
    alpha = params.alpha
    if params.is_zf:
        if alpha == 1:
            return z
        return z - (alpha - 1.0) * np.log(z)
    return z - alpha * np.log(z) + np.log(1.0 / params.rho + z)


def rate_function(z, params: SystemParams):
    """I(z) >= 0, zero at z_erg; the density of z behaves as exp(-N I(z))."""
    z = _check_z(z)
    z_erg = ergodic_stats(params).z_erg if not params.is_zf else params.alpha - 1.0
    g_erg = 0.0 if (params.is_zf and params.alpha == 1) else _g(z_erg, params)
    val = _g(z, params) - g_erg
    return float(val) if val.ndim == 0 else val


def rate_derivative(z, params: SystemParams):
    z = _check_z(z)
    if params.is_zf:
        val = 1.0 - (params.alpha - 1.0) / z
    else:
        val = 1.0 - params.alpha / z + 1.0 / (1.0 / params.rho + z)
    return float(val) if val.ndim == 0 else val


def _detached_potential(y: float, alpha: float, rule: QuadratureRule) -> float:
    """Energy of one eigenvalue at y outside the bulk, relative to a bulk eigenvalue.

    The bulk potential y - (alpha-1) ln y - 2 int p0 ln|x-y| is flat on [a, b];
    its value is taken at the edge nearest to y.
    """
    sup = mp_edges(alpha)
    wts = rule.weights
    # y(z) touches the edge quadratically at the critical points, so rounding
    # can leave it a hair inside the bulk; the gap is clamped at zero
    if y > 0.5 * (sup.a + sup.b):
        edge, edge_dist = sup.b, rule.dist_upper
        gap = max(y - sup.b, 0.0)
    else:
        edge, edge_dist = sup.a, rule.dist_lower
        gap = max(sup.a - y, 0.0)
    y = edge + gap if edge == sup.b else edge - gap
    v_y = y - special.xlogy(alpha - 1.0, y) - 2.0 * float(np.dot(wts, np.log(gap + edge_dist)))
    v_edge = edge - special.xlogy(alpha - 1.0, edge) - 2.0 * float(np.dot(wts, np.log(edge_dist)))
    return v_y - v_edge


def rate_exponent_numeric(z: float, params: SystemParams, rule: Optional[QuadratureRule] = None) -> float:
    """Unnormalized saddle-point exponent evaluated by quadrature.

    Inner regime: -(k s(z) + lambda) + int p0 ln(lambda + k s(x)).  In the
    outer regime the energy of the detached eigenvalue at y(z) is added.
    Differences across z reproduce differences of ``rate_function``.
    """
    z = float(z)
    regime = regime_of(z, params.alpha)
    if rule is None:
        rule = pole_rule(z, params, ORACLE_NODES)
    lam, k = tilt_parameters(z, params)
    kappa, slope = _affine(params)
    # ln(lambda + k s(x)) = ln(lambda u(x) + k) - ln u(x); for ZF the ln x part
    # is integrated in closed form, which removes the log wall at x = 0 (alpha = 1)
    tilt = lam * (kappa + slope * rule.nodes) + k
    if np.any(tilt <= 0):
        raise RegimeError(f"lambda + k s(x) <= 0 on the bulk at z={z}")
    if params.is_zf:
        log_u = mp_log_mean(params.alpha)
    else:
        log_u = float(np.dot(rule.weights, np.log(kappa + slope * rule.nodes)))
    val = -(lam + k * s_func(z, params)) + float(np.dot(rule.weights, np.log(tilt))) - log_u
    if regime.is_outer:
        val += _detached_potential(pole_location(z, params.alpha), params.alpha, rule)
    return val


def gaussian_logpdf(z, params: SystemParams):
    _, N = params.require_dims()
    stats = ergodic_stats(params)
    if not stats.v_erg > 0:
        raise DomainError("variance coefficient is zero; Gaussian approximation is degenerate")
    var = stats.v_erg / N
    z = np.asarray(z, dtype=float)
    val = -0.5 * math.log(2 * math.pi * var) - (z - stats.z_erg) ** 2 / (2 * var)
    return float(val) if val.ndim == 0 else val


def solve_tilt(z: float, params: SystemParams, rule: Optional[QuadratureRule] = None) -> TiltSolution:
    """Full per-z saddle data; outer-regime w is None where the condensation equation has no root."""
    from .weights import detached_weight_closed

    regime = regime_of(z, params.alpha)
    lam, k = tilt_parameters(z, params)
    pole = pole_location(z, params.alpha)
    if not regime.is_outer:
        return TiltSolution(z, regime, pole, lam, k)
    try:
        w = solve_w(z, params, rule)
    except InfeasibleError:
        w = None
    return TiltSolution(z, regime, pole, lam, k, w, detached_weight_closed(z, params))
