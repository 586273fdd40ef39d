"""Mean eigenvector weights conditioned on the normalized SINR."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core import DomainError, QuadratureRule, SystemParams, mp_edges
from .ratefn import (
    InfeasibleError,
    Regime,
    RegimeError,
    mean_weight,
    pole_location,
    regime_of,
    solve_w,
)


@dataclass(frozen=True)
class DetachedEigenvalue:
    y: float
    T: float
    w: Optional[float]


@dataclass(frozen=True)
class WeightProfile:
    z: float
    xs: np.ndarray
    ts: np.ndarray
    detached: Optional[DetachedEigenvalue] = None


def conditional_weight(x, z: float, params: SystemParams):
    """t(x|z) for bulk points x; equals 1/(lambda + k s(x))."""
    if not z > 0:
        raise DomainError("normalized SINR z must be > 0")
    sup = mp_edges(params.alpha)
    x = np.asarray(x, dtype=float)
    if np.any((x < sup.a) | (x > sup.b)):
        raise DomainError(f"x outside the bulk [{sup.a}, {sup.b}]")
    t = mean_weight(x, z, params)
    return float(t) if t.ndim == 0 else t


def detached_weight_closed(z: float, params: SystemParams) -> float:
    """Macroscopic weight T of the detached eigenvalue, closed form in z.

    Vanishes at both critical points |z - alpha| = sqrt(alpha).
    """
    alpha = params.alpha
    d = z - alpha
    if params.is_zf:
        return 1.0 - alpha / d**2
    rho = params.rho
    return 1.0 - z * ((1.0 + rho * alpha) * d + rho * alpha) / ((1.0 + rho * z) * d**2 * (d + 1.0))


def detached_weight(z: float, params: SystemParams, rule: Optional[QuadratureRule] = None):
    """(T, w, y) for an outer-regime z.

    w solves the condensation equation and exists only where the bulk keeps
    less than half of the total weight (T > 1/2); elsewhere it is None.
    """
    if not regime_of(z, params.alpha).is_outer:
        raise RegimeError(f"z={z} is in the inner regime; no eigenvalue is detached")
    T = detached_weight_closed(z, params)
    y = pole_location(z, params.alpha)
    try:
        w = solve_w(z, params, rule)
    except InfeasibleError:
        w = None
    return T, w, y


def weight_from_w(w: float) -> float:
    """Mean of u under the density proportional to exp(w u) on [0, 1]."""
    if w < 1e-3:
        return 0.5 + w / 12.0 - w**3 / 720.0
    return 1.0 - 1.0 / w + (1.0 / math.expm1(w) if w < 700 else 0.0)


def edge_dense_grid(alpha: float, n: int) -> np.ndarray:
    """Chebyshev-Lobatto points on [a, b], including both edges."""
    sup = mp_edges(alpha)
    theta = np.linspace(0.0, np.pi, n)
    xs = sup.a + (sup.b - sup.a) * np.sin(0.5 * theta) ** 2
    xs[0], xs[-1] = sup.a, sup.b
    return xs


def weight_profile(z: float, params: SystemParams, grid_size: int = 201) -> WeightProfile:
    xs = edge_dense_grid(params.alpha, grid_size)
    with np.errstate(divide="ignore"):
        ts = np.asarray(mean_weight(xs, z, params), dtype=float)
    # the pole sits exactly on an edge at the critical points
    ts = np.where(np.isfinite(ts) & (ts >= 0), ts, np.inf)
    detached = None
    if regime_of(z, params.alpha).is_outer:
        T, w, y = detached_weight(z, params)
        detached = DetachedEigenvalue(y=y, T=T, w=w)
    return WeightProfile(z, xs, ts, detached)


def extreme_limits(z: float, params: SystemParams):
    """Large-N ((top position, top weight), (bottom position, bottom weight)) given z.

    Weights are fractions of N.  Inside the inner regime both extremes sit at
    the bulk edges with vanishing macroscopic weight.
    """
    sup = mp_edges(params.alpha)
    top, bottom = (sup.b, 0.0), (sup.a, 0.0)
    regime = regime_of(z, params.alpha)
    if regime.is_outer:
        detached = (pole_location(z, params.alpha), detached_weight_closed(z, params))
        if regime is Regime.OUTER_HIGH:
            top = detached
        else:
            bottom = detached
    return top, bottom
