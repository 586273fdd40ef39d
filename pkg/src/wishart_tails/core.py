"""Marchenko-Pastur law, its closed-form Stieltjes transform and bulk quadrature.

All bulk integrals use the substitution x = a + (b - a) cos^2(phi/2),
phi in (0, pi), under which p0(x) dx = (b - a)^2 sin^2(phi) / (8 pi x) dphi.
The square-root edge behaviour is absorbed into sin^2(phi) and the rule is
the trapezoid rule in phi, i.e. Chebyshev-Gauss of the second kind.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Optional

import numpy as np
from scipy import special

DEFAULT_NODES = 512
DEFAULT_ROOT_TOL = 1e-12
MAX_NODES = 1 << 17
# target exponent of the quadrature error near a pole, exp(-POLE_DECAY)
POLE_DECAY = 40.0


class DomainError(ValueError):
    """Argument outside the mathematical domain of an operation."""


class BracketError(ValueError):
    """Root bracket without a sign change."""


class IntegrationError(ArithmeticError):
    """Non-finite value encountered while integrating over the bulk."""


class Receiver(str, enum.Enum):
    MMSE = "mmse"
    ZF = "zf"


@dataclass(frozen=True)
class SystemParams:
    """Channel geometry and SNR.

    ``alpha`` is derived from ``M``/``N`` when both are given.  For the ZF
    receiver ``rho`` only scales z into the SINR beta and may be left unset.
    """

    alpha: float
    rho: Optional[float] = None
    receiver: Receiver = Receiver.MMSE
    M: Optional[int] = None
    N: Optional[int] = None

    def __post_init__(self):
        object.__setattr__(self, "receiver", Receiver(self.receiver))
        if (self.M is None) != (self.N is None):
            raise DomainError("M and N must be given together")
        if self.M is not None:
            if self.N < 1 or self.M < self.N:
                raise DomainError(f"need M >= N >= 1, got M={self.M}, N={self.N}")
            if not math.isclose(self.alpha, self.M / self.N, rel_tol=0, abs_tol=1e-15):
                raise DomainError(f"alpha={self.alpha} inconsistent with M/N={self.M / self.N}")
        if not self.alpha >= 1:
            raise DomainError(f"alpha must be >= 1, got {self.alpha}")
        if self.receiver is Receiver.MMSE:
            if self.rho is None or not (0 < self.rho < math.inf):
                raise DomainError(f"MMSE needs a finite rho > 0, got {self.rho}")
        elif self.rho is not None and not self.rho > 0:
            raise DomainError(f"rho must be > 0, got {self.rho}")

    @classmethod
    def from_dims(cls, M: int, N: int, rho=None, receiver=Receiver.MMSE) -> "SystemParams":
        return cls(alpha=M / N, rho=rho, receiver=receiver, M=M, N=N)

    @property
    def is_zf(self) -> bool:
        return self.receiver is Receiver.ZF

    def require_dims(self):
        if self.N is None:
            raise DomainError("this operation needs the antenna counts M and N")
        return self.M, self.N


@dataclass(frozen=True)
class MPSupport:
    a: float
    b: float

    @property
    def half_width(self) -> float:
        return 0.5 * (self.b - self.a)


@dataclass(frozen=True)
class QuadratureRule:
    """Nodes and weights such that sum(weights * f(nodes)) ~ int p0(x) f(x) dx."""

    alpha: float
    n: int
    nodes: np.ndarray
    weights: np.ndarray
    # b - x at the nodes, evaluated without cancellation near the upper edge
    dist_upper: np.ndarray
    dist_lower: np.ndarray


def mp_edges(alpha: float) -> MPSupport:
    if not alpha >= 1:
        raise DomainError(f"alpha must be >= 1, got {alpha}")
    r = math.sqrt(alpha)
    return MPSupport((r - 1.0) ** 2, (r + 1.0) ** 2)


def mp_density(x, alpha: float):
    """Marchenko-Pastur density sqrt((x-a)(b-x)) / (2 pi x); zero off [a, b].

    For alpha = 1 the density has an integrable x^(-1/2) wall at the origin
    and returns +inf at exactly x = 0.
    """
    sup = mp_edges(alpha)
    x = np.asarray(x, dtype=float)
    inside = (x >= sup.a) & (x <= sup.b)
    with np.errstate(divide="ignore", invalid="ignore"):
        val = np.sqrt(np.clip((x - sup.a) * (sup.b - x), 0.0, None)) / (2 * np.pi * x)
    val = np.where(inside, val, 0.0)
    if sup.a == 0.0:
        val = np.where(x == 0.0, np.inf, val)
    return val[()] if val.ndim == 0 else val


@lru_cache(maxsize=64)
def quadrature_rule(alpha: float, n: int = DEFAULT_NODES) -> QuadratureRule:
    """Midpoint rule in phi for x = a + (b - a) cos^2(phi / 2).

    The transformed integrand is even and 2 pi periodic in phi, so the
    midpoint rule converges spectrally, including the alpha = 1 case where
    p0 has an x^(-1/2) wall at the origin.  Nodes never touch the edges.
    """
    if n < 16:
        raise DomainError(f"quadrature needs at least 16 nodes, got {n}")
    sup = mp_edges(alpha)
    width = sup.b - sup.a
    phi = (np.arange(n) + 0.5) * (np.pi / n)
    cos2 = np.cos(0.5 * phi) ** 2
    sin2 = np.sin(0.5 * phi) ** 2
    nodes = sup.a + width * cos2
    weights = width**2 / (8.0 * n) * np.sin(phi) ** 2 / nodes
    for arr in (nodes, weights):
        arr.setflags(write=False)
    return QuadratureRule(alpha, n, nodes, weights, width * sin2, width * cos2)


def nodes_for_pole(alpha: float, pole: float, base: int = DEFAULT_NODES, cap: int = MAX_NODES) -> int:
    """Node count resolving a simple pole just outside the bulk.

    A pole at distance eps beyond an edge sits at imaginary distance
    ~2 sqrt(eps / (b - a)) from the real phi axis; the midpoint error decays
    like exp(-2 n times that distance).
    """
    sup = mp_edges(alpha)
    if not math.isfinite(pole):
        return base
    eps = max(sup.a - pole, pole - sup.b)
    if eps <= 0:
        return base
    width = 2.0 * math.sqrt(eps / (sup.b - sup.a))
    n = base
    while n < cap and 2.0 * n * width < POLE_DECAY:
        n *= 2
    return n


def mp_log_mean(alpha: float) -> float:
    """int p0(x) ln x dx = alpha ln alpha - (alpha - 1) ln(alpha - 1) - 1."""
    mp_edges(alpha)
    return alpha * math.log(alpha) - float(special.xlogy(alpha - 1.0, alpha - 1.0)) - 1.0


def mp_integrate(f: Callable, alpha: float, rule: Optional[QuadratureRule] = None) -> float:
    """int_a^b p0(x) f(x) dx; ``f`` is called once on the array of nodes."""
    if rule is None:
        rule = quadrature_rule(alpha)
    elif rule.alpha != alpha:
        raise DomainError("quadrature rule was built for a different alpha")
    vals = np.asarray(f(rule.nodes), dtype=float)
    if not np.all(np.isfinite(vals)):
        raise IntegrationError("integrand is not finite at every bulk node")
    return float(np.dot(rule.weights, vals))


def _z_of_pole(c, alpha):
    sup = mp_edges(alpha)
    # sgn(0) := +1; the argument only vanishes at c = 1 + alpha, inside the bulk
    sgn = np.where(1.0 + alpha - c >= 0, 1.0, -1.0)
    return 0.5 * (sgn * np.sqrt((sup.b - c) * (sup.a - c)) + c + alpha - 1.0)


def stieltjes_mp(c, alpha: float):
    """int p0(x) / (x - c) dx in closed form, for c outside the open bulk (a, b)."""
    sup = mp_edges(alpha)
    c_arr = np.asarray(c, dtype=float)
    if np.any((c_arr > sup.a) & (c_arr < sup.b)):
        raise DomainError("Stieltjes transform requested inside the bulk")
    zc = _z_of_pole(c_arr, alpha)
    with np.errstate(divide="ignore"):
        val = 1.0 / (zc - c_arr)
    # alpha = 1, c = 0: the mean of 1/x diverges
    val = np.where(zc == c_arr, np.inf, val)
    return float(val) if val.ndim == 0 else val


def find_root(f: Callable[[float], float], lo: float, hi: float, tol: float = DEFAULT_ROOT_TOL) -> float:
    """Bisection on a sign-changing bracket; deterministic and derivative free."""
    flo, fhi = f(lo), f(hi)
    if flo == 0:
        return lo
    if fhi == 0:
        return hi
    if not (flo * fhi < 0):
        raise BracketError(f"no sign change on [{lo}, {hi}]: f={flo}, {fhi}")
    while hi - lo > tol * max(1.0, abs(lo), abs(hi)):
        mid = 0.5 * (lo + hi)
        if mid in (lo, hi):
            break
        fmid = f(mid)
        if fmid == 0:
            return mid
        if (fmid < 0) == (flo < 0):
            lo, flo = mid, fmid
        else:
            hi = mid
    return 0.5 * (lo + hi)
