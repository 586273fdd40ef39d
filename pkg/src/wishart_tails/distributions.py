"""Normalized densities, CDFs and outage probabilities of the normalized SINR.

Everything internal is expressed in z = SINR / rho; the Jacobian rho enters
only through ``to_sinr`` / ``from_sinr``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import special
from scipy.special import logsumexp

from .core import DomainError, SystemParams
from .ratefn import ergodic_stats, gaussian_logpdf

LOG_FLOOR = -np.inf
DEFAULT_GRID = 2048
COVERAGE_RATIO = 1e-10
# log-density drop at which the support is truncated for normalization
TAIL_DROP = 60.0
_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(32)


class CoverageError(ValueError):
    """Grid boundary still carries non-negligible density."""


class CurveKind(str, enum.Enum):
    ANALYTIC = "analytic"
    GAUSSIAN = "gaussian"
    GAMMA_FIT = "gamma_fit"
    EMPIRICAL = "empirical"
    EXACT = "exact"


@dataclass(frozen=True)
class GammaLaw:
    """Gamma law with density x^(shape-1) exp(-x/scale) / (Gamma(shape) scale^shape)."""

    shape: float
    scale: float

    @property
    def mean(self) -> float:
        return self.shape * self.scale

    @property
    def var(self) -> float:
        return self.shape * self.scale**2

    def logpdf(self, x):
        x = np.asarray(x, dtype=float)
        with np.errstate(divide="ignore"):
            val = (
                special.xlogy(self.shape - 1.0, x)
                - x / self.scale
                - special.gammaln(self.shape)
                - self.shape * math.log(self.scale)
            )
        val = np.where(x < 0, LOG_FLOOR, val)
        return val[()] if val.ndim == 0 else val

    def pdf(self, x):
        return np.exp(self.logpdf(x))

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        val = special.gammainc(self.shape, np.clip(x, 0, None) / self.scale)
        return val[()] if val.ndim == 0 else val

    def sf(self, x):
        x = np.asarray(x, dtype=float)
        val = special.gammaincc(self.shape, np.clip(x, 0, None) / self.scale)
        return val[()] if val.ndim == 0 else val

    def ppf(self, q):
        return special.gammaincinv(self.shape, q) * self.scale

    def in_z(self, rho: float) -> "GammaLaw":
        """The same law after dividing the variable by rho."""
        return GammaLaw(self.shape, self.scale / rho)


@dataclass(frozen=True)
class PdfCurve:
    grid: np.ndarray
    logpdf: np.ndarray
    kind: CurveKind
    params: SystemParams

    def pdf(self) -> np.ndarray:
        return np.exp(self.logpdf)

    def mass(self) -> float:
        return float(np.trapezoid(self.pdf(), self.grid))

    def cdf(self) -> np.ndarray:
        p = self.pdf()
        return np.concatenate([[0.0], np.cumsum(0.5 * (p[1:] + p[:-1]) * np.diff(self.grid))])


@dataclass(frozen=True)
class OutageResult:
    target: float
    probability: float
    method: CurveKind


def _rho_or_one(params: SystemParams) -> float:
    return 1.0 if params.rho is None else float(params.rho)


def to_sinr(z, params: SystemParams):
    return np.asarray(z) * _rho_or_one(params)


def from_sinr(sinr, params: SystemParams):
    return np.asarray(sinr) / _rho_or_one(params)


def logpdf_unnormalized(z, params: SystemParams):
    """M ln z - N ln(1/rho + z) - N z (MMSE) or (M - N) ln z - N z (ZF)."""
    M, N = params.require_dims()
    z = np.asarray(z, dtype=float)
    pos = z > 0
    zp = np.where(pos, z, 1.0)
    if params.is_zf:
        val = (M - N) * np.log(zp) - N * zp
    else:
        val = M * np.log(zp) - N * np.log(1.0 / params.rho + zp) - N * zp
    val = np.where(pos, val, LOG_FLOOR)
    return val[()] if val.ndim == 0 else val


def zf_exact(M: int, N: int, rho: Optional[float] = None) -> GammaLaw:
    """Exact law of the ZF SINR beta (of z when rho is None)."""
    if not (M >= N >= 1):
        raise DomainError(f"need M >= N >= 1, got M={M}, N={N}")
    return GammaLaw(M - N + 1.0, (1.0 if rho is None else rho) / N)


def gamma_moment_fit(mean: float, variance: float) -> GammaLaw:
    if not (mean > 0 and variance > 0):
        raise DomainError("Gamma moment fit needs positive mean and variance")
    return GammaLaw(mean**2 / variance, variance / mean)


def _scale(params: SystemParams):
    _, N = params.require_dims()
    stats = ergodic_stats(params)
    return stats.z_erg, max(math.sqrt(stats.v_erg / N), 1.0 / N)


def _support_end(params: SystemParams) -> float:
    """Point beyond the mode where the analytic log-density has dropped by TAIL_DROP."""
    mode, scale = _scale(params)
    peak = logpdf_unnormalized(max(mode, 1e-300), params) if mode > 0 else logpdf_unnormalized(1e-300, params)
    step = 8.0 * scale
    while logpdf_unnormalized(mode + step, params) > peak - TAIL_DROP:
        step *= 1.5
    return mode + step


def _support_start(params: SystemParams) -> float:
    """First grid point: 1e-6 z_erg, or 1e-9 of the scale when the density peaks at z = 0."""
    mode, scale = _scale(params)
    return 1e-6 * mode if mode > 0 else 1e-9 * scale


def _gl_panels(lo: float, hi: float, panels: int):
    edges = np.linspace(lo, hi, panels + 1)
    half = 0.5 * np.diff(edges)[:, None]
    mid = 0.5 * (edges[1:] + edges[:-1])[:, None]
    return (mid + half * _GL_NODES).ravel(), (half * _GL_WEIGHTS).ravel()


def log_normalizer(params: SystemParams, panels: int = 128) -> float:
    """log int_0^inf exp(logpdf_unnormalized(z)) dz by max-shifted Gauss-Legendre sums."""
    nodes, wts = _gl_panels(0.0, _support_end(params), panels)
    return float(logsumexp(logpdf_unnormalized(nodes, params), b=wts))


def analytic_logpdf(z, params: SystemParams):
    return logpdf_unnormalized(z, params) - log_normalizer(params)


def gamma_fit_law(params: SystemParams) -> GammaLaw:
    """Moment-matched Gamma law of z built from the ergodic mean and variance."""
    _, N = params.require_dims()
    stats = ergodic_stats(params)
    return gamma_moment_fit(stats.z_erg, stats.v_erg / N)


def density_logpdf(z, params: SystemParams, kind=CurveKind.ANALYTIC):
    """Normalized log-density of z for every model kind."""
    kind = CurveKind(kind)
    if kind is CurveKind.ANALYTIC:
        return analytic_logpdf(z, params)
    if kind is CurveKind.GAUSSIAN:
        return gaussian_logpdf(z, params)
    if kind is CurveKind.GAMMA_FIT:
        return gamma_fit_law(params).logpdf(z)
    if kind is CurveKind.EXACT:
        if not params.is_zf:
            raise DomainError("an exact law is only available for ZF")
        M, N = params.require_dims()
        return zf_exact(M, N).logpdf(z)
    raise DomainError(f"no closed-form density for kind {kind.value}")


def _log_derivatives(z, params: SystemParams):
    M, N = params.require_dims()
    if params.is_zf:
        return (M - N) / z - N, -(M - N) / z**2
    shifted = 1.0 / params.rho + z
    return M / z - N / shifted - N, -M / z**2 + N / shifted**2


def default_grid(params: SystemParams, n: int = DEFAULT_GRID) -> np.ndarray:
    """Grid equidistributing |f''|^(1/3) of the analytic density.

    Trapezoid error on a grid with spacing h is sum h^3 |f''| / 12; spacing
    proportional to |f''|^(-1/3) balances it.  The grid starts at
    ``_support_start`` and ends where the density has fallen by
    TAIL_DROP in log.
    """
    lo, hi = _support_start(params), _support_end(params)
    ref = lo * 1e6
    split = max(min(0.5 * ref, hi / 4), 10 * lo)
    pilot = np.unique(np.concatenate([np.geomspace(lo, split, 4 * n), np.linspace(split, hi, 16 * n)]))
    f = np.exp(logpdf_unnormalized(pilot, params) - log_normalizer(params))
    d1, d2 = _log_derivatives(pilot, params)
    d2 = np.abs(f * (d2 + d1**2))
    dens = np.cbrt(d2 + 1e-6 * d2.max()) + 1e-4 * np.cbrt(d2.max())
    cum = np.concatenate([[0.0], np.cumsum(0.5 * (dens[1:] + dens[:-1]) * np.diff(pilot))])
    grid = np.interp(np.linspace(0.0, cum[-1], n), cum, pilot)
    # keep log resolution of the approach to z = 0
    near_zero = np.geomspace(lo, grid[1], 32, endpoint=False)
    return np.unique(np.concatenate([near_zero, grid]))


def normalize(grid, params: SystemParams, kind=CurveKind.ANALYTIC) -> PdfCurve:
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or grid.size < 2 or np.any(np.diff(grid) <= 0):
        raise DomainError("grid must be strictly increasing with at least two points")
    logpdf = np.asarray(density_logpdf(grid, params, kind), dtype=float)
    peak = np.max(logpdf)
    cut = peak + math.log(COVERAGE_RATIO)
    at_support_start = grid[0] <= _support_start(params) * (1 + 1e-9)
    if logpdf[-1] > cut or (logpdf[0] > cut and not at_support_start):
        raise CoverageError("grid does not cover the mass region of the density")
    return PdfCurve(grid, logpdf, CurveKind(kind), params)


def analytic_cdf(z, params: SystemParams, panels: int = 64) -> float:
    z = float(z)
    if z <= 0:
        return 0.0
    hi = min(z, _support_end(params))
    nodes, wts = _gl_panels(0.0, hi, panels)
    val = logsumexp(logpdf_unnormalized(nodes, params), b=wts) - log_normalizer(params)
    return float(min(1.0, math.exp(val)))


def cdf(z, params: SystemParams, kind=CurveKind.ANALYTIC) -> float:
    kind = CurveKind(kind)
    z = float(z)
    if kind is CurveKind.ANALYTIC:
        return analytic_cdf(z, params)
    if kind is CurveKind.GAUSSIAN:
        _, N = params.require_dims()
        stats = ergodic_stats(params)
        if not stats.v_erg > 0:
            raise DomainError("variance coefficient is zero; Gaussian approximation is degenerate")
        return float(special.ndtr((z - stats.z_erg) / math.sqrt(stats.v_erg / N)))
    if kind is CurveKind.GAMMA_FIT:
        return float(gamma_fit_law(params).cdf(z))
    if kind is CurveKind.EXACT:
        if not params.is_zf:
            raise DomainError("an exact law is only available for ZF")
        M, N = params.require_dims()
        return float(zf_exact(M, N).cdf(z))
    raise DomainError(f"unknown outage method {kind.value!r}")


def cdf_function(params: SystemParams, kind=CurveKind.ANALYTIC):
    """Vectorized CDF of z; the analytic one interpolates the trapezoid integral of the grid curve."""
    kind = CurveKind(kind)
    if kind is CurveKind.ANALYTIC:
        curve = normalize(default_grid(params), params)
        F = curve.cdf()
        F = F / F[-1]
        grid = curve.grid
        return lambda x: np.interp(x, grid, F, left=0.0, right=1.0)
    if kind is CurveKind.GAUSSIAN:
        _, N = params.require_dims()
        stats = ergodic_stats(params)
        if not stats.v_erg > 0:
            raise DomainError("variance coefficient is zero; Gaussian approximation is degenerate")
        sd = math.sqrt(stats.v_erg / N)
        return lambda x: special.ndtr((np.asarray(x, dtype=float) - stats.z_erg) / sd)
    if kind is CurveKind.GAMMA_FIT:
        return gamma_fit_law(params).cdf
    if kind is CurveKind.EXACT:
        if not params.is_zf:
            raise DomainError("an exact law is only available for ZF")
        return zf_exact(*params.require_dims()).cdf
    raise DomainError(f"no reference CDF for kind {kind.value}")


def outage(target_sinr: float, params: SystemParams, method=CurveKind.ANALYTIC) -> OutageResult:
    """P(SINR < target) where SINR = rho z (gamma for MMSE, beta for ZF)."""
    try:
        method = CurveKind(method)
    except ValueError:
        raise DomainError(f"unknown outage method {method!r}") from None
    if method is CurveKind.EMPIRICAL:
        raise DomainError("outage from empirical samples is computed by the montecarlo module")
    if not target_sinr > 0:
        raise DomainError("outage target must be > 0")
    p = cdf(float(from_sinr(target_sinr, params)), params, method)
    return OutageResult(float(target_sinr), p, method)
