"""Invariant suites shared by the ``verify`` command and the test-suite.

Each family reports the largest residual over its cases together with the
tolerance it is held to.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import asdict, dataclass, field
from typing import Dict, Iterable, List, Optional

import numpy as np

from .core import (
    Receiver,
    SystemParams,
    mp_edges,
    mp_integrate,
    nodes_for_pole,
    quadrature_rule,
    stieltjes_mp,
)
from .distributions import default_grid, logpdf_unnormalized, normalize
from .ratefn import (
    DegenerateVarianceWarning,
    _affine,
    ergodic_stats,
    rate_derivative,
    rate_exponent_numeric,
    pole_location,
    pole_rule,
    rate_function,
    tilt_parameters,
)
from .weights import detached_weight_closed

ALPHAS = (1.0, 2.0, 4.0)
RHOS = (1.0, 10.0)
VERIFY_N = 16

TOLERANCES = {
    "saddle_equations": 1e-8,
    "stieltjes_closed_form": 1e-9,
    "rate_pdf_consistency": 1e-9,
    "mode_gradient": 1e-8,
    "curvature_variance": 1e-5,
    "continuity_value": 1e-8,
    "continuity_slope": 1e-4,
    "weight_balance": 1e-6,
    "force_balance": 1e-8,
    "critical_weight": 1e-6,
    "density_mass": 1e-6,
    "sample_identities": 1e-10,
}


@dataclass
class FamilyResult:
    name: str
    max_residual: float
    tolerance: float
    cases: int

    @property
    def passed(self) -> bool:
        return bool(self.max_residual < self.tolerance)


@dataclass
class Report:
    families: Dict[str, FamilyResult] = field(default_factory=dict)
    warnings: List[str] = field(default_factory=list)

    def add(self, name: str, residual: float, cases: int = 1):
        res = float(residual) if np.isfinite(residual) else math.inf
        fam = self.families.get(name)
        if fam is None:
            self.families[name] = FamilyResult(name, res, TOLERANCES[name], cases)
        else:
            fam.max_residual = max(fam.max_residual, res)
            fam.cases += cases

    @property
    def passed(self) -> bool:
        return all(f.passed for f in self.families.values())

    def to_dict(self) -> dict:
        return {
            "passed": self.passed,
            "families": {k: {**asdict(v), "passed": v.passed} for k, v in self.families.items()},
            "warnings": self.warnings,
        }


def parameter_grid(alphas: Iterable[float] = ALPHAS, rhos: Iterable[float] = RHOS, receivers=None):
    receivers = [Receiver(r) for r in (receivers or (Receiver.MMSE, Receiver.ZF))]
    out = []
    for alpha in alphas:
        for rec in receivers:
            if rec is Receiver.ZF:
                out.append(SystemParams(alpha, None, rec))
            else:
                out.extend(SystemParams(alpha, rho, rec) for rho in rhos)
    return out


def with_dims(params: SystemParams, N: int = VERIFY_N) -> SystemParams:
    M = int(round(params.alpha * N))
    return SystemParams.from_dims(M, N, params.rho, params.receiver)


def inner_points(alpha: float, n: int = 200) -> np.ndarray:
    """n points strictly inside the inner regime."""
    r = math.sqrt(alpha)
    return np.linspace(max(alpha - r, 0.0), alpha + r, n + 2)[1:-1]


def outer_points(alpha: float, n: int) -> np.ndarray:
    """Points on both outer branches (only the upper one when alpha = 1)."""
    r = math.sqrt(alpha)
    hi = alpha + r + np.geomspace(1e-3, 4.0 * r, n)
    lo_edge = alpha - r
    if lo_edge <= 0:
        return hi
    lo = lo_edge * (1.0 - np.geomspace(1e-3, 0.9, n))
    return np.sort(np.concatenate([lo, hi]))


def saddle_residuals(z, params: SystemParams, rule=None) -> float:
    """max |int p0 t - 1| and |int p0 s t / s(z) - 1| with t = u / (lambda u + k)."""
    kappa, slope = _affine(params)
    worst = 0.0
    for zi in np.atleast_1d(z):
        rule_z = rule if rule is not None else pole_rule(float(zi), params)
        lam, k = tilt_parameters(float(zi), params)
        uz = kappa + slope * zi
        norm = mp_integrate(lambda x: (kappa + slope * x) / (lam * (kappa + slope * x) + k), params.alpha, rule_z)
        cond = mp_integrate(lambda x: uz / (lam * (kappa + slope * x) + k), params.alpha, rule_z)
        worst = max(worst, abs(norm - 1.0), abs(cond - 1.0))
    return worst


def stieltjes_points(alpha: float, n: int = 100) -> np.ndarray:
    sup = mp_edges(alpha)
    gaps = np.geomspace(1e-2, 10.0, n // 2)
    below = sup.a - gaps
    return np.concatenate([below, sup.b + gaps])[:n]


def stieltjes_residual(alpha: float, cs, nodes: int = 8192) -> float:
    rule = quadrature_rule(alpha, nodes)
    sup = mp_edges(alpha)
    worst = 0.0
    for c in np.atleast_1d(cs):
        # x - c computed from edge distances to keep full relative precision
        diff = (sup.a - c) + rule.dist_lower if c <= sup.a else -((c - sup.b) + rule.dist_upper)
        quad = float(np.dot(rule.weights, 1.0 / diff))
        closed = stieltjes_mp(float(c), alpha)
        worst = max(worst, abs(closed - quad) / abs(quad))
    return worst


def rate_pdf_spread(params: SystemParams, z) -> float:
    _, N = params.require_dims()
    vals = logpdf_unnormalized(z, params) + N * rate_function(z, params)
    return float(np.max(vals) - np.min(vals))


def mode_gradient(params: SystemParams, h: float = 1e-6) -> float:
    """|d/dz log f(z)| / N at z_erg, by central difference of the finite-N log-density."""
    _, N = params.require_dims()
    z0 = ergodic_stats(params).z_erg
    d = (logpdf_unnormalized(z0 + h, params) - logpdf_unnormalized(z0 - h, params)) / (2 * h)
    return abs(float(d)) / N


def curvature_error(params: SystemParams) -> float:
    stats = ergodic_stats(params)
    z0 = stats.z_erg
    h = 1e-4 * z0
    d2 = (rate_function(z0 + h, params) - 2 * rate_function(z0, params) + rate_function(z0 - h, params)) / h**2
    return abs(d2 * stats.v_erg - 1.0)


def continuity_jumps(params: SystemParams, delta: float = 1e-9, h: float = 1e-5, rule=None):
    """(value jump, slope jump) of the numeric saddle exponent across each critical point."""
    r = math.sqrt(params.alpha)
    worst_v = worst_s = 0.0
    for zc in (params.alpha - r, params.alpha + r):
        if zc - delta - h <= 0:
            continue
        left = rate_exponent_numeric(zc - delta, params, rule)
        right = rate_exponent_numeric(zc + delta, params, rule)
        sl = (left - rate_exponent_numeric(zc - delta - h, params, rule)) / h
        sr = (rate_exponent_numeric(zc + delta + h, params, rule) - right) / h
        worst_v = max(worst_v, abs(right - left))
        worst_s = max(worst_s, abs(sr - sl))
        # the closed form must agree with the numeric slope on both sides
        worst_s = max(worst_s, abs(sl - rate_derivative(zc, params)))
    return worst_v, worst_s


def weight_balance(params: SystemParams, z, rule=None) -> float:
    from .ratefn import condensation_lhs

    return max(abs(condensation_lhs(float(zi), params, rule) + detached_weight_closed(float(zi), params) - 1.0) for zi in z)


def force_balance(params: SystemParams, z) -> float:
    """|int p0/(y - x) - (1 - (alpha-1)/y - 1/(y - z))| at the detached position, by quadrature."""
    alpha = params.alpha
    sup = mp_edges(alpha)
    worst = 0.0
    for zi in np.atleast_1d(z):
        y = pole_location(float(zi), alpha)
        rule = quadrature_rule(alpha, nodes_for_pole(alpha, y))
        diff = (y - sup.b) + rule.dist_upper if y > sup.b else -((sup.a - y) + rule.dist_lower)
        lhs = float(np.dot(rule.weights, 1.0 / diff))
        worst = max(worst, abs(lhs - (1.0 - (alpha - 1.0) / y - 1.0 / (y - zi))))
    return worst


def critical_weight(params: SystemParams) -> float:
    r = math.sqrt(params.alpha)
    zs = [zc for zc in (params.alpha - r, params.alpha + r) if zc > 0]
    return max(abs(detached_weight_closed(zc, params)) for zc in zs)


def density_mass_error(params: SystemParams) -> float:
    curve = normalize(default_grid(params), params)
    return abs(curve.mass() - 1.0)


def sample_identity_residual(params: SystemParams, samples: int = 200, seed: int = 0) -> float:
    from .montecarlo.linalg import sinr_mmse, sinr_zf, weights_from_eig, wishart_eig
    from .montecarlo.rng import DRAWS_PER_STREAM, channel_block

    M, N = params.require_dims()
    worst = 0.0
    for stream, start in enumerate(range(0, samples, DRAWS_PER_STREAM)):
        H = channel_block(M, N, seed, stream, min(DRAWS_PER_STREAM, samples - start))
        x, U = wishart_eig(H)
        t = weights_from_eig(U)
        worst = max(worst, float(np.max(np.abs(t.sum(axis=-1) - N))))
        if params.is_zf:
            z = sinr_zf(H)
            worst = max(worst, float(np.max(np.abs(np.sum(t / (N * x), axis=-1) * z - 1.0))))
        else:
            z = sinr_mmse(H, params.rho)
            lhs = np.sum(t / (N * (1.0 + params.rho * x)), axis=-1)
            worst = max(worst, float(np.max(np.abs(lhs * (1.0 + params.rho * z) - 1.0))))
    return worst


def run_suite(grid: Optional[List[SystemParams]] = None, fault: bool = False, quick: bool = False) -> Report:
    """Evaluate every invariant family over ``grid`` (the default parameter grid)."""
    grid = parameter_grid() if grid is None else grid
    report = Report()
    n_inner = 40 if quick else 200
    for params in grid:
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always", DegenerateVarianceWarning)
            stats = ergodic_stats(params)
        for w in caught:
            msg = f"alpha={params.alpha:g} {params.receiver.value}: {w.message}"
            if msg not in report.warnings:
                report.warnings.append(msg)
        report.add("saddle_equations", saddle_residuals(inner_points(params.alpha, n_inner), params), n_inner)
        report.add("stieltjes_closed_form", stieltjes_residual(params.alpha, stieltjes_points(params.alpha)), 100)
        outer = outer_points(params.alpha, 25 if not quick else 5)
        report.add("weight_balance", weight_balance(params, outer), len(outer))
        report.add("force_balance", force_balance(params, outer), len(outer))
        report.add("critical_weight", critical_weight(params))
        v, s = continuity_jumps(params)
        report.add("continuity_value", v)
        report.add("continuity_slope", s)

        dims = with_dims(params)
        zs = np.linspace(0.05, 3.0 * max(params.alpha, 1.0), 50)
        report.add("rate_pdf_consistency", rate_pdf_spread(dims, zs), zs.size)
        report.add("sample_identities", sample_identity_residual(dims, 50 if quick else 200))
        if stats.v_erg > 0 and stats.z_erg > 0:
            report.add("curvature_variance", curvature_error(params))
            report.add("mode_gradient", mode_gradient(dims))
            report.add("density_mass", density_mass_error(dims))
    if fault:
        # deliberately broken invariant to prove that breaches are detected
        report.add("weight_balance", 1.0)
    return report


def format_report(report: Report) -> str:
    lines = []
    for fam in report.families.values():
        flag = "ok  " if fam.passed else "FAIL"
        lines.append(f"{flag} {fam.name:<24s} max={fam.max_residual:.3e} tol={fam.tolerance:.0e} cases={fam.cases}")
    lines.extend(f"warning: {w}" for w in report.warnings)
    return "\n".join(lines)
