"""Acceptance criteria 1-11, each checked at its stated tolerance.

Every test records one PASS/FAIL line; the lines are printed as the test
runs and again, together, at the end of the session (see conftest.py).
Criteria that cannot be met are left failing rather than loosened.
"""

import math
import os
import warnings

import numpy as np
import pytest
from scipy import integrate

from wishart_tails.core import SystemParams, mp_edges
from wishart_tails.distributions import CurveKind, cdf_function, zf_exact
from wishart_tails.montecarlo.conditional import zf_conditional_extremes
from wishart_tails.montecarlo.simulate import EmptyBinWarning, run_conditional_weights, run_histogram, simulate_z
from wishart_tails.montecarlo.stats import histogram_tv, ks_critical, ks_statistic
from wishart_tails.ratefn import DegenerateVarianceWarning, condensation_lhs, ergodic_stats, solve_w
from wishart_tails.verify import (
    continuity_jumps,
    critical_weight,
    curvature_error,
    inner_points,
    mode_gradient,
    parameter_grid,
    rate_pdf_spread,
    sample_identity_residual,
    saddle_residuals,
    stieltjes_points,
    stieltjes_residual,
    with_dims,
)
from wishart_tails.weights import conditional_weight, detached_weight_closed, weight_from_w

RESULTS = {}
WORKERS = os.cpu_count() or 1

GRID = parameter_grid()


def record(n, title, ok, detail):
    line = f"criterion {n:>2} {'PASS' if ok else 'FAIL'}  {title}: {detail}"
    RESULTS[n] = line
    print("\n" + line)
    assert ok, line


def test_criterion_01_exact_zf_law():
    params = SystemParams(2.0, 10.0, "zf", M=6, N=3)
    S = 100_000
    beta = 10.0 * simulate_z(params, S, seed=101, workers=WORKERS)
    D = ks_statistic(beta, zf_exact(6, 3, 10.0).cdf)
    crit = ks_critical(S, 0.01)
    record(1, "exact ZF law", D < crit, f"KS={D:.5f} vs 1% critical {crit:.5f} (S={S})")


def test_criterion_02_saddle_residuals():
    worst = max(saddle_residuals(inner_points(p.alpha, 200), p) for p in GRID)
    record(2, "saddle-equation residuals", worst < 1e-8, f"max residual {worst:.2e} < 1e-8 over {len(GRID)} systems x 200 z")


def test_criterion_03_stieltjes():
    worst = max(stieltjes_residual(a, stieltjes_points(a, 100)) for a in (1.0, 2.0, 4.0))
    record(3, "Stieltjes closed form", worst < 1e-9, f"max relative error {worst:.2e} < 1e-9 at 100 points per alpha")


def test_criterion_04_rate_pdf_consistency():
    zs = np.linspace(0.05, 12.0, 200)
    spread = max(rate_pdf_spread(with_dims(p), zs) for p in GRID)
    grad = max(mode_gradient(with_dims(p)) for p in GRID if not p.is_zf)
    ok = spread < 1e-9 and grad < 1e-8
    record(4, "rate/pdf consistency", ok, f"spread {spread:.2e} < 1e-9; MMSE mode gradient {grad:.2e} < 1e-8")


def test_criterion_05_curvature():
    errs, skipped = [], []
    for p in GRID:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", DegenerateVarianceWarning)
            v = ergodic_stats(p).v_erg
        if v == 0:
            # ZF with alpha = 1: z_erg = 0 sits on the boundary and v_erg = 0
            skipped.append(f"alpha={p.alpha:g} zf")
            continue
        errs.append(curvature_error(p))
    worst = max(errs)
    record(5, "curvature = inverse variance", worst < 1e-5,
           f"max relative error {worst:.2e} < 1e-5 ({len(errs)} systems; degenerate: {', '.join(skipped)})")


def test_criterion_06_continuity():
    vals, slopes = zip(*(continuity_jumps(p) for p in GRID))
    ok = max(vals) < 1e-8 and max(slopes) < 1e-4
    record(6, "regime continuity", ok, f"value jump {max(vals):.2e} < 1e-8; slope jump {max(slopes):.2e} < 1e-4")


def _outer_50(alpha):
    r = math.sqrt(alpha)
    hi = alpha + r + np.geomspace(1e-3, 4 * r, 13)
    lo = (alpha - r) * (1 - np.geomspace(1e-3, 0.9, 12))
    return np.concatenate([lo, hi])


def test_criterion_07_weight_balance():
    systems = [SystemParams(2.0, 1.0, "mmse"), SystemParams(2.0, None, "zf")]
    balance = wdiff = 0.0
    missing = 0
    total = 0
    for p in systems:
        for z in _outer_50(p.alpha):
            total += 1
            T = detached_weight_closed(float(z), p)
            balance = max(balance, abs(condensation_lhs(float(z), p) + T - 1.0))
            try:
                w = solve_w(float(z), p)
            except ArithmeticError:
                # the condensation equation has a root only when T > 1/2
                missing += 1
                continue
            wdiff = max(wdiff, abs(T - weight_from_w(w)))
    crit = max(critical_weight(p) for p in systems)
    ok = balance < 1e-6 and wdiff < 1e-6 and missing == 0 and crit < 1e-6
    record(7, "weight balance", ok,
           f"balance {balance:.2e} < 1e-6; T vs w {wdiff:.2e} < 1e-6 on {total - missing}/{total} z "
           f"({missing} without a root w); T(critical) {crit:.2e} < 1e-6")


CASES_8 = [(6, 6, 1.0, 0.10), (6, 3, 1.0, 0.10), (6, 6, 10.0, 0.06), (6, 3, 10.0, 0.06)]


@pytest.mark.slow
def test_criterion_08_density_reproduction():
    parts, ok = [], True
    for M, N, rho, tol in CASES_8:
        p = SystemParams.from_dims(M, N, rho, "mmse")
        hist, _, _ = run_histogram(p, 1_000_000, seed=800 + M + N + int(rho), bins=64, workers=WORKERS)
        tv_a = histogram_tv(hist, cdf_function(p, CurveKind.ANALYTIC))
        tv_g = histogram_tv(hist, cdf_function(p, CurveKind.GAUSSIAN))
        good = tv_a < tol
        if M == N:
            good = good and tv_g > tv_a
        ok = ok and good
        parts.append(f"M={M},N={N},rho={rho:g}: TV {tv_a:.4f} (<{tol}) gauss {tv_g:.4f} {'ok' if good else 'FAIL'}")
    record(8, "density reproduction", ok, "; ".join(parts))


@pytest.mark.slow
def test_criterion_09_conditional_weights():
    p = SystemParams.from_dims(32, 16, None, "zf")
    S = 1_000_000
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", EmptyBinWarning)
        (tail,) = run_conditional_weights(p, S, seed=900, z_bins=[(2.45, 2.55)], workers=WORKERS, all_streams=True)
        (erg,) = run_conditional_weights(p, S, seed=901, z_bins=[(0.95, 1.05)], workers=WORKERS)
    sup = mp_edges(2.0)
    x = np.clip(tail.x_centers, sup.a, sup.b)
    theory = conditional_weight(x, 2.5, p)
    rep = tail.reported
    band = np.maximum(3 * tail.se_t, 0.15 * theory)
    tail_ok = bool(rep.any()) and bool(np.all(np.abs(tail.mean_t - theory)[rep] <= band[rep]))
    tail_bad = int(np.sum(np.abs(tail.mean_t - theory)[rep] > band[rep]))
    erep = erg.reported
    dev = np.abs(erg.mean_t - 1.0)[erep]
    erg_ok = bool(erep.any()) and bool(np.all(dev <= 3 * erg.se_t[erep]))
    worst_sigma = float(np.max(dev / erg.se_t[erep]))
    record(9, "conditional weights", tail_ok and erg_ok,
           f"z=2.5: {rep.sum() - tail_bad}/{rep.sum()} populated x-bins within max(3SE, 0.15t) "
           f"({tail.samples} conditioned entries); ergodic bin: worst |t-1| = {worst_sigma:.1f} SE "
           f"(max |t-1| {dev.max():.3f}) vs 3 SE")


def _analytic_target(lo, hi, M, N):
    """Mean (largest-eigenvalue position, weight) over the exact law of z restricted to [lo, hi]."""
    law = zf_exact(M, N)
    alpha = M / N
    b = mp_edges(alpha).b
    zc = alpha + math.sqrt(alpha)

    def top(z):
        if z <= zc:
            return b, 0.0
        return z * (1 + 1 / (z - alpha)), 1 - alpha / (z - alpha) ** 2

    mass = law.cdf(hi) - law.cdf(lo)
    pts = [zc] if lo < zc < hi else None
    pos = integrate.quad(lambda z: top(z)[0] * law.pdf(z), lo, hi, points=pts, limit=200)[0] / mass
    wt = integrate.quad(lambda z: top(z)[1] * law.pdf(z), lo, hi, points=pts, limit=200)[0] / mass
    return pos, wt


@pytest.mark.slow
def test_criterion_10_detachment():
    M = N = 8
    p = SystemParams.from_dims(M, N, None, "zf")
    S = 10_000_000
    halfs = [0.1 * 1.5**k for k in range(12)]
    bins = [(max(3.0 - h, 0.0), 3.0 + h) for h in halfs]
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", EmptyBinWarning)
        stats = run_conditional_weights(p, S, seed=1000, z_bins=bins, x_bins=4, workers=WORKERS)
    law = zf_exact(M, N)
    nominal = stats[0]
    mass = float(law.cdf(3.1) - law.cdf(2.9))
    chosen = next((s for s in stats if s.samples >= 300), stats[-1])
    lo, hi = chosen.z_bin
    if chosen is nominal:
        t_pos, t_wt = 4.5, 0.75
    else:
        t_pos, t_wt = _analytic_target(lo, hi, M, N)
    ok = chosen.samples >= 300 and abs(chosen.top_weight - t_wt) <= 0.10 and abs(chosen.top_position - t_pos) <= 0.3
    record(10, "detachment", ok,
           f"[2.9,3.1] holds {nominal.samples} samples (exact mass {mass:.1e}); "
           f"enlarged to [{lo:.3f},{hi:.3f}] with {chosen.samples}: weight {chosen.top_weight:.3f} vs {t_wt:.3f} +-0.10, "
           f"largest eigenvalue {chosen.top_position:.3f} vs {t_pos:.3f} +-0.3")


def test_criterion_11_sample_identities():
    worst = max(sample_identity_residual(with_dims(p), 10_000, seed=1100) for p in GRID)
    record(11, "per-sample identities", worst < 1e-10, f"max residual {worst:.2e} < 1e-10 on 10^4 samples x {len(GRID)} systems")


def test_detachment_with_exact_conditioning():
    # not a numbered criterion: conditioning on z = 3 exactly (instead of by
    # rejection) shows the finite-N bands of criterion 10 are met at N = 8
    pos, wt = zf_conditional_extremes(8, 8, 3.0, seed=1001, count=50_000)
    print(f"\nexact conditioning at z=3, M=N=8: weight {wt:.3f} vs 0.75, largest eigenvalue {pos:.3f} vs 4.5")
    assert abs(wt - 0.75) <= 0.10 and abs(pos - 4.5) <= 0.3
