import math
import warnings

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wishart_tails.core import DomainError, SystemParams
from wishart_tails.distributions import (
    CoverageError,
    CurveKind,
    cdf,
    cdf_function,
    default_grid,
    from_sinr,
    gamma_fit_law,
    gamma_moment_fit,
    logpdf_unnormalized,
    normalize,
    outage,
    to_sinr,
    zf_exact,
)
from wishart_tails.ratefn import DegenerateVarianceWarning, ergodic_stats, rate_function

ZF63 = SystemParams(2.0, 10.0, "zf", M=6, N=3)
MMSE66 = SystemParams(1.0, 1.0, "mmse", M=6, N=6)

# sup |analytic - moment-matched Gamma| for M = N = 6, rho = 1, frozen at first computation
NOT_GAMMA_SUP = 0.5798372890346252


@pytest.mark.parametrize(
    "params, expected",
    [
        (MMSE66, -6 * math.log(2) - 6),
        (SystemParams(2.0, None, "zf", M=6, N=3), -3.0),
        (SystemParams(2.0, 10.0, "mmse", M=6, N=3), -3 * math.log(1.1) - 3),
    ],
)
def test_logpdf_examples(params, expected):
    assert logpdf_unnormalized(1.0, params) == pytest.approx(expected, abs=1e-12)


def test_logpdf_floor_below_zero():
    assert logpdf_unnormalized(-1.0, MMSE66) == -np.inf
    assert logpdf_unnormalized(0.0, ZF63) == -np.inf


GRID_PARAMS = [
    SystemParams(a, r, rec, M=int(a * 8), N=8)
    for a in (1.0, 2.0, 4.0)
    for r, rec in ((1.0, "mmse"), (10.0, "mmse"), (None, "zf"))
]


@pytest.mark.parametrize("params", GRID_PARAMS, ids=str)
def test_logpdf_plus_rate_is_constant(params):
    _, N = params.require_dims()
    z = np.linspace(0.05, 6.0, 200)
    vals = logpdf_unnormalized(z, params) + N * rate_function(z, params)
    assert np.ptp(vals) < 1e-9


@pytest.mark.parametrize("params", [p for p in GRID_PARAMS if not (p.is_zf and p.alpha == 1)], ids=str)
def test_normalized_mass_and_coverage(params):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", DegenerateVarianceWarning)
        curve = normalize(default_grid(params), params)
        stats = ergodic_stats(params)
    assert abs(curve.mass() - 1.0) < 1e-6
    _, N = params.require_dims()
    sd = math.sqrt(stats.v_erg / N)
    assert curve.grid[0] <= max(1e-6 * stats.z_erg, stats.z_erg - 8 * sd)
    assert curve.grid[-1] >= stats.z_erg + 8 * sd


def test_mode_of_mmse_density_is_ergodic():
    for params in (MMSE66, SystemParams(2.0, 10.0, "mmse", M=6, N=3)):
        z0 = ergodic_stats(params).z_erg
        _, N = params.require_dims()
        h = 1e-6
        grad = (logpdf_unnormalized(z0 + h, params) - logpdf_unnormalized(z0 - h, params)) / (2 * h)
        assert abs(grad) / N < 1e-8


def test_coverage_error_on_narrow_grid():
    z0 = ergodic_stats(MMSE66).z_erg
    with pytest.raises(CoverageError):
        normalize(np.linspace(z0 - 0.01, z0 + 0.01, 50), MMSE66)


def test_zf_curve_is_exact_gamma():
    grid = default_grid(ZF63)
    curve = normalize(grid, ZF63)
    law = zf_exact(6, 3)
    assert np.max(np.abs(curve.pdf() - law.pdf(grid))) < 1e-8
    # the same statement in the beta = rho z variable
    beta = to_sinr(grid, ZF63)
    assert np.max(np.abs(curve.pdf() / 10.0 - zf_exact(6, 3, 10.0).pdf(beta))) < 1e-9
    assert np.allclose(from_sinr(beta, ZF63), grid, rtol=1e-15)


def test_mmse_density_is_not_gamma():
    grid = default_grid(MMSE66)
    sup = np.max(np.abs(normalize(grid, MMSE66).pdf() - normalize(grid, MMSE66, CurveKind.GAMMA_FIT).pdf()))
    assert sup > 0
    assert sup == pytest.approx(NOT_GAMMA_SUP, rel=1e-6)


class TestGammaLaws:
    def test_zf_exact_moments(self):
        law = zf_exact(6, 3, 10.0)
        assert law.mean == pytest.approx(40 / 3, rel=1e-15)
        assert law.var == pytest.approx(400 / 9, rel=1e-15)
        assert zf_exact(4, 4, 2.0).shape == 1.0 and zf_exact(4, 4, 2.0).mean == pytest.approx(0.5)

    def test_zf_exact_rejects_bad_dims(self):
        with pytest.raises(DomainError):
            zf_exact(2, 3)

    @pytest.mark.parametrize("mean, var, shape, scale", [(2.0, 2.0, 2.0, 1.0), (1.0, 1.0, 1.0, 1.0)])
    def test_moment_fit(self, mean, var, shape, scale):
        law = gamma_moment_fit(mean, var)
        assert (law.shape, law.scale) == (pytest.approx(shape), pytest.approx(scale))

    @pytest.mark.parametrize("mean, var", [(0.0, 1.0), (1.0, -1.0)])
    def test_moment_fit_rejects(self, mean, var):
        with pytest.raises(DomainError):
            gamma_moment_fit(mean, var)

    @pytest.mark.parametrize("M, N", [(64, 32), (256, 128)])
    def test_fit_recovers_zf_shape_at_large_n(self, M, N):
        fit = gamma_fit_law(SystemParams(M / N, None, "zf", M=M, N=N))
        assert fit.shape / (M - N + 1) == pytest.approx(1.0, abs=1.5 / N)

    @pytest.mark.parametrize(
        "shape, x",
        [(1.0, 0.5), (4.0, 1.3), (4.0, 12.0), (0.5, 1e-3), (30.5, 28.0), (100.0, 140.0), (2.5, 1e-8)],
    )
    def test_gamma_cdf_against_mpmath(self, shape, x):
        from wishart_tails.distributions import GammaLaw

        mp.mp.dps = 40
        ref = float(mp.gammainc(shape, 0, x, regularized=True))
        ref_sf = float(mp.gammainc(shape, x, mp.inf, regularized=True))
        law = GammaLaw(shape, 1.0)
        assert law.cdf(x) == pytest.approx(ref, rel=1e-12, abs=1e-300)
        assert law.sf(x) == pytest.approx(ref_sf, rel=1e-12, abs=1e-300)
        assert law.logpdf(x) == pytest.approx(
            float((shape - 1) * mp.log(x) - x - mp.loggamma(shape)), rel=1e-12, abs=1e-12
        )


class TestOutage:
    def test_gamma_median(self):
        target = zf_exact(6, 3, 10.0).ppf(0.5)
        assert outage(target, ZF63).probability == pytest.approx(0.5, abs=1e-6)
        assert outage(target, ZF63, "exact").probability == pytest.approx(0.5, abs=1e-12)

    def test_limits(self):
        assert outage(1e-9, ZF63).probability < 1e-30
        assert outage(1e9, ZF63).probability == 1.0
        assert outage(1e9, MMSE66, "gaussian").probability == pytest.approx(1.0)

    def test_bad_method(self):
        with pytest.raises(DomainError):
            outage(1.0, ZF63, "nope")
        with pytest.raises(DomainError):
            outage(1.0, MMSE66, "exact")
        with pytest.raises(DomainError):
            outage(-1.0, MMSE66)

    @settings(max_examples=30, deadline=None)
    @given(t=st.lists(st.floats(1e-3, 5.0), min_size=2, max_size=6), kind=st.sampled_from(list(CurveKind)[:3]))
    def test_monotone(self, t, kind):
        t = sorted(t)
        probs = [cdf(x, MMSE66, kind) for x in t]
        assert all(b >= a - 1e-12 for a, b in zip(probs, probs[1:]))
        assert all(0.0 <= p <= 1.0 for p in probs)

    @pytest.mark.parametrize("kind", ["analytic", "gaussian", "gamma_fit"])
    def test_vectorized_cdf_matches_scalar(self, kind):
        F = cdf_function(MMSE66, kind)
        for z in (0.2, 0.6, 1.1, 2.0):
            assert F(z) == pytest.approx(cdf(z, MMSE66, kind), abs=1e-6)
