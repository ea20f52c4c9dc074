"""Finite-depth analysis: scaling functions, histograms, exponent scans."""
import math
from math import comb

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mfract.analysis import (
    AlmostDoublingReport,
    batch_local_exponents,
    check_almost_doubling,
    check_property_P,
    empirical_tau,
    large_deviation_spectrum,
    level_logmass,
    local_exponent,
)
from mfract.convex import EXPONENT, NEGINF, SPECTRUM
from mfract.dyadic import locate
from mfract.measures import (
    Environment,
    MoranMeasure,
    PrescribedSpectrum,
    auxiliary_sampler,
    build_measure,
)

TA = PrescribedSpectrum.tent(0.80, 1.0, 1.25)


@pytest.fixture(scope="module")
def tent():
    return build_measure(TA, d=1, depth_budget=24)


@pytest.fixture(scope="module")
def binomial():
    return MoranMeasure.homogeneous((0.25, 0.75), d=1, depth_budget=22)


@pytest.fixture(scope="module")
def lebesgue():
    return MoranMeasure.lebesgue(d=1, depth_budget=20)


class TestEmpiricalTau:
    def test_lebesgue_moments_exact(self, lebesgue):
        crv = empirical_tau(lebesgue, [0.0, 1.0, 3.0], 12)
        assert crv.values == (-1.0, 0.0, 2.0)
        leb2 = MoranMeasure.lebesgue(d=2, depth_budget=12)
        crv2 = empirical_tau(leb2, [0.0, 1.0, 3.0], 9)
        assert crv2.values == (-2.0, 0.0, 4.0)

    def test_binomial_closed_form(self, binomial):
        t = np.linspace(-5.0, 5.0, 101)
        for j in (8, 12):
            crv = empirical_tau(binomial, t, j)
            closed = -np.log2(0.25 ** t + 0.75 ** t)
            assert np.max(np.abs(np.array(crv.values) - closed)) <= 1e-12

    def test_anchor_moments(self, tent):
        crv = empirical_tau(tent, [0.0, 1.0], 13)
        assert crv.values[0] == -1.0
        assert abs(crv.values[1]) <= 1e-12

    def test_concave_and_nondecreasing(self, tent):
        t = np.linspace(-6.0, 6.0, 121)
        v = np.array(empirical_tau(tent, t, 11).values)
        assert np.all(np.diff(v, 2) <= 1e-9)
        assert np.all(np.diff(v) >= -1e-9)

    def test_power_identity_exact(self, binomial):
        t = np.linspace(-4.0, 4.0, 81)
        env = Environment(binomial, 0.5, 0.0)
        a = empirical_tau(env, t, 10).values
        b = empirical_tau(binomial, 0.5 * t, 10).values
        assert a == b

    def test_tilt_shifts_by_linear_term(self, lebesgue):
        t = np.linspace(-3.0, 3.0, 25)
        env = Environment(lebesgue, 1.0, 0.25)
        got = np.array(empirical_tau(env, t, 10).values)
        want = (t - 1.0) + 0.25 * t
        assert np.max(np.abs(got - want)) <= 1e-12

    def test_tensor_matches_brute_force(self):
        amb = PrescribedSpectrum.tent(1.6, 2.0, 2.5, peak=2)
        m2 = build_measure(amb, d=2, depth_budget=10)
        lm1 = m2.factor_logmass_levels(4)[4]
        pair = (lm1[:, None] + lm1[None, :]).ravel()
        for tv in (-3.0, 0.7, 2.5):
            brute = -math.log2(float(np.sum(np.exp2(tv * pair)))) / 4
            assert abs(empirical_tau(m2, [tv], 4).values[0] - brute) <= 1e-12

    def test_gap_to_conjugate_shrinks_at_boundaries(self, tent):
        t = np.linspace(-5.0, 5.0, 201)
        theo = tent.theoretical_tau(t)
        gaps = []
        for j in (8, 11, 14):
            v = np.array(empirical_tau(tent, t, j).values)
            gaps.append(float(np.max(np.abs(v - theo))))
        assert gaps[0] > gaps[1] > gaps[2]
        assert gaps[2] <= 0.15

    def test_extreme_moments_stay_finite(self, tent):
        crv = empirical_tau(tent, [-64.0, 64.0], 8)
        assert all(np.isfinite(crv.values))

    def test_curve_typing(self, tent):
        crv = empirical_tau(tent, [0.0, 1.0], 6)
        assert crv.kind == EXPONENT and crv.d == 1 and not crv.histogram

    def test_rejects_bad_inputs(self, tent):
        with pytest.raises(ValueError):
            empirical_tau(tent, [1.0, 0.0], 6)
        with pytest.raises(ValueError):
            empirical_tau(tent, [0.0, 1.0], 0)

    @settings(max_examples=25, deadline=None)
    @given(st.lists(st.floats(0.05, 1.0), min_size=4, max_size=4))
    def test_homogeneous_matches_letter_sum(self, raw):
        probs = tuple(x / sum(raw) for x in raw)
        m = MoranMeasure.homogeneous(probs, d=1, depth_budget=12)
        t = np.linspace(-3.0, 3.0, 31)
        got = np.array(empirical_tau(m, t, 6).values)
        p = np.array(probs)
        closed = np.array(
            [-math.log2(float(np.sum(p ** tv))) / 2.0 for tv in t])
        assert np.max(np.abs(got - closed)) <= 1e-12
        assert np.all(np.diff(got, 2) <= 1e-9)


class TestLargeDeviationSpectrum:
    def test_binomial_counts_are_binomial_coefficients(self, binomial):
        j = 12
        ld = large_deviation_spectrum(binomial, j)
        lo_idx = round(ld.arguments[0] / 0.02 - 0.5)
        seen = {}
        for a in range(j + 1):
            alpha = (2.0 * a - math.log2(0.75) * (j - a)) / j
            seen[int(math.floor(alpha / 0.02)) - lo_idx] = comb(j, a)
        for i, v in enumerate(ld.values):
            if i in seen:
                assert v is not NEGINF
                assert abs(v - math.log2(seen[i]) / j) <= 1e-12
            else:
                assert v is NEGINF

    def test_partition_sum_is_exact(self, binomial, tent):
        for m, j in ((binomial, 12), (tent, 14)):
            ld = large_deviation_spectrum(m, j)
            total = sum(round(2.0 ** (j * v))
                        for v in ld.values if v is not NEGINF)
            assert total == 1 << (j * m.d)
        leb2 = MoranMeasure.lebesgue(d=2, depth_budget=12)
        ld2 = large_deviation_spectrum(leb2, 10)
        total2 = sum(round(2.0 ** (10 * v))
                     for v in ld2.values if v is not NEGINF)
        assert total2 == 1 << 20

    def test_lebesgue_concentrates_in_one_bin(self, lebesgue):
        ld = large_deviation_spectrum(lebesgue, 10)
        finite = [(a, v) for a, v in zip(ld.arguments, ld.values)
                  if v is not NEGINF]
        assert len(finite) == 1
        a, v = finite[0]
        assert abs(a - 1.01) <= 1e-12 and v == 1.0

    def test_curve_typing(self, tent):
        ld = large_deviation_spectrum(tent, 10)
        assert ld.kind == SPECTRUM and ld.histogram and ld.d == 1
        assert all(v <= 1.0 + 1e-9 for v in ld.values if v is not NEGINF)

    def test_tent_tracks_sigma_at_deep_boundaries(self, tent):
        # bin-aware distance: the histogram argument is only known to its
        # bin, so compare against the sigma range over that bin
        for j, tol in ((17, 0.10), (20, 0.15)):
            ld = large_deviation_spectrum(tent, j)
            worst = 0.0
            for a, v in zip(ld.arguments, ld.values):
                if v is NEGINF:
                    continue
                if float(tent.sigma_values(np.array([a]))[0]) <= 0.2:
                    continue
                grid = np.linspace(a - 0.01, a + 0.01, 21)
                sig = tent.sigma_values(grid)
                lo, hi = float(sig.min()), float(sig.max())
                if not lo <= v <= hi:
                    worst = max(worst, min(abs(v - lo), abs(v - hi)))
            assert worst <= tol

    def test_sampled_rays_deterministic_under_seed(self):
        amb = PrescribedSpectrum.tent(1.6, 2.0, 2.5, peak=2)
        m2 = build_measure(amb, d=2, depth_budget=14)
        a = large_deviation_spectrum(m2, 13, seed=5)
        b = large_deviation_spectrum(m2, 13, seed=5)
        assert a.arguments == b.arguments and a.values == b.values
        assert all(v <= 2.0 + 1e-9 for v in a.values if v is not NEGINF)


class TestLocalExponent:
    def test_lebesgue_is_exactly_one(self, lebesgue):
        fit = local_exponent(lebesgue, (0.3,), (4, 12))
        assert abs(fit.estimate - 1.0) <= 1e-12
        assert fit.residual_l2 <= 1e-12
        assert fit.levels == 9

    def test_corner_mass_is_product_of_first_letters(self, tent):
        # independent route: multiply linear-space letter probabilities
        mass = 1.0
        depth, filled = 14, 0
        for N in tent.schedule.letters(depth):
            adv = min(N, depth - filled)
            vec = tent.vector(N)
            if adv == N:
                mass *= float(vec.letter_probs[0])
            else:
                mass *= float(vec.prefix_mass(adv)[0])
            filled += adv
        lm = tent.logmass2(locate((0.0,), depth))
        assert abs(2.0 ** lm - mass) / mass <= 1e-12
        fit = local_exponent(tent, (0.0,), (4, 16))
        assert 0.90 <= fit.estimate <= 0.99

    def test_batch_agrees_with_scalar_path(self, tent):
        sam = auxiliary_sampler(tent, 1.0, seed=1)
        batch = sam.draw(50, 18)
        ests = batch_local_exponents(tent, batch, (10, 18))
        one = local_exponent(tent, tuple(batch.points[7]), (10, 18))
        assert ests[7] == one.estimate
        assert np.all(np.abs(ests - 1.0) <= 0.2)

    def test_sampled_points_concentrate_near_target(self, tent):
        sam = auxiliary_sampler(tent, 1.0, seed=3)
        batch = sam.draw(100, 18)
        ests = batch_local_exponents(tent, batch, (10, 18))
        assert np.mean(np.abs(ests - 1.0) <= 0.1) >= 0.9

    def test_rejects_bad_ranges(self, tent):
        with pytest.raises(ValueError):
            local_exponent(tent, (0.5,), (0, 4))
        with pytest.raises(ValueError):
            local_exponent(tent, (0.5,), (8, 4))
        sam = auxiliary_sampler(tent, 1.0, seed=0)
        batch = sam.draw(5, 10)
        with pytest.raises(ValueError):
            batch_local_exponents(tent, batch, (4, 12))


class TestAlmostDoubling:
    def test_lebesgue_is_exactly_doubling(self, lebesgue):
        rep = check_almost_doubling(lebesgue, 10)
        assert rep.phi_excess == (0.0,) * 10
        assert all(abs(r - 3.0) <= 1e-9 for r in rep.max_raw_ratio)
        assert rep.boundary_trend_ok
        assert rep.phi(7) == 0.0

    def test_tent_excess_frozen_values(self, tent):
        rep = check_almost_doubling(tent, 16)
        assert abs(rep.phi_excess[3] - 0.061155) <= 1e-4
        assert abs(rep.phi_excess[13] - 0.129329) <= 1e-4
        assert max(rep.max_raw_ratio) <= 3.5
        assert rep.boundary_trend_ok
        assert rep.worst[0] in range(1, 17)

    def test_tilt_cancels_in_ratio(self, tent):
        env = Environment(tent, 1.0, 0.3)
        a = check_almost_doubling(tent, 10)
        b = check_almost_doubling(env, 10)
        assert np.allclose(a.phi_excess, b.phi_excess, atol=1e-9)

    def test_rejects_tensor_measures(self):
        leb2 = MoranMeasure.lebesgue(d=2, depth_budget=10)
        with pytest.raises(ValueError):
            check_almost_doubling(leb2, 6)
        with pytest.raises(ValueError):
            level_logmass(leb2, 4)


class TestPropertyP:
    def test_lebesgue_sandwich_is_tight(self, lebesgue):
        rep = check_property_P(lebesgue, 12)
        assert abs(rep.s1 - 1.0) <= 1e-9
        assert abs(rep.s2 - 1.0) <= 1e-9
        assert abs(rep.C - 1.0) <= 1e-9
        assert rep.phi_log2 == (0.0,) * 12
        assert rep.ok and rep.order_ok and rep.phi_trend_ok

    def test_lebesgue_tensor_scales_with_dimension(self):
        leb2 = MoranMeasure.lebesgue(d=2, depth_budget=12)
        rep = check_property_P(leb2, 10)
        assert abs(rep.s1 - 2.0) <= 1e-9
        assert abs(rep.s2 - 2.0) <= 1e-9

    def test_tent_fitted_exponents(self, tent):
        rep = check_property_P(tent, 16)
        assert rep.order_ok and rep.phi_trend_ok
        assert 0.90 <= rep.s1 <= 1.0 <= rep.s2 <= 1.15
        assert 1.0 <= rep.C <= 1.5
        assert abs(rep.phi_log2[15] - 0.5) <= 1e-3
        assert set(rep.witnesses) == {"heaviest", "lightest"}

    def test_tilt_shifts_exponents(self, lebesgue):
        rep = check_property_P(Environment(lebesgue, 1.0, -0.25), 12)
        assert abs(rep.s1 - 0.75) <= 1e-9
        assert abs(rep.s2 - 0.75) <= 1e-9
