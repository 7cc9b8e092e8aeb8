"""Tests for the loss-form algebra behind the two-component closed forms."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mixrlct.domain import DimensionMismatchError, SimplexVector
from mixrlct.kforms import (
    MeanOffsetPoint,
    OffsetPoint,
    TwoComponentPoint,
    comparability_ratio_bounds,
    defect_square_sum,
    kl_loss,
    mean_offset_to_offsets,
    monomial_defect,
    normal_form_loss,
    offsets_to_mean_offset,
    offsets_to_point,
    point_to_offsets,
    recurrence_residual,
    reduced_defect_form,
    self_check,
)

TRUTH = SimplexVector((0.5, 0.3, 0.2))


def random_point(rng, categories):
    return TwoComponentPoint(
        float(rng.random()),
        SimplexVector(tuple(rng.dirichlet(np.ones(categories)))),
        SimplexVector(tuple(rng.dirichlet(np.ones(categories)))),
    )


def random_truth(rng, categories):
    while True:
        t = rng.dirichlet(np.ones(categories))
        if t.min() >= 0.05:
            return SimplexVector(tuple(t))


class TestMonomialDefect:
    def test_zero_at_truth(self):
        pt = TwoComponentPoint(0.3, TRUTH, TRUTH)
        for pattern in ((0, 0), (1, 0), (2, 1), (0, 3)):
            assert monomial_defect(pattern, pt, TRUTH) == pytest.approx(0.0, abs=1e-15)

    def test_hand_value(self):
        pt = TwoComponentPoint(
            0.5, SimplexVector((0.6, 0.2, 0.2)), SimplexVector((0.4, 0.4, 0.2))
        )
        # pattern (1,0): 0.5*0.6 + 0.5*0.4 - 0.5 = 0
        assert monomial_defect((1, 0), pt, TRUTH) == pytest.approx(0.0, abs=1e-15)
        # pattern (2,0): 0.5*0.36 + 0.5*0.16 - 0.25 = 0.01
        assert monomial_defect((2, 0), pt, TRUTH) == pytest.approx(0.01, abs=1e-15)

    def test_empty_pattern_vanishes(self):
        # all-zero exponents: a + (1-a) - 1 = 0 identically
        rng = np.random.default_rng(1)
        for _ in range(20):
            pt = random_point(rng, 3)
            assert monomial_defect((0, 0), pt, TRUTH) == pytest.approx(0.0, abs=1e-15)

    def test_pattern_validation(self):
        pt = TwoComponentPoint(0.5, TRUTH, TRUTH)
        with pytest.raises(DimensionMismatchError):
            monomial_defect((1, 0, 0), pt, TRUTH)
        with pytest.raises(ValueError):
            monomial_defect((1, -1), pt, TRUTH)

    def test_boundary_truth_rejected(self):
        pt = TwoComponentPoint(
            0.5, SimplexVector((0.5, 0.5, 0.0)), SimplexVector((0.5, 0.5, 0.0))
        )
        with pytest.raises(ValueError):
            monomial_defect((1, 0), pt, SimplexVector((0.5, 0.5, 0.0)))


class TestRecurrence:
    @given(st.integers(0, 2**32 - 1))
    @settings(max_examples=200, deadline=None)
    def test_residual_vanishes(self, seed):
        rng = np.random.default_rng(seed)
        L = int(rng.integers(3, 6))
        truth = random_truth(rng, L)
        pt = random_point(rng, L)
        k = L - 1
        pattern = list(rng.integers(0, 4, size=k))
        coord = int(rng.integers(1, k + 1))
        pattern[coord - 1] = int(rng.integers(2, 6))
        assert abs(recurrence_residual(tuple(pattern), coord, pt, truth)) <= 1e-10

    def test_needs_exponent_two(self):
        pt = TwoComponentPoint(0.5, TRUTH, TRUTH)
        with pytest.raises(ValueError):
            recurrence_residual((1, 0), 1, pt, TRUTH)

    def test_coord_range(self):
        pt = TwoComponentPoint(0.5, TRUTH, TRUTH)
        with pytest.raises(ValueError):
            recurrence_residual((2, 0), 3, pt, TRUTH)


class TestLossForms:
    def test_all_forms_share_zero_at_truth(self):
        rng = np.random.default_rng(2)
        for _ in range(10):
            a = float(0.5 * rng.random())
            pt = TwoComponentPoint(a, TRUTH, TRUTH)
            assert kl_loss(pt, TRUTH, trials=2) == pytest.approx(0.0, abs=1e-12)
            assert defect_square_sum(pt, TRUTH, trials=2) == pytest.approx(0.0, abs=1e-15)
            assert reduced_defect_form(pt, TRUTH) == pytest.approx(0.0, abs=1e-15)
            v = offsets_to_mean_offset(point_to_offsets(pt, TRUTH))
            assert normal_form_loss(v) == pytest.approx(0.0, abs=1e-15)

    def test_zero_weight_kills_first_component(self):
        # weight 0: first component invisible, loss zero iff second hits truth
        other = SimplexVector((0.4, 0.35, 0.25))
        pt = TwoComponentPoint(0.0, other, TRUTH)
        assert kl_loss(pt, TRUTH, trials=2) == pytest.approx(0.0, abs=1e-12)
        assert reduced_defect_form(pt, TRUTH) == pytest.approx(0.0, abs=1e-15)
        pt2 = TwoComponentPoint(0.0, TRUTH, other)
        assert kl_loss(pt2, TRUTH, trials=2) > 1e-4

    def test_positive_off_variety(self):
        pt = TwoComponentPoint(
            0.4, SimplexVector((0.6, 0.2, 0.2)), SimplexVector((0.3, 0.5, 0.2))
        )
        assert kl_loss(pt, TRUTH, trials=2) > 0.0
        assert defect_square_sum(pt, TRUTH, trials=2) > 0.0
        assert reduced_defect_form(pt, TRUTH) > 0.0

    def test_kl_quadratic_scaling_along_mean_direction(self):
        # moving the mixture mean by eps changes KL like eps^2
        def loss_at(eps):
            v = MeanOffsetPoint(0.25, (0.0, 0.0), (eps, 0.0))
            pt = offsets_to_point(mean_offset_to_offsets(v), TRUTH)
            return kl_loss(pt, TRUTH, trials=2)

        l1, l2 = loss_at(1e-3), loss_at(2e-3)
        assert l2 / l1 == pytest.approx(4.0, rel=1e-2)

    def test_kl_quartic_scaling_along_singular_direction(self):
        # zero mean offset: KL scales like the fourth power of the first
        # component's offset, the signature of the singular direction
        def loss_at(eps):
            v = MeanOffsetPoint(0.25, (eps, 0.0), (0.0, 0.0))
            pt = offsets_to_point(mean_offset_to_offsets(v), TRUTH)
            return kl_loss(pt, TRUTH, trials=2)

        l1, l2 = loss_at(1e-2), loss_at(2e-2)
        assert l2 / l1 == pytest.approx(16.0, rel=5e-2)

    def test_normal_form_matches_hand_value(self):
        v = MeanOffsetPoint(0.3, (0.1, -0.2), (0.05, 0.0))
        want = 0.05**2 + 0.3**2 * (0.1**4 + 0.2**4)
        assert normal_form_loss(v) == pytest.approx(want, rel=1e-15)


class TestCoordinateCharts:
    @given(st.integers(0, 2**32 - 1))
    @settings(max_examples=100, deadline=None)
    def test_offset_round_trip(self, seed):
        rng = np.random.default_rng(seed)
        L = int(rng.integers(3, 6))
        truth = random_truth(rng, L)
        pt = random_point(rng, L)
        back = offsets_to_point(point_to_offsets(pt, truth), truth)
        assert back.weight == pt.weight
        np.testing.assert_allclose(back.first.probs, pt.first.probs, atol=1e-12)
        np.testing.assert_allclose(back.second.probs, pt.second.probs, atol=1e-12)

    @given(st.integers(0, 2**32 - 1))
    @settings(max_examples=100, deadline=None)
    def test_mean_offset_round_trip(self, seed):
        rng = np.random.default_rng(seed)
        a = float(0.5 * rng.random())
        first = tuple(0.2 * (rng.random(2) - 0.5))
        second = tuple(0.2 * (rng.random(2) - 0.5))
        u = OffsetPoint(a, first, second)
        u2 = mean_offset_to_offsets(offsets_to_mean_offset(u))
        np.testing.assert_allclose(u2.second_offset, u.second_offset, atol=1e-12)

    def test_mean_offset_chart_boundary(self):
        v = MeanOffsetPoint(0.7, (0.1,), (0.0,))
        with pytest.raises(ValueError):
            mean_offset_to_offsets(v)

    def test_offsets_leaving_simplex_rejected(self):
        u = OffsetPoint(0.3, (0.9, 0.0), (0.0, 0.0))
        with pytest.raises(ValueError):
            offsets_to_point(u, TRUTH)

    def test_mean_is_weighted_combination(self):
        u = OffsetPoint(0.25, (0.08, -0.02), (-0.04, 0.06))
        v = offsets_to_mean_offset(u)
        want = tuple(0.25 * b + 0.75 * g for b, g in zip(u.first_offset, u.second_offset))
        np.testing.assert_allclose(v.mean_offset, want, atol=1e-15)


class TestComparability:
    def test_frozen_bracket(self):
        # constants frozen from this probe; the reduced and normal forms
        # bracket each other within fixed positive factors on the chart
        lo, hi = comparability_ratio_bounds(TRUTH, 2000, seed=6)
        assert 0.9 < lo <= hi < 3.0

    def test_scale_insensitivity_of_bracket(self):
        lo1, hi1 = comparability_ratio_bounds(TRUTH, 500, seed=7, scale=0.05)
        assert 0.5 < lo1 <= hi1 < 5.0


class TestSelfCheck:
    def test_passes_and_reports(self):
        rep = self_check(points=300, seed=0)
        assert rep["passed"] is True
        assert rep["worst_recurrence_residual"] <= 1e-10
        assert rep["worst_round_trip_error"] <= 1e-12
        assert rep["worst_zero_at_truth"] <= 1e-10
        assert rep["comparability_ratio_lo"] > 0.0

    def test_points_validated(self):
        with pytest.raises(ValueError):
            self_check(points=0)
