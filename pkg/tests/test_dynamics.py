import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import brentq

from conftest import benchmark_map, doubling_map
from thermoform.dynamics import (Branch, MarkovMap1D, default_c, derivative, evaluate, preimages,
                                 verify_hypotheses)
from thermoform.errors import DomainError, MapDefinitionError
from thermoform.potential import Potential

B_COEF = 9.0 * (1.0 - 1.0 / 3.3)


def tripling_map():
    return MarkovMap1D((0, 1 / 3, 2 / 3, 1), tuple(Branch.affine(3.0, -k) for k in range(3)))


class TestEvaluate:
    def test_doubling(self, doubling):
        assert evaluate(doubling, 0.3) == pytest.approx(0.6, abs=1e-15)

    def test_benchmark_fixed_point_at_zero(self, bench):
        assert evaluate(bench, 0.0) == 0.0

    def test_benchmark_tripling_branch(self, bench):
        assert evaluate(bench, 0.5) == pytest.approx(0.5, abs=1e-15)

    def test_outside_unit_interval(self, bench):
        with pytest.raises(DomainError):
            evaluate(bench, 1.0)
        with pytest.raises(DomainError):
            evaluate(bench, -0.1)

    @given(st.floats(0.0, 1.0, exclude_max=True))
    def test_image_in_unit_interval(self, x):
        y = evaluate(benchmark_map(), x)
        assert 0.0 <= y < 1.0


class TestPreimages:
    def test_doubling(self, doubling):
        assert preimages(doubling, 0.5) == pytest.approx([0.25, 0.75])

    def test_tripling_at_zero(self):
        assert preimages(tripling_map(), 0.0) == pytest.approx([0.0, 1 / 3, 2 / 3])

    def test_benchmark_quadratic_root(self, bench):
        ys = preimages(bench, 0.5)
        root = brentq(lambda x: x / 1.1 + B_COEF * x * x - 0.5, 0.0, 1 / 3, xtol=1e-15)
        assert ys == pytest.approx([root, 0.5, 5 / 6], abs=1e-12)
        assert abs(evaluate(bench, ys[0]) - 0.5) <= 1e-12

    @settings(max_examples=200)
    @given(st.floats(0.0, 1.0, exclude_max=True))
    def test_every_point_has_k_preimages_mapping_back(self, x):
        fmap = benchmark_map()
        ys = preimages(fmap, x)
        assert len(ys) == 3
        for y in ys:
            assert abs(evaluate(fmap, y) - x) < 1e-12 or abs(abs(evaluate(fmap, y) - x) - 1) < 1e-12


class TestDerivative:
    def test_doubling(self, doubling):
        assert derivative(doubling, 0.77) == 2.0

    def test_benchmark_left_end(self, bench):
        assert derivative(bench, 0.0) == pytest.approx(1 / 1.1, rel=1e-15)

    def test_benchmark_right_end_matches_finite_difference(self, bench):
        x, h = 1 / 3 - 1e-7, 1e-6
        expected = 1 / 1.1 + 2 * B_COEF / 3
        fd = (bench.branches[0](x + h) - bench.branches[0](x - h)) / (2 * h)
        assert abs(fd - expected) / expected <= 1e-6
        assert derivative(bench, x) == pytest.approx(expected, rel=1e-6)


class TestMapValidation:
    def test_breaks_must_increase(self):
        with pytest.raises(MapDefinitionError):
            MarkovMap1D((0, 0.6, 0.5, 1), tuple(Branch.affine(3.0, 0) for _ in range(3)))

    def test_branch_count(self):
        with pytest.raises(MapDefinitionError):
            MarkovMap1D((0, 0.5, 1), (Branch.affine(2, 0),))

    def test_non_markov_image(self):
        with pytest.raises(MapDefinitionError):
            MarkovMap1D((0, 0.5, 1), (Branch.affine(1.7, 0), Branch.affine(2, -1)))

    def test_decreasing_branch(self):
        with pytest.raises(MapDefinitionError):
            MarkovMap1D((0, 0.5, 1), (Branch.affine(-2, 1), Branch.affine(2, -1)))

    def test_delta0_floor(self):
        with pytest.raises(MapDefinitionError):
            benchmark_map().__class__(benchmark_map().breaks, benchmark_map().branches, q=1, delta0=0.05)

    def test_transition_and_degree(self, bench, golden):
        assert bench.transition.all()
        assert bench.degree == 3
        assert golden.transition.tolist() == [[True, True], [True, False]]
        assert golden.degree is None
        assert golden.mixing_time == 2

    def test_round_trip(self, bench):
        again = MarkovMap1D.from_dict(bench.to_dict())
        assert again == bench
        assert again.effective_delta0 == pytest.approx(0.1)

    def test_sigma1_and_derivative_bounds(self, bench):
        assert bench.sigma1 == 3.0
        lo, hi = bench.derivative_bounds[0]
        assert lo == pytest.approx(1 / 1.1)
        assert hi == pytest.approx(1 / 1.1 + 2 * B_COEF / 3)


@st.composite
def affine_full_branch_maps(draw):
    """Random Markov maps with every branch affine and onto [0, 1)."""
    d = draw(st.integers(2, 5))
    cuts = sorted(draw(st.lists(st.floats(0.05, 0.95), min_size=d - 1, max_size=d - 1, unique=True)))
    b = [0.0] + cuts + [1.0]
    if min(np.diff(b)) < 0.02:
        b = list(np.linspace(0, 1, d + 1))
    branches = tuple(Branch.affine(1 / (hi - lo), -lo / (hi - lo)) for lo, hi in zip(b, b[1:]))
    return MarkovMap1D(tuple(b), branches)


@settings(max_examples=40, deadline=None)
@given(affine_full_branch_maps(), st.floats(0.0, 1.0, exclude_max=True))
def test_random_full_branch_maps_have_d_preimages(fmap, x):
    ys = preimages(fmap, x)
    assert len(ys) == fmap.n_atoms
    assert fmap.transition.all()
    assert all(fmap.atom_of(y) == i for i, y in enumerate(ys))


class TestVerifyHypotheses:
    def test_doubling_passes(self, doubling, zero):
        rep = verify_hypotheses(doubling, zero, 0.9, 0.05)
        assert rep.passed
        assert rep["e.4"].slack >= 0

    def test_benchmark_e4_equality_at_default_c(self, bench, zero):
        c = default_c(bench, 0.9)
        expected = -0.25 * (0.9 * math.log(1.1) - 0.1 * math.log(3.0))
        assert c == pytest.approx(expected, rel=1e-14)
        rep = verify_hypotheses(bench, zero, 0.9)
        assert abs(rep["e.4"].slack) <= 1e-12
        assert rep.passed

    def test_benchmark_gamma_095_has_no_positive_c(self, bench):
        assert default_c(bench, 0.95) < 0

    def test_wide_potential_fails_e_epsilon2(self, bench):
        pot = Potential.per_atom((0.0, math.log(3.0), 0.0), bench.breaks)
        rep = verify_hypotheses(bench, pot, 0.9, c0_method="count", count_n=12)
        assert not rep.passed
        assert "e.epsilon2" in rep.failures
        assert rep.constants["c0"] > 0

    def test_report_json_shape(self, doubling, zero):
        d = verify_hypotheses(doubling, zero, 0.9).to_dict()
        assert {r["name"] for r in d["records"]} >= {"H1", "H2", "H3", "e.4", "e.epsilon2", "e.epsilon3"}
        assert "gamma" in d["constants"]

    def test_stirling_c0_is_looser(self, bench, zero):
        a = verify_hypotheses(bench, zero, 0.9, c0_method="count").constants["c0"]
        b = verify_hypotheses(bench, zero, 0.9, c0_method="stirling").constants["c0"]
        assert b >= a


def test_doubling_map_is_expanding_everywhere():
    fmap = doubling_map()
    xs = np.linspace(0, 1, 101)[:-1]
    assert np.all(fmap.derivative(xs) == 2.0)
