import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from thermoform.cli import random_cone_element
from thermoform.cones import (Grid, cone_constants, cone_metric, contraction_rate, diameter_bound, in_cone,
                              invariance_factor, lasota_yorke_constants, norm_gap_bound, two_norm)
from thermoform.errors import ContractError, HypothesisViolation
from thermoform.potential import Potential
from thermoform.transfer import apply_transfer, spectrum

ONE_ATOM = Grid((0.0, 1.0), 48, 64)


def ones(x):
    return np.ones(np.shape(x))


class TestMembership:
    def test_constant(self):
        ok, margin = in_cone(ones, 3.0, ONE_ATOM)
        assert ok and margin == pytest.approx(3.0)

    def test_linear_too_steep(self):
        ok, _ = in_cone(lambda x: 1 + np.asarray(x), 0.5, ONE_ATOM)
        assert not ok

    def test_linear_inside(self):
        ok, margin = in_cone(lambda x: 1 + np.asarray(x), 2.0, ONE_ATOM)
        assert ok
        assert margin == pytest.approx(2.0 * grid_min_one_plus_x() - 1.0, abs=1e-12)


def grid_min_one_plus_x():
    return 1.0 + min(ONE_ATOM.points.min(), ONE_ATOM.z.min())


class TestMetric:
    def test_identical(self):
        g = lambda x: 2 + np.sin(np.asarray(x))  # noqa: E731
        assert cone_metric(g, g, 5.0, ONE_ATOM) == pytest.approx(0.0, abs=1e-14)

    def test_projective(self):
        g = lambda x: 2 + np.sin(np.asarray(x))  # noqa: E731
        assert cone_metric(g, lambda x: 2 * g(x), 5.0, ONE_ATOM) == pytest.approx(0.0, abs=1e-14)

    def test_continuity_in_perturbation_size(self):
        w = lambda x: np.cos(2 * np.pi * np.asarray(x))  # noqa: E731
        psis = [cone_metric(ones, lambda x, s=s: 1 + s * w(x), 20.0, ONE_ATOM) for s in (0.1, 0.05, 0.025)]
        assert psis[0] > psis[1] > psis[2] > 0

    def test_outside_cone(self):
        with pytest.raises(ContractError):
            cone_metric(ones, lambda x: 1 + 10 * np.asarray(x), 1.0, ONE_ATOM)

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 10 ** 6))
    def test_triangle_inequality(self, seed):
        rng = np.random.default_rng(seed)
        grid = Grid((0.0, 0.5, 1.0), 16, 32)
        f, g, h = (random_cone_element(rng, 8.0, grid) for _ in range(3))
        L = 10.0
        assert cone_metric(f, h, L, grid) <= cone_metric(f, g, L, grid) + cone_metric(g, h, L, grid) + 1e-12


class TestConstants:
    def test_doubling(self, doubling, zero):
        theta, C = lasota_yorke_constants(doubling, zero, 2.0)
        assert theta == pytest.approx(0.5, rel=1e-15)
        assert C == 0.0

    def test_benchmark_plug_in(self, bench, zero):
        theta, _ = lasota_yorke_constants(bench, zero, 3.0)
        assert theta == pytest.approx(2 / 9 + 1.1 / 3, rel=1e-14)

    def test_violation(self, bench):
        pot = Potential.per_atom((1.5, 1.5, 1.5), bench.breaks)
        with pytest.raises(HypothesisViolation):
            lasota_yorke_constants(bench, pot, 3.0)

    def test_invariance_factor(self):
        assert invariance_factor(0.5, 0.1, 0.0, 10.0, 0.6) == pytest.approx(0.6)
        assert invariance_factor(0.5, 0.1, math.log(1.5), 10.0, 0.6) == pytest.approx(0.9)
        with pytest.raises(HypothesisViolation):
            invariance_factor(0.5, 0.1, math.log(2), 10.0, 0.6)
        with pytest.raises(ContractError):
            invariance_factor(0.5, 1.0, 0.0, 1.0, 0.6)

    def test_diameter_and_rate(self):
        delta = diameter_bound(0.5, 2.0, 1, 1.0, 1.0)
        assert delta == pytest.approx(math.log(36))
        assert diameter_bound(1e-12, 2.0, 1, 1.0, 1.0) == pytest.approx(0.0, abs=1e-10)
        assert contraction_rate(0.0) == 0.0
        assert contraction_rate(math.log(36)) == pytest.approx(math.tanh(math.log(36) / 4))
        assert contraction_rate(math.log(36)) == pytest.approx(0.7143, abs=1e-4)

    def test_norm_gap(self):
        assert norm_gap_bound(0.0, 5.0) == 0.0
        assert norm_gap_bound(math.log(2), 3.0) == pytest.approx(3.0)

    def test_chain(self, bench, tent):
        lam = spectrum(bench, tent, 8, gap=False).lam
        cc = cone_constants(bench, tent, lam)
        assert cc.theta < cc.theta0 < 1
        assert 0 < cc.sigma < 1
        assert cc.rate < 1
        assert cc.L >= 2 * cc.C1 / (cc.theta0 - cc.theta) - 1e-12

    def test_two_norm(self):
        assert two_norm(lambda x: 1 + np.asarray(x), 4.0, ONE_ATOM) == pytest.approx(
            1 + ONE_ATOM.points.max() + 0.25, abs=1e-2)


class TestInvariance:
    def test_transfer_maps_cone_inside_smaller_cone(self, bench, tent):
        lam = spectrum(bench, tent, 8, gap=False).lam
        cc = cone_constants(bench, tent, lam)
        grid = Grid(bench.breaks, 24, 32)
        rng = np.random.default_rng(3)
        for _ in range(20):
            g = random_cone_element(rng, cc.L, grid)
            assert in_cone(g, cc.L, grid)[0]
            Lg = lambda x: apply_transfer(bench, tent, g, x) / lam  # noqa: E731
            assert in_cone(Lg, cc.sigma * cc.L, grid)[0]
