import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from stein_gauge.errors import InputError
from stein_gauge.oracles import (
    CubicPolynomial,
    SmoothFunctionOracle,
    estimate_lipschitz_constant,
    fd_gradient,
    fd_hessian,
    quadratic_equality_instance,
    random_cubic,
    second_order_gap,
    third_order_gap,
    verify_gap_inequalities,
)

SINE = SmoothFunctionOracle(lambda x: np.sin(x[..., 0]), lambda x: np.stack([np.cos(x[..., 0])], -1), 1.0, 1.0, 1.0, "sin")


class TestCubic:
    def test_gradient_matches_finite_differences(self, rng):
        poly = random_cubic(3, rng, radius=2.0)
        x = rng.standard_normal(3)
        np.testing.assert_allclose(poly.gradient(x), fd_gradient(poly.value, x, 1e-5), rtol=1e-7, atol=1e-8)

    def test_hessian_matches_finite_differences(self, rng):
        poly = random_cubic(2, rng, radius=2.0)
        x = rng.standard_normal(2)
        expected = poly.a + np.einsum("ijk,k->ij", poly.t, x)
        np.testing.assert_allclose(fd_hessian(poly.value, x, 1e-4), expected, atol=1e-5)

    def test_bounds_dominate_sampled_constants(self, rng):
        poly = random_cubic(2, rng, radius=1.0)
        pts = rng.standard_normal((40, 2))
        pts /= np.maximum(1.0, np.linalg.norm(pts, axis=1))[:, None]
        pairs = list(zip(pts[::2], pts[1::2]))
        assert estimate_lipschitz_constant(poly.value, 2, pairs) <= poly.m2 * (1 + 1e-6)
        assert estimate_lipschitz_constant(poly.value, 3, pairs) <= poly.m3 * (1 + 1e-3)

    def test_degrees(self, rng):
        lin = random_cubic(2, rng, 1.0, degree=1)
        assert lin.m2 == 0.0 and lin.m3 == 0.0
        quad = random_cubic(2, rng, 1.0, degree=2)
        assert quad.m3 == 0.0 and quad.m2 > 0


class TestLipschitzEstimates:
    def test_sine_constants_near_one(self):
        pairs = [(np.array([a]), np.array([a + 1e-3])) for a in (0.0, math.pi / 2, math.pi)]
        for order in (1, 2, 3):
            est = estimate_lipschitz_constant(lambda x: np.sin(x[0]), order, pairs)
            assert 0.99 <= est <= 1.0 + 1e-3

    def test_rejects_order(self):
        with pytest.raises(InputError):
            estimate_lipschitz_constant(np.sin, 4, [])


class TestGapInequalities:
    @settings(max_examples=100, deadline=None)
    @given(
        arrays(np.float64, (4, 2), elements=st.floats(-3, 3)),
        st.floats(0.1, 10),
        st.floats(0.1, 10),
    )
    def test_second_order_holds_for_sine(self, pts, lam, lam_p):
        lhs, rhs = second_order_gap(SINE, lam, lam_p, *pts[:, :1])
        assert lhs <= rhs * (1 + 1e-9) + 1e-12

    @settings(max_examples=100, deadline=None)
    @given(arrays(np.float64, (8, 1), elements=st.floats(-3, 3)), st.floats(0.1, 10), st.floats(0.1, 10))
    def test_third_order_holds_for_sine(self, pts, lam, lam_p):
        lhs, rhs = third_order_gap(SINE, lam, lam_p, *pts)
        assert lhs <= rhs * (1 + 1e-9) + 1e-12

    def test_random_cubics(self, rng):
        for _ in range(200):
            d = int(rng.integers(1, 4))
            pts = 2 * rng.standard_normal((8, d))
            h = random_cubic(d, rng, float(np.max(np.linalg.norm(pts, axis=1)))).oracle()
            lam, lam_p = rng.uniform(0.1, 10, 2)
            l2, r2 = second_order_gap(h, lam, lam_p, pts[0], pts[1], pts[4], pts[5])
            l3, r3 = third_order_gap(h, lam, lam_p, *pts)
            assert l2 <= r2 * (1 + 1e-9) + 1e-12
            assert l3 <= r3 * (1 + 1e-9) + 1e-12

    @pytest.mark.parametrize("dim", [1, 2, 3])
    def test_quadratic_equality(self, dim, rng):
        for _ in range(20):
            oracle, lam, lam_p, x, y, xp, yp = quadratic_equality_instance(dim, rng)
            lhs, rhs = second_order_gap(oracle, lam, lam_p, x, y, xp, yp)
            assert lhs / rhs == pytest.approx(1.0, abs=1e-9)

    def test_linear_functions_have_zero_gap(self, rng):
        lin = random_cubic(2, rng, 1.0, degree=1).oracle()
        pts = rng.standard_normal((8, 2))
        assert second_order_gap(lin, 1.0, 2.0, pts[0], pts[1], pts[2], pts[3])[0] == pytest.approx(0, abs=1e-12)
        assert third_order_gap(lin, 1.0, 2.0, *pts) == pytest.approx((0.0, 0.0), abs=1e-12)

    @pytest.mark.parametrize("lam,lam_p", [(0.0, 1.0), (1.0, -1.0)])
    def test_rejects_non_positive_weights(self, lam, lam_p):
        with pytest.raises(InputError):
            second_order_gap(SINE, lam, lam_p, [0.0], [1.0], [0.0], [1.0])

    def test_suite_report(self):
        rep = verify_gap_inequalities(instances=100, seed=3, equality_instances=20)
        assert rep.passed
        assert rep.equality_max_deviation < 1e-9
        assert 0 < rep.worst_second_ratio <= 1.0
        assert rep.to_dict()["passed"] is True

    def test_suite_is_seeded(self):
        assert verify_gap_inequalities(50, seed=9).to_dict() == verify_gap_inequalities(50, seed=9).to_dict()


def test_oracle_falls_back_to_finite_differences():
    h = SmoothFunctionOracle(lambda x: np.sum(x**2, axis=-1))
    np.testing.assert_allclose(h.grad(np.array([1.0, -2.0])), [2.0, -4.0], rtol=1e-7)
    assert math.isinf(h.m1)


def test_cubic_oracle_carries_bounds():
    poly = CubicPolynomial(0.0, np.zeros(1), np.array([[2.0]]), np.array([[[6.0]]]), radius=1.0)
    h = poly.oracle()
    assert (h.m2, h.m3) == (8.0, 6.0)
    assert h(np.array([1.0])) == pytest.approx(2.0)
