import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from stein_gauge.errors import InputError
from stein_gauge.factors import (
    SmoothnessBudget,
    SteinFactors,
    TestFunctionBudget,
    classical_factors,
    factors_report,
    logistic_factors,
    solution_factor_bounds,
)
from stein_gauge.targets import GaussianTarget, LogisticTarget

ROOT3 = math.sqrt(3)


class TestClassicalFactors:
    def test_gaussian_unit(self):
        f = classical_factors(SmoothnessBudget(1.0))
        assert f.as_tuple() == pytest.approx((2.0, 1.0, 2 / 3), rel=1e-15)

    def test_unit_logistic_values(self, unit_logistic):
        f = classical_factors(unit_logistic.smoothness_constants())
        assert f.c1 == pytest.approx(2.0, abs=1e-12)
        assert f.c2 == pytest.approx(1.1924500, abs=1e-6)
        # 6 l3^2 + l4 + 3 l3 + 2/3 with l3 = 1/(6 sqrt 3), l4 = 1/8
        assert f.c3 == pytest.approx(1 / 18 + 1 / 8 + 1 / (2 * ROOT3) + 2 / 3, abs=1e-12)
        assert f.c3 == pytest.approx(1.1358974, abs=1e-6)

    def test_logistic_sigma2_two(self):
        t = LogisticTarget(sigma2=2.0, covariates=[[1.0]], labels=[0.0])
        f = classical_factors(t.smoothness_constants())
        assert f.as_tuple() == pytest.approx((4.0, 2 + 4 / (3 * ROOT3), 8 / 18 + 4 / 8 + 4 / (2 * ROOT3) + 4 / 3), rel=1e-12)
        assert f.c3 == pytest.approx(3.432479, abs=1e-6)

    @given(st.floats(0.05, 20), st.integers(1, 5), st.floats(0.1, 3))
    def test_closed_form_agrees_with_generic(self, sigma2, n, scale):
        t = LogisticTarget(sigma2=sigma2, covariates=[[scale * (i + 1), -scale] for i in range(n)], labels=[1.0] * n)
        generic = classical_factors(t.smoothness_constants())
        closed = logistic_factors(t)
        assert closed.as_tuple() == pytest.approx(generic.as_tuple(), rel=1e-10)

    def test_gaussian_target_has_no_higher_terms(self):
        f = classical_factors(GaussianTarget.isotropic(3, 4.0).smoothness_constants())
        assert f.as_tuple() == pytest.approx((0.5, 0.25, 1 / 6), rel=1e-15)


class TestSolutionBounds:
    def test_matches_factors_at_unit_budget(self):
        b = SmoothnessBudget(0.7, 0.3, 0.2)
        assert solution_factor_bounds(b, TestFunctionBudget()) == pytest.approx(classical_factors(b).as_tuple())

    @given(st.floats(0.1, 5), st.floats(0, 2), st.floats(0, 2), st.floats(0, 3), st.floats(0, 3), st.floats(0, 3))
    def test_linear_in_test_function_bounds(self, k, l3, l4, m1, m2, m3):
        b = SmoothnessBudget(k, l3, l4)
        one = solution_factor_bounds(b, TestFunctionBudget(m1, m2, m3))
        two = solution_factor_bounds(b, TestFunctionBudget(2 * m1, 2 * m2, 2 * m3))
        assert two == pytest.approx(tuple(2 * v for v in one), rel=1e-12, abs=1e-300)

    def test_first_factor_is_two_over_k(self):
        assert solution_factor_bounds(SmoothnessBudget(4.0), TestFunctionBudget(3.0, 0, 0))[0] == 1.5


class TestValidation:
    @pytest.mark.parametrize("args", [(0.0,), (-1.0,), (math.inf,), (1.0, -0.1), (1.0, 0.0, math.nan)])
    def test_budget(self, args):
        with pytest.raises(InputError):
            SmoothnessBudget(*args)

    def test_negative_factor(self):
        with pytest.raises(InputError):
            SteinFactors(1.0, -1.0, 1.0)

    def test_scaled_and_report(self):
        f = SteinFactors(1.0, 2.0, 3.0).scaled(2.0)
        assert f.as_tuple() == (2.0, 4.0, 6.0)
        rep = factors_report(SmoothnessBudget(1.0, 0.1, 0.2), f)
        assert set(rep) == {"c1", "c2", "c3", "k", "l3", "l4"}
