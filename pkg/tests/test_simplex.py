import numpy as np
import pytest

from stein_gauge.errors import InputError
from stein_gauge.simplex import INFEASIBLE, OPTIMAL, UNBOUNDED, dense_simplex, solve_lp


class TestDenseSimplex:
    def test_textbook_problem(self):
        # max 3x + 5y s.t. x <= 4, 2y <= 12, 3x + 2y <= 18
        res = dense_simplex([3, 5], [[1, 0], [0, 2], [3, 2]], [4, 12, 18])
        assert res.status == OPTIMAL
        assert res.value == pytest.approx(36.0)
        np.testing.assert_allclose(res.x, [2.0, 6.0])

    def test_negative_rhs_needs_phase_one(self):
        # max -x - y s.t. x + y >= 2
        res = dense_simplex([-1, -1], [[-1, -1]], [-2])
        assert res.status == OPTIMAL and res.value == pytest.approx(-2.0)

    def test_infeasible(self):
        assert dense_simplex([1.0], [[1.0], [-1.0]], [1.0, -2.0]).status == INFEASIBLE

    def test_unbounded(self):
        assert dense_simplex([1.0, 0.0], [[0.0, 1.0]], [1.0]).status == UNBOUNDED

    def test_cycling_example_terminates(self):
        # Beale's example cycles under the plain largest-coefficient rule
        c = [0.75, -150, 0.02, -6]
        a = [[0.25, -60, -0.04, 9], [0.5, -90, -0.02, 3], [0, 0, 1, 0]]
        res = dense_simplex(c, a, [0, 0, 1], bland_after=1)
        assert res.status == OPTIMAL and res.value == pytest.approx(0.05)

    def test_dimension_check(self):
        with pytest.raises(InputError):
            dense_simplex([1.0, 2.0], [[1.0]], [1.0])


class TestSolveLp:
    @pytest.mark.parametrize("seed", range(10))
    def test_matches_highs_on_random_boxes(self, seed):
        rng = np.random.default_rng(seed)
        n, m = 6, 8
        c = rng.standard_normal(n)
        a = rng.standard_normal((m, n))
        b = rng.uniform(0.5, 2.0, m)
        lo, hi = -rng.uniform(0.5, 2, n), rng.uniform(0.5, 2, n)
        lo[0] = -np.inf
        s = solve_lp(c, a, b, lo, hi, backend="simplex")
        h = solve_lp(c, a, b, lo, hi, backend="highs")
        assert s.status == h.status == OPTIMAL
        assert s.value == pytest.approx(h.value, abs=1e-8)
        assert np.all(a @ s.x <= b + 1e-8)

    def test_free_variables(self):
        res = solve_lp([1.0, 1.0], [[1.0, 0.0], [0.0, 1.0], [-1.0, -1.0]], [1.0, 2.0, 5.0], backend="simplex")
        assert res.value == pytest.approx(3.0)

    def test_unknown_backend(self):
        with pytest.raises(InputError):
            solve_lp([1.0], [[1.0]], [1.0], backend="glpk")
