import math

import numpy as np
import pytest

from stein_gauge.errors import ConfigError, InputError, NumericError
from stein_gauge.langevin import (
    CouplingGeometry,
    DiffusionConfig,
    check_contract,
    check_function_contract,
    compute_growth_factors,
    contract_envelope,
    default_workers,
    em_step,
    estimate_u_h,
    geometric_grid,
    run_coupled,
    simulate,
    truncation_bound,
    verify_coupling,
)
from stein_gauge.oracles import SmoothFunctionOracle
from stein_gauge.targets import GaussianTarget

SINE = SmoothFunctionOracle(lambda x: np.sin(x[..., 0]), None, 1.0, 1.0, 1.0, "sin")
IDENTITY = SmoothFunctionOracle(lambda x: x[..., 0], lambda x: np.ones_like(x), 1.0, 0.0, 0.0, "x")


def geometry(d=1, x=-1.0, xp=0.5, eps=0.05, ep=0.05, es=0.1):
    e1 = np.eye(d)[0]
    return CouplingGeometry(x * e1, xp * e1, e1, e1, eps, ep, es)


class TestConfig:
    def test_unstable_step_rejected(self):
        with pytest.raises(ConfigError):
            DiffusionConfig(dt=1.0).validate(2.0)

    @pytest.mark.parametrize("kw", [{"dt": 0.0}, {"dt": 2.0, "horizon": 1.0}, {"replicas": 0}, {"seed": -1}])
    def test_invalid(self, kw):
        with pytest.raises(ConfigError):
            DiffusionConfig(**kw).validate(1.0)

    def test_for_target(self):
        c = DiffusionConfig.for_target(GaussianTarget.isotropic(1, 2.0))
        assert (c.dt, c.horizon, c.n_steps) == (5e-4, 10.0, 20000)

    def test_thread_env(self, monkeypatch):
        monkeypatch.setenv("STEIN_GAUGE_THREADS", "3")
        assert default_workers() == 3
        monkeypatch.setenv("STEIN_GAUGE_THREADS", "junk")
        assert default_workers() == 1

    def test_grid(self):
        np.testing.assert_array_equal(geometric_grid(10), [0, 1, 2, 4, 8, 10])


class TestSimulation:
    def test_em_step(self, std_normal):
        out = em_step(std_normal, np.array([2.0]), 0.1, np.array([0.3]))
        assert out == pytest.approx([2.0 - 0.1 + 0.3])

    def test_em_step_non_finite(self, std_normal):
        with pytest.raises(NumericError):
            em_step(std_normal, np.array([np.inf]), 0.1, np.zeros(1))

    def test_seed_replay_is_bit_identical(self, unit_logistic):
        cfg = DiffusionConfig(dt=1e-2, horizon=1.0, seed=7, replicas=20)
        a = simulate(unit_logistic, [[0.0]], [[[0.1]]], cfg)
        b = simulate(unit_logistic, [[0.0]], [[[0.1]]], cfg)
        assert np.array_equal(a.anchors, b.anchors) and np.array_equal(a.offsets, b.offsets)

    def test_worker_split_does_not_change_paths(self, unit_logistic):
        # block sizes change the noise chunking as well as the threading
        base = DiffusionConfig(dt=1e-2, horizon=2.0, seed=1, replicas=9, workers=1)
        split = DiffusionConfig(dt=1e-2, horizon=2.0, seed=1, replicas=9, workers=4)
        a = simulate(unit_logistic, [[0.0]], [[[0.1]]], base)
        b = simulate(unit_logistic, [[0.0]], [[[0.1]]], split)
        assert np.array_equal(a.anchors, b.anchors) and np.array_equal(a.offsets, b.offsets)

    def test_different_seeds_differ(self, std_normal):
        a = simulate(std_normal, [[0.0]], [[[0.1]]], DiffusionConfig(dt=1e-2, horizon=1.0, seed=1, replicas=2))
        b = simulate(std_normal, [[0.0]], [[[0.1]]], DiffusionConfig(dt=1e-2, horizon=1.0, seed=2, replicas=2))
        assert not np.array_equal(a.anchors, b.anchors)

    def test_stationary_variance(self, std_normal):
        cfg = DiffusionConfig(dt=1e-2, horizon=10.0, seed=0, replicas=4000)
        res = simulate(std_normal, [[3.0]], np.zeros((1, 0, 1)), cfg)
        final = res.anchors[:, 0, -1, 0]
        assert final.mean() == pytest.approx(0.0, abs=0.06)
        assert final.var() == pytest.approx(1.0, abs=0.07)

    def test_offsets_match_direct_differences(self, unit_logistic):
        cfg = DiffusionConfig(dt=1e-2, horizon=2.0, seed=4, replicas=3)
        joint = simulate(unit_logistic, [[0.0]], [[[0.3]]], cfg)
        alone = simulate(unit_logistic, [[0.3]], np.zeros((1, 0, 1)), cfg)
        np.testing.assert_allclose(joint.positions()[:, 0, 1], alone.anchors[:, 0], atol=1e-12)

    def test_shape_validation(self, std_normal):
        with pytest.raises(InputError):
            simulate(std_normal, [[0.0, 0.0]], [[[0.1, 0.1]]], DiffusionConfig(replicas=1, horizon=0.01))


class TestGaussianContraction:
    @pytest.mark.parametrize("k", [0.5, 1.0, 2.0])
    @pytest.mark.parametrize("eps", [0.01, 0.1])
    def test_exact_recursion_and_contract1(self, k, eps):
        target = GaussianTarget.isotropic(1, k)
        cfg = DiffusionConfig(dt=1e-3, horizon=2.0, seed=0, replicas=5)
        ens, diffs = run_coupled(target, cfg, geometry(eps=eps))
        measured = np.abs(diffs.dz_series[..., 0])
        exact = eps * (1 - cfg.dt * k / 2) ** ens.result.steps
        np.testing.assert_allclose(measured, np.broadcast_to(exact, measured.shape), rtol=1e-12, atol=0)
        rep = check_contract(1, ens, diffs, target.smoothness_constants(), slack=0.0)
        assert rep.pass_fraction == 1.0 and rep.max_ratio <= 1.0

    def test_higher_differences_vanish(self):
        target = GaussianTarget.isotropic(2, 1.0)
        ens, diffs = run_coupled(target, DiffusionConfig(dt=1e-2, horizon=1.0, replicas=4), geometry(d=2))
        assert np.max(np.abs(diffs.v_series)) < 1e-12
        assert np.max(np.abs(diffs.u_series)) < 1e-9


class TestLogisticContracts:
    @pytest.mark.parametrize(
        "geo",
        [geometry(), geometry(x=0.0, xp=0.0, ep=0.05, es=0.2), geometry(x=1.5, xp=-0.5, eps=0.1, ep=0.02, es=0.08)],
    )
    def test_envelopes(self, unit_logistic, geo):
        cfg = DiffusionConfig(dt=1e-3, horizon=4.0, seed=5, replicas=200)
        reps = verify_coupling(unit_logistic, geo, cfg, functions={2: SINE, 3: SINE})
        for rep in reps.values():
            assert rep.passed, rep.summary()
        # the second-order process is not trivially zero for these geometries
        assert np.max(reps["contract2"].measured) > 1e-4

    def test_rows_and_summary(self, unit_logistic):
        cfg = DiffusionConfig(dt=1e-2, horizon=1.0, seed=0, replicas=10)
        ens, diffs = run_coupled(unit_logistic, cfg, geometry())
        rep = check_contract(2, ens, diffs, unit_logistic.smoothness_constants())
        rows = rep.rows()
        assert len(rows) == len(ens.times) and rows[0][0] == 0.0
        assert rep.summary()["slack"] == pytest.approx(5 * 1e-2)

    def test_trajectories_layout(self, unit_logistic):
        geo = geometry()
        cfg = DiffusionConfig(dt=1e-2, horizon=0.1, replicas=2)
        ens, _ = run_coupled(unit_logistic, cfg, geo)
        np.testing.assert_allclose(ens.trajectories[0, :, 0], geo.starts(), atol=1e-15)

    def test_function_contract_with_gaussian(self):
        target = GaussianTarget.isotropic(1, 1.0)
        ens, _ = run_coupled(target, DiffusionConfig(dt=1e-3, horizon=3.0, replicas=100), geometry())
        for order in (2, 3):
            assert check_function_contract(order, SINE, ens, target.smoothness_constants()).passed


class TestEnvelopes:
    def test_growth_factors(self):
        gf = compute_growth_factors([0.0], [1.0], 0.1, 0.2, 0.4)
        tail = 3 + 0.25 + 0.5
        assert gf.f1 == pytest.approx(1 + 0.3 + 0.1 * (tail + 5) / 3)
        assert gf.f2 == pytest.approx(1 + 0.9 + 0.1 * tail / 3)

    def test_envelope_decay(self, unit_logistic):
        b = unit_logistic.smoothness_constants()
        env = contract_envelope(2, b, geometry(), [0.0, 2.0])
        assert env[1] / env[0] == pytest.approx(math.exp(-1.0))

    def test_geometry_validation(self):
        with pytest.raises(InputError):
            CouplingGeometry([0.0], [1.0], [2.0], [1.0], 0.1, 0.1, 0.1)
        with pytest.raises(InputError):
            CouplingGeometry([0.0], [1.0], [1.0], [1.0], 0.0, 0.1, 0.1)
        with pytest.raises(InputError):
            compute_growth_factors([0.0], [1.0], -0.1, 0.1, 0.1)


class TestSteinSolution:
    def test_linear_gaussian_matches_discrete_solution(self, std_normal):
        cfg = DiffusionConfig(dt=1e-3, horizon=20.0, seed=0, replicas=8)
        est = estimate_u_h(std_normal, IDENTITY, [1.0], cfg)
        # the gap h(Z^y) - h(Z^x) shrinks by (1 - dt/2) each step
        exact = -2.0 * (1 - (1 - cfg.dt / 2) ** cfg.n_steps)
        assert est.value == pytest.approx(exact, abs=1e-10)
        assert est.stderr < 1e-12

    def test_equal_points_give_zero(self, unit_logistic):
        cfg = DiffusionConfig(dt=1e-2, horizon=1.0, replicas=5)
        assert estimate_u_h(unit_logistic, SINE, [0.4], cfg, y=[0.4]).value == 0.0

    def test_truncation_tolerance(self, std_normal):
        cfg = DiffusionConfig(dt=1e-2, horizon=1.0, replicas=5)
        with pytest.raises(ConfigError):
            estimate_u_h(std_normal, IDENTITY, [1.0], cfg, tol=1e-3)

    def test_truncation_bound(self):
        assert truncation_bound(1.0, 1.0, 2.0, 20.0) == pytest.approx(4 * math.exp(-10))
        assert truncation_bound(1.0, 1.0, 0.0, 1.0) == 0.0

    def test_quadratic_is_approximately_minus_one(self, std_normal):
        # u_h solves u'' - x u' = 2 (x^2 - 1) for h = x^2, so u = -x^2 and u(1) - u(0) = -1
        h = SmoothFunctionOracle(lambda x: x[..., 0] ** 2, m1=math.inf)
        cfg = DiffusionConfig(dt=1e-2, horizon=20.0, seed=3, replicas=4000)
        est = estimate_u_h(std_normal, h, [1.0], cfg)
        assert est.value == pytest.approx(-1.0, abs=4 * est.stderr + 0.02)
