import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qzeno import ModelParams, NoiseCovariance, build_liouvillian, propagate_bloch, survival_closed_form
from qzeno.errors import FactorizationFailure, StepTooLarge, ValidationError, ZeroProbabilityBranch
from qzeno.operators import density_from_bloch, bloch_from_density, kraus_operators
from qzeno.trajectory import (
    TrajectoryConfig,
    measurement_step,
    noise_factor,
    run_ensemble,
    run_trajectory,
    sample_noise_increment,
    tree_sum,
    unitary_step,
)

from ._discrete import discrete_mean
from .conftest import REF, random_gamma


class TestNoise:
    def test_zero(self):
        xi = sample_noise_increment(NoiseCovariance(), 1e-3, rng=0, size=100)
        np.testing.assert_array_equal(xi, 0.0)

    def test_single_axis_variance(self):
        xi = sample_noise_increment(NoiseCovariance.diagonal(0, 0, 1.0), 1e-3, rng=1, size=100_000)
        assert np.var(xi[:, 2]) == pytest.approx(1e3, rel=0.05)
        np.testing.assert_array_equal(xi[:, :2], 0.0)

    def test_reference_cross_covariance(self):
        xi = sample_noise_increment(REF, 1e-3, rng=2, size=100_000)
        cov = np.cov(xi.T)
        assert cov[1, 2] == pytest.approx(0.3e3, rel=0.05)
        np.testing.assert_allclose(np.diag(cov), [50, 100, 1000], rtol=0.05)

    def test_single_draw_shape(self):
        assert sample_noise_increment(REF, 1e-3, rng=3).shape == (3,)

    def test_factor_rank_deficient(self):
        for g in (NoiseCovariance.diagonal(0.0, 0.5, 0.0), NoiseCovariance(g22=1.0, g33=1.0, g23=1.0)):
            c = noise_factor(g)
            np.testing.assert_allclose(c @ c.T, g.matrix(), atol=1e-14)

    def test_factor_random(self):
        rng = np.random.default_rng(0)
        for _ in range(200):
            g = random_gamma(rng, decoupled=False)
            c = noise_factor(g)
            np.testing.assert_allclose(c @ c.T, g.matrix(), atol=1e-13)

    def test_factor_rejects_indefinite(self):
        # validation bypassed on purpose
        bad = object.__new__(NoiseCovariance)
        for name, v in dict(g11=0.0, g22=0.1, g33=1.0, g12=0.0, g13=0.0, g23=0.9).items():
            object.__setattr__(bad, name, v)
        with pytest.raises(FactorizationFailure):
            noise_factor(bad)


class TestSteps:
    def test_quarter_turn(self):
        np.testing.assert_allclose(unitary_step([0, 0, 1], 1.0, [0, 0, 0], math.pi / 4), [0, -1, 0], atol=1e-15)

    def test_no_drive(self):
        s = np.array([0.1, 0.2, 0.3])
        np.testing.assert_array_equal(unitary_step(s, 0.0, [0, 0, 0], 0.5), s)

    def test_axis_parallel(self):
        np.testing.assert_allclose(unitary_step([1, 0, 0], 0.7, [2.5, 0, 0], 0.3), [1, 0, 0], atol=1e-15)

    @given(
        st.lists(st.floats(-1, 1), min_size=3, max_size=3),
        st.lists(st.floats(-50, 50), min_size=3, max_size=3),
        st.floats(0.01, 3),
        st.floats(0, 0.1),
    )
    @settings(max_examples=200)
    def test_matches_unitary_conjugation(self, s, xi, omega, dt):
        from qzeno.operators import PAULIS

        s = np.asarray(s) / max(1.0, np.linalg.norm(s))
        n = np.array([omega, 0, 0]) + np.asarray(xi)
        h = sum(c * p() for c, p in zip(n, PAULIS))
        w, v = np.linalg.eigh(h)
        u = (v * np.exp(-1j * w * dt)) @ v.conj().T
        rho = u @ density_from_bloch(s) @ u.conj().T
        out = unitary_step(s, omega, xi, dt)
        np.testing.assert_allclose(out, bloch_from_density(rho), atol=1e-12)
        assert np.linalg.norm(out) == pytest.approx(np.linalg.norm(s), abs=1e-12)

    def test_ground_state_never_clicks(self):
        rng = np.random.default_rng(0)
        for _ in range(100):
            s, r = measurement_step([0, 0, 1], 1.2, rng)
            assert r == 0
            np.testing.assert_allclose(s, [0, 0, 1])

    def test_excited_state(self):
        theta = 0.4
        rng = np.random.default_rng(1)
        results = [measurement_step([0, 0, -1], theta, rng) for _ in range(20000)]
        clicks = np.mean([r for _, r in results])
        assert clicks == pytest.approx(math.sin(theta) ** 2, abs=4 * math.sqrt(0.15 * 0.85 / 20000))
        for s, _ in results[:50]:
            np.testing.assert_allclose(s, [0, 0, -1], atol=1e-15)

    def test_projective_limit(self):
        rng = np.random.default_rng(2)
        s0 = np.array([0.6, 0.0, 0.8])
        out = [measurement_step(s0, math.pi / 2, rng) for _ in range(20000)]
        frac = np.mean([r for _, r in out])
        assert frac == pytest.approx(0.1, abs=4 * math.sqrt(0.09 / 20000))
        for s, r in out[:50]:
            np.testing.assert_allclose(s, [0, 0, -1] if r else [0, 0, 1], atol=1e-12)

    def test_zero_probability_branch_guard(self):
        class Always:
            def random(self):
                return 0.0

        with pytest.raises(ZeroProbabilityBranch):
            measurement_step([0, 0, 1 - 2**-52], math.pi / 2, Always())

    @given(st.floats(0, math.pi / 2), st.floats(0, math.pi), st.floats(0, 2 * math.pi))
    @settings(max_examples=200)
    def test_post_state_matches_kraus(self, theta, pol, azi):
        s = np.array([math.sin(pol) * math.cos(azi), math.sin(pol) * math.sin(azi), math.cos(pol)])
        k = kraus_operators(theta)
        rho = density_from_bloch(s)
        p1 = np.trace(k.m1 @ rho @ k.m1.conj().T).real
        for r, m in enumerate((k.m0, k.m1)):
            pr = np.trace(m @ rho @ m.conj().T).real
            if pr < 1e-9:
                continue
            # readout 1 iff u < p1
            u = p1 / 2 if r else p1 + (1 - p1) / 2

            class Fixed:
                def random(self, u=u):
                    return u

            out, got = measurement_step(s, theta, Fixed())
            assert got == r
            np.testing.assert_allclose(out, bloch_from_density(m @ rho @ m.conj().T / pr), atol=1e-9)
            assert np.linalg.norm(out) == pytest.approx(1.0, abs=1e-9)


class TestConfig:
    def test_defaults(self):
        cfg = TrajectoryConfig(dt=1e-3, t_max=10.0)
        assert cfg.n_steps == 10000
        assert cfg.t_grid.size <= 2000
        assert cfg.t_grid[-1] == pytest.approx(10.0)

    def test_stride_without_divisor(self):
        cfg = TrajectoryConfig(dt=1.0, t_max=10007.0)  # prime step count
        assert cfg.stride == 6 and cfg.t_grid.size <= 2000

    def test_step_guard(self):
        with pytest.raises(StepTooLarge):
            run_ensemble(ModelParams(1.0, 20.0), TrajectoryConfig(dt=1e-3, t_max=1.0))

    @pytest.mark.parametrize(
        "kwargs", [dict(dt=0.0, t_max=1.0), dict(dt=1e-3, t_max=-1.0), dict(dt=1e-3, t_max=1.0, n_traj=0)]
    )
    def test_invalid(self, kwargs):
        with pytest.raises(ValidationError):
            TrajectoryConfig(**kwargs)


class TestTrajectory:
    def test_rabi(self):
        cfg = TrajectoryConfig(dt=1e-3, t_max=10.0, record_stride=10)
        tr = run_trajectory(ModelParams(1.0, 0.0), cfg)
        np.testing.assert_allclose(tr.states[:, 2], np.cos(2 * tr.t_grid), atol=1e-9)

    def test_purity(self):
        rng = np.random.default_rng(3)
        for i in range(10):
            p = ModelParams(1.0, rng.uniform(0, 10), random_gamma(rng, scale=2.0, decoupled=False))
            tr = run_trajectory(p, TrajectoryConfig(dt=1e-3, t_max=5.0, master_seed=i))
            np.testing.assert_allclose(np.linalg.norm(tr.states, axis=1), 1.0, atol=1e-8)

    def test_readouts(self):
        cfg = TrajectoryConfig(dt=1e-3, t_max=2.0, record_stride=1)
        tr = run_trajectory(ModelParams(1.0, 8.0), cfg, traj_index=5, return_readouts=True)
        assert tr.readouts.shape == (cfg.n_steps,)
        assert set(np.unique(tr.readouts)) <= {0, 1}
        # after a click the state sits at |1>
        idx = np.flatnonzero(tr.readouts)
        np.testing.assert_allclose(tr.states[idx + 1], [[0, 0, -1]] * idx.size)
        assert run_trajectory(ModelParams(1.0, 8.0), cfg).readouts is None

    def test_index_selects_stream(self):
        p = ModelParams(1.0, 8.0, REF)
        cfg = TrajectoryConfig(dt=1e-3, t_max=1.0, master_seed=9)
        a = run_trajectory(p, cfg, traj_index=3).states
        b = run_trajectory(p, cfg, traj_index=3).states
        c = run_trajectory(p, cfg, traj_index=4).states
        np.testing.assert_array_equal(a, b)
        assert not np.array_equal(a, c)

    def test_dephasing_only(self):
        """alpha = 0, noise on z: ensemble mean follows the averaged master equation."""
        g = NoiseCovariance.diagonal(0, 0, 0.3)
        p = ModelParams(1.0, 0.0, g)
        cfg = TrajectoryConfig(dt=1e-3, t_max=6.0, n_traj=4000, record_stride=50)
        res = run_ensemble(p, cfg)
        exact = (1 + propagate_bloch(build_liouvillian(p), t=res.t_grid)[:, 2]) / 2
        assert np.all(np.abs(res.p_mean - exact) <= np.maximum(5 * res.p_stderr, 0.01))


class TestEnsemble:
    def test_deterministic_single(self):
        cfg = TrajectoryConfig(dt=1e-3, t_max=5.0, n_traj=1, record_stride=10)
        res = run_ensemble(ModelParams(1.0, 0.0), cfg)
        np.testing.assert_allclose(res.p_mean, np.cos(res.t_grid) ** 2, atol=1e-9)
        np.testing.assert_array_equal(res.p_stderr, 0.0)

    def test_shapes_and_ranges(self):
        res = run_ensemble(ModelParams(1.0, 5.0, REF), TrajectoryConfig(dt=1e-3, t_max=2.0, n_traj=100))
        assert res.t_grid.shape == res.p_mean.shape == res.p_stderr.shape
        assert np.all((res.p_mean >= 0) & (res.p_mean <= 1))
        assert np.all(res.p_stderr >= 0)
        assert res.n_traj == 100 and res.master_seed == 42

    def test_noiseless_exceptional_point(self):
        p = ModelParams(1.0, 8.0)
        res = run_ensemble(p, TrajectoryConfig(dt=1e-3, t_max=5.0, n_traj=10_000, record_stride=50))
        exact = survival_closed_form(p, res.t_grid, "noiseless")
        assert np.all(np.abs(res.p_mean - exact) <= np.maximum(5 * res.p_stderr, 0.01))

    def test_thread_count_independent(self):
        p = ModelParams(1.0, 8.5, REF)
        cfg = TrajectoryConfig(dt=1e-3, t_max=1.0, n_traj=300, record_stride=20)
        a = run_ensemble(p, cfg, threads=1)
        b = run_ensemble(p, cfg, threads=None)
        c = run_ensemble(p, cfg, block=64)
        for r in (b, c):
            np.testing.assert_array_equal(a.p_mean, r.p_mean)
            np.testing.assert_array_equal(a.p_stderr, r.p_stderr)

    def test_seed_changes_result(self):
        p = ModelParams(1.0, 8.5, REF)
        a = run_ensemble(p, TrajectoryConfig(dt=1e-3, t_max=1.0, n_traj=50, master_seed=1))
        b = run_ensemble(p, TrajectoryConfig(dt=1e-3, t_max=1.0, n_traj=50, master_seed=2))
        assert not np.array_equal(a.p_mean, b.p_mean)

    def test_tree_sum_fixed_order(self):
        rows = np.random.default_rng(0).normal(size=(7, 4))
        expected = ((rows[0] + rows[1]) + (rows[2] + rows[3])) + ((rows[4] + rows[5]) + (rows[6] + 0.0))
        np.testing.assert_array_equal(tree_sum(rows), expected)

    def test_stderr_formula(self):
        p = ModelParams(1.0, 8.5, REF)
        cfg = TrajectoryConfig(dt=1e-3, t_max=0.5, n_traj=7, record_stride=50)
        res = run_ensemble(p, cfg)
        z = np.array([run_trajectory(p, cfg, traj_index=i).states[:, 2] for i in range(7)])
        pr = 0.5 * (1 + z)
        np.testing.assert_allclose(res.p_mean, pr.mean(axis=0), atol=1e-14)
        np.testing.assert_allclose(res.p_stderr, pr.std(axis=0, ddof=1) / math.sqrt(7), atol=1e-9)

    def test_sampling_matches_discrete_mean(self):
        p = ModelParams(1.0, 8.5, REF)
        cfg = TrajectoryConfig(dt=1e-3, t_max=4.0, n_traj=5000, master_seed=3, record_stride=40)
        res = run_ensemble(p, cfg)
        ref = discrete_mean(p, cfg.dt, cfg.n_steps, cfg.stride)
        inside = np.abs(res.p_mean - ref) <= 5 * res.p_stderr + 1e-12
        assert inside.mean() >= 0.99

    def test_dt_bias_is_first_order(self):
        p = ModelParams(1.0, 8.5, REF)
        gaps = []
        for dt in (1e-3, 5e-4):
            stride = int(round(0.05 / dt))
            ref = discrete_mean(p, dt, int(round(10 / dt)), stride)
            t = np.arange(ref.size) * stride * dt
            gaps.append(np.max(np.abs(ref - survival_closed_form(p, t, "full"))))
        assert gaps[0] / gaps[1] == pytest.approx(2, rel=0.5)

    @pytest.mark.slow
    def test_residual_scales_inverse_sqrt(self):
        p = ModelParams(1.0, 1.0, REF)
        ref = discrete_mean(p, 0.01, 1000, 10)
        rms, band = [], []
        for n in (500, 2000):
            runs = [run_ensemble(p, TrajectoryConfig(0.01, 10.0, n, seed, 10)) for seed in range(32)]
            rms.append(np.sqrt(np.mean([(r.p_mean - ref) ** 2 for r in runs])))
            band.append(np.mean([r.p_stderr for r in runs]))
        assert rms[0] / rms[1] == pytest.approx(2, rel=0.3)
        assert band[0] / band[1] == pytest.approx(2, rel=0.3)
