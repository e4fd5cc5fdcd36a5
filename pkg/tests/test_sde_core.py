#!/usr/bin/env python3
"""
Simulation tests for autosde.

Tests the slow-fast system bundle, the Euler-Maruyama step and integrators,
seeded ensembles, blow-up handling and coarse-graining.

Author: F. Herbrand
License: MIT
"""

import numpy as np
import pytest


class TestSystems:
    """Test the system bundle and the built-in benchmark systems."""

    def test_parabolic_drift_and_noise_scale(self, parabolic) -> None:
        z = np.array([2.0, 3.0])
        drift = parabolic.drift(z)
        # f = x (1 - y), g = -(y - x^2/4) / epsilon
        assert drift[0] == pytest.approx(2.0 * (1.0 - 3.0))
        assert drift[1] == pytest.approx(-(3.0 - 1.0) / 0.01)
        assert np.allclose(parabolic.noise_scale, [1.0, 0.1 / np.sqrt(0.01)])
        print(f"✅ parabolic drift {drift}, noise scale {parabolic.noise_scale}")

    def test_analytic_manifolds_are_equilibria_of_fast_drift(self, parabolic, saddle) -> None:
        from autosde.sde_core import parabolic_manifold, saddle_manifold

        x = np.linspace(-3.0, 3.0, 7)[:, None]
        assert np.allclose(parabolic.drift_fast(x, parabolic_manifold(x)), 0.0)
        x2 = np.random.default_rng(0).uniform(-2.0, 2.0, size=(10, 2))
        assert np.allclose(saddle.drift_fast(x2, saddle_manifold(x2)), 0.0)
        print("✅ g(x, h(x)) = 0 on both analytic manifolds")

    def test_batched_drift_shapes(self, saddle) -> None:
        z = np.ones((5, 3))
        assert saddle.drift(z).shape == (5, 3)
        assert saddle.slow_dims == (0, 1)
        assert saddle.fast_dims == (2,)

    def test_invalid_systems_rejected(self) -> None:
        from autosde.sde_core import SlowFastSystem, parabolic_system

        with pytest.raises(ValueError, match="epsilon"):
            parabolic_system(epsilon=0.0)
        with pytest.raises(ValueError, match="nonnegative"):
            parabolic_system(sigma_slow=-1.0)
        with pytest.raises(ValueError, match="drift_slow returned shape"):
            SlowFastSystem(1, 1, 0.1, lambda x, y: np.zeros(2), lambda x, y: -y, [1.0], [1.0])
        print("✅ Invalid system definitions rejected")

    def test_polynomial_system_matches_builtin(self, parabolic) -> None:
        from autosde.sde_core import polynomial_system

        custom = polynomial_system(
            1, 1, 0.01,
            drift_slow=[[(1.0, (1, 0)), (-1.0, (1, 1))]],
            drift_fast=[[(-1.0, (0, 1)), (0.25, (2, 0))]],
            sigma_slow=[1.0], sigma_fast=[0.1],
        )
        z = np.random.default_rng(1).normal(size=(20, 2))
        assert np.allclose(custom.drift(z), parabolic.drift(z))

    def test_polynomial_exponent_length_checked(self) -> None:
        from autosde.sde_core import polynomial_system

        with pytest.raises(ValueError, match="exponent vector"):
            polynomial_system(1, 1, 0.1, [[(1.0, (1,))]], [[(-1.0, (0, 1))]], [1.0], [1.0])

    def test_stability_matrix_negative_on_manifold(self, parabolic, saddle) -> None:
        from autosde.sde_core import parabolic_manifold, saddle_manifold, stability_matrix

        a = stability_matrix(parabolic, [1.5], parabolic_manifold)
        assert a.shape == (1, 1)
        assert a[0, 0] == pytest.approx(-1.0, abs=1e-6)
        b = stability_matrix(saddle, [0.3, -0.7], saddle_manifold)
        assert b[0, 0] == pytest.approx(-1.0, abs=1e-6)


class TestEulerMaruyama:
    """Test the single step and the batched integrator."""

    def test_hand_computed_step(self, parabolic) -> None:
        from autosde.sde_core import euler_maruyama_step

        # At (2, 1) both drifts vanish, so only the noise moves the state.
        new = euler_maruyama_step(parabolic, np.array([2.0, 1.0]), 0.001, np.array([0.5, -0.3]))
        expected = np.array([2.0 + 0.5 * np.sqrt(0.001), 1.0 - 0.3 * np.sqrt(0.001)])
        assert np.allclose(new, expected, rtol=0, atol=1e-12)
        print(f"✅ One step: {new}")

    def test_zero_noise_is_explicit_euler(self, parabolic) -> None:
        from autosde.sde_core import euler_maruyama_step

        z = np.array([1.0, 2.0])
        new = euler_maruyama_step(parabolic, z, 0.001, np.zeros(2))
        assert np.allclose(new, z + 0.001 * parabolic.drift(z))

    def test_step_rejects_bad_input(self, parabolic) -> None:
        from autosde.errors import IntegrationBlowupError
        from autosde.sde_core import euler_maruyama_step

        with pytest.raises(ValueError, match="dt must be positive"):
            euler_maruyama_step(parabolic, np.zeros(2), 0.0, np.zeros(2))
        with pytest.raises(ValueError):
            euler_maruyama_step(parabolic, np.zeros(2), 0.01, np.zeros(3))
        with pytest.raises(IntegrationBlowupError):
            euler_maruyama_step(parabolic, np.array([np.nan, 0.0]), 0.01, np.zeros(2))

    def test_blowup_raises_with_state(self, parabolic) -> None:
        from autosde.errors import IntegrationBlowupError
        from autosde.sde_core import euler_maruyama_step

        with pytest.raises(IntegrationBlowupError) as excinfo:
            euler_maruyama_step(parabolic, np.array([1e7, 0.0]), 0.1, np.zeros(2))
        assert excinfo.value.state is not None
        assert isinstance(excinfo.value, ArithmeticError)
        print(f"✅ Blow-up reported: {excinfo.value}")

    def test_substeps_refine_the_grid(self, parabolic) -> None:
        from autosde.sde_core import integrate

        z0 = np.array([[1.0, 0.5]])
        noise = np.zeros((1, 40, 2))
        fine, _ = integrate(parabolic, z0, 0.01, 10, noise, substeps=4)
        assert fine.shape == (1, 11, 2)
        coarse, _ = integrate(parabolic, z0, 0.0025, 40, noise, substeps=1)
        assert np.allclose(fine[0], coarse[0, ::4])


def _ou_system(sigma=1.0):
    """dx = -x dt + sigma dW with a passive fast coordinate that stays at zero."""
    from autosde.sde_core import polynomial_system

    return polynomial_system(
        1, 1, 1.0,
        drift_slow=[[(-1.0, (1, 0))]],
        drift_fast=[[(-1.0, (0, 1))]],
        sigma_slow=[sigma], sigma_fast=[0.0],
    )


class TestOrnsteinUhlenbeck:
    """Test integrator statistics against the analytic OU process."""

    @pytest.fixture(scope="class")
    def ou_ensemble(self):
        from autosde.sde_core import InitSampler, simulate_ensemble

        return simulate_ensemble(_ou_system(), InitSampler.fixed([1.0, 0.0]), 10000, 0.01, 100, seed=99)

    def test_mean_at_unit_time(self, ou_ensemble) -> None:
        x = ou_ensemble.states[:, -1, 0]
        assert abs(x.mean() - np.exp(-1.0)) < 3.0 * x.std(ddof=1) / 100.0
        print(f"✅ OU mean {x.mean():.4f} vs {np.exp(-1.0):.4f}")

    def test_variance_at_unit_time(self, ou_ensemble) -> None:
        x = ou_ensemble.states[:, -1, 0]
        exact = (1.0 - np.exp(-2.0)) / 2.0
        variance = x.var(ddof=1)
        standard_error = variance * np.sqrt(2.0 / (x.size - 1))
        assert abs(variance - exact) < 4.0 * standard_error
        assert np.all(ou_ensemble.states[:, :, 1] == 0.0)
        print(f"✅ OU variance {variance:.4f} vs {exact:.4f}")

    def test_zero_noise_matches_exponential(self) -> None:
        from autosde.sde_core import simulate_trajectory

        path = simulate_trajectory(_ou_system(sigma=0.0), [1.0, 0.0], 1e-3, 1000, np.random.default_rng(0))
        assert abs(path.states[-1, 0] - np.exp(-1.0)) < 0.01
        assert path.states[-1, 0] == pytest.approx((1.0 - 1e-3) ** 1000, rel=1e-12)


class TestEnsembles:
    """Test seeded ensembles."""

    def test_shape_and_time_grid(self, parabolic_ensemble) -> None:
        assert parabolic_ensemble.states.shape == (1200, 11, 2)
        assert parabolic_ensemble.n_steps == 10
        assert np.allclose(parabolic_ensemble.times, 0.001 * np.arange(11))
        assert parabolic_ensemble.slow_dim == 1
        assert parabolic_ensemble.dropped == ()

    def test_initial_conditions_inside_box(self, parabolic_ensemble) -> None:
        first = parabolic_ensemble.states[:, 0]
        assert np.all(np.abs(first[:, 0]) <= 5.0)
        assert np.all(np.abs(first[:, 1]) <= 6.0)

    def test_same_seed_bitwise_identical(self, parabolic) -> None:
        from autosde.sde_core import InitSampler, simulate_ensemble

        sampler = InitSampler(((-1.0, 1.0), (-1.0, 1.0)))
        a = simulate_ensemble(parabolic, sampler, 50, 0.001, 5, seed=99)
        b = simulate_ensemble(parabolic, sampler, 50, 0.001, 5, seed=99)
        c = simulate_ensemble(parabolic, sampler, 50, 0.001, 5, seed=100)
        assert np.array_equal(a.states, b.states)
        assert not np.array_equal(a.states, c.states)
        print("✅ Ensembles reproducible from the seed")

    def test_blocking_does_not_change_results(self, parabolic) -> None:
        from autosde.sde_core import InitSampler, simulate_ensemble

        sampler = InitSampler(((-1.0, 1.0), (-1.0, 1.0)))
        whole = simulate_ensemble(parabolic, sampler, 30, 0.001, 5, seed=5, block_size=1024)
        blocked = simulate_ensemble(parabolic, sampler, 30, 0.001, 5, seed=5, block_size=7)
        assert np.array_equal(whole.states, blocked.states)

    def test_member_reproduced_by_its_substreams(self, parabolic) -> None:
        from autosde.sde_core import InitSampler, simulate_ensemble, simulate_trajectory, substream

        sampler = InitSampler(((-2.0, 2.0), (-2.0, 2.0)))
        ens = simulate_ensemble(parabolic, sampler, 10, 0.001, 8, seed=11)
        z0 = sampler.sample(substream(11, 4, 0))
        single = simulate_trajectory(parabolic, z0, 0.001, 8, substream(11, 4, 1))
        assert np.array_equal(single.states, ens.states[4])

    def test_fixed_coordinates_in_sampler(self) -> None:
        from autosde.sde_core import InitSampler

        sampler = InitSampler(((-1.0, 1.0), 3.0))
        z = sampler.sample(np.random.default_rng(0))
        assert z[1] == 3.0
        assert InitSampler.fixed([1.0, 2.0]).sample(np.random.default_rng(0)).tolist() == [1.0, 2.0]
        with pytest.raises(ValueError):
            InitSampler(((1.0, -1.0),))

    def test_precondition_errors(self, parabolic) -> None:
        from autosde.sde_core import InitSampler, simulate_ensemble

        sampler = InitSampler(((-1.0, 1.0), (-1.0, 1.0)))
        with pytest.raises(ValueError, match="n_traj"):
            simulate_ensemble(parabolic, sampler, 0, 0.001, 5, seed=1)
        with pytest.raises(ValueError, match="n_steps"):
            simulate_ensemble(parabolic, sampler, 5, 0.001, 0, seed=1)
        with pytest.raises(ValueError, match="coordinates"):
            simulate_ensemble(parabolic, InitSampler(((-1.0, 1.0),)), 5, 0.001, 5, seed=1)

    def test_blowup_policy(self) -> None:
        from autosde.errors import IntegrationBlowupError
        from autosde.sde_core import InitSampler, SlowFastSystem, simulate_ensemble

        # Positive starts explode under dx = x^3 within a few coarse steps; negative ones stay put.
        cubic = SlowFastSystem(
            1, 1, 1.0, lambda x, y: np.where(x > 0, x**3, 0.0), lambda x, y: -y, [0.0], [0.0], name="cubic"
        )
        sampler = InitSampler(((-10.0, 10.0), 0.0))
        with pytest.raises(IntegrationBlowupError) as excinfo:
            simulate_ensemble(cubic, sampler, 20, 0.5, 10, seed=3)
        assert excinfo.value.trajectory_index is not None

        with pytest.warns(UserWarning, match="Dropped"):
            ens = simulate_ensemble(cubic, sampler, 20, 0.5, 10, seed=3, on_blowup="drop")
        assert len(ens.dropped) > 0
        assert ens.n_traj == 20 - len(ens.dropped)
        assert np.all(np.isfinite(ens.states))
        print(f"✅ Dropped {len(ens.dropped)} diverged members")


class TestCoarseGraining:
    """Test time coarse-graining and snapshots."""

    def test_stride_keeps_every_kth_row(self, parabolic_ensemble) -> None:
        from autosde.sde_core import coarse_grain

        coarse = coarse_grain(parabolic_ensemble, 5)
        assert coarse.states.shape == (1200, 3, 2)
        assert coarse.dt == pytest.approx(0.005)
        assert np.array_equal(coarse.states[:, 1], parabolic_ensemble.states[:, 5])

    def test_stride_must_divide(self, parabolic_ensemble) -> None:
        from autosde.sde_core import coarse_grain

        with pytest.raises(ValueError, match="does not divide"):
            coarse_grain(parabolic_ensemble, 3)
        assert coarse_grain(parabolic_ensemble, 1).states.shape == parabolic_ensemble.states.shape

    def test_snapshot_at(self, parabolic_ensemble) -> None:
        from autosde.sde_core import snapshot_at

        snap = snapshot_at(parabolic_ensemble, 10)
        assert snap.n_samples == 1200
        assert np.array_equal(snap.points, parabolic_ensemble.states[:, 10])
        with pytest.raises(IndexError):
            snapshot_at(parabolic_ensemble, 11)
