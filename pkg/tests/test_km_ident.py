#!/usr/bin/env python3
"""
Identification tests for autosde.

Tests Kramers-Moyal target assembly, sequentially thresholded least squares
and the identified SDE on simulated data with a known answer.

Author: F. Herbrand
License: MIT
"""

import numpy as np
import pytest


@pytest.fixture(scope="module")
def linear_ensemble():
    """dx = -x dt + 0.5 dW, fast y relaxing to x^2/4, 4000 bursts of 10 steps."""
    from autosde.sde_core import InitSampler, polynomial_system, simulate_ensemble

    system = polynomial_system(
        1, 1, 0.1,
        drift_slow=[[(-1.0, (1, 0))]],
        drift_fast=[[(-1.0, (0, 1)), (0.25, (2, 0))]],
        sigma_slow=[0.5], sigma_fast=[0.1],
    )
    sampler = InitSampler(((-5.0, 5.0), (-6.0, 6.0)))
    return simulate_ensemble(system, sampler, n_traj=4000, dt=0.01, n_steps=10, seed=17)


class TestTargets:
    """Test Kramers-Moyal target assembly."""

    def test_one_row_per_consecutive_pair(self, parabolic_ensemble) -> None:
        from autosde.basis import build_dictionary
        from autosde.km_ident import build_km_targets

        targets = build_km_targets(parabolic_ensemble, build_dictionary(2, 2))
        assert targets.n_pairs == 1200 * 10
        assert targets.features.shape == (12000, 6)
        assert targets.drift_targets.shape == (12000, 1)
        assert targets.identified_dims == (0,)

        states = parabolic_ensemble.states
        increment = states[0, 1, 0] - states[0, 0, 0]
        assert targets.drift_targets[0, 0] == pytest.approx(increment / 0.001)
        assert targets.diff_targets[0, 0] == pytest.approx(increment**2 / 0.001)
        print(f"✅ {targets.n_pairs} target rows")

    def test_all_dims_can_be_identified(self, parabolic_ensemble) -> None:
        from autosde.basis import build_dictionary
        from autosde.km_ident import build_km_targets

        targets = build_km_targets(parabolic_ensemble, build_dictionary(2, 1), identified_dims=(0, 1))
        assert targets.drift_targets.shape == (12000, 2)

    def test_invalid_inputs(self, parabolic_ensemble) -> None:
        from autosde.basis import build_dictionary
        from autosde.km_ident import build_km_targets
        from autosde.sde_core import Ensemble

        with pytest.raises(ValueError, match="variables"):
            build_km_targets(parabolic_ensemble, build_dictionary(3, 2))
        with pytest.raises(ValueError, match="out of range"):
            build_km_targets(parabolic_ensemble, build_dictionary(2, 2), identified_dims=(5,))
        single_row = Ensemble(np.zeros((3, 1, 2)), 0.0, 0.1, 0, 1)
        with pytest.raises(ValueError, match="two time rows"):
            build_km_targets(single_row, build_dictionary(2, 2))


class TestThresholdedLeastSquares:
    """Test the sparse regression on exactly known data."""

    def test_noiseless_support_recovery(self) -> None:
        from autosde.km_ident import threshold_fit

        rng = np.random.default_rng(0)
        features = rng.normal(size=(200, 6))
        truth = np.array([[0.0, 1.5, 0.0, -0.7, 0.0, 0.02]]).T
        coeffs, history = threshold_fit(features, features @ truth, threshold=0.05)
        expected = truth.copy()
        expected[5] = 0.0
        assert np.array_equal(coeffs != 0.0, expected != 0.0)
        assert np.allclose(coeffs[[1, 3]], truth[[1, 3]], atol=0.01)
        assert len(history) >= 2
        print(f"✅ Support {np.flatnonzero(coeffs[:, 0])} after {len(history) - 1} sweeps")

    def test_zero_threshold_is_plain_least_squares(self) -> None:
        from autosde.km_ident import threshold_fit

        rng = np.random.default_rng(1)
        features = rng.normal(size=(50, 3))
        targets = rng.normal(size=(50, 2))
        coeffs, history = threshold_fit(features, targets, threshold=0.0)
        expected, *_ = np.linalg.lstsq(features, targets, rcond=None)
        assert np.allclose(coeffs, expected)
        assert len(history) == 1

    def test_rank_deficient_support(self) -> None:
        from autosde.errors import SingularFitError
        from autosde.km_ident import threshold_fit

        column = np.random.default_rng(2).normal(size=(40, 1))
        features = np.hstack([column, column])
        with pytest.raises(SingularFitError) as excinfo:
            threshold_fit(features, column[:, 0], threshold=0.0, names=["a", "b"])
        assert excinfo.value.terms == ("a", "b")

    def test_negative_threshold(self) -> None:
        from autosde.km_ident import threshold_fit

        with pytest.raises(ValueError):
            threshold_fit(np.eye(3), np.ones(3), threshold=-1.0)


class TestFitSde:
    """Test identification end to end on simulated data."""

    def test_linear_drift_recovered(self, linear_ensemble) -> None:
        from autosde.basis import build_dictionary, term_names
        from autosde.km_ident import build_km_targets, fit_sde

        dictionary = build_dictionary(2, 2)
        esde = fit_sde(build_km_targets(linear_ensemble, dictionary), threshold=0.05)
        x_term = term_names(dictionary).index("z1")
        assert esde.theta_drift[x_term, 0] == pytest.approx(-1.0, abs=0.1)
        assert esde.diagnostics["n_pairs"] == 40000
        assert esde.diagnostics["L_drift"] > 0
        print(f"✅ drift coefficient of x: {esde.theta_drift[x_term, 0]:.4f}")

    def test_drift_correction_removes_bias(self, linear_ensemble) -> None:
        from autosde.basis import build_dictionary
        from autosde.km_ident import build_km_targets, fit_sde

        dictionary = build_dictionary(2, 2)
        raw = fit_sde(build_km_targets(linear_ensemble, dictionary), threshold=0.05)
        corrected = fit_sde(build_km_targets(linear_ensemble, dictionary, drift_corrected=True), threshold=0.05)
        # sigma^2 = 0.25; the raw second moment also carries f^2 dt = 0.01 x^2.
        assert raw.theta_diff2[0, 0] > 0.3
        assert corrected.theta_diff2[0, 0] == pytest.approx(0.25, abs=0.02)
        print(f"✅ sigma^2 raw {raw.theta_diff2[0, 0]:.4f}, corrected {corrected.theta_diff2[0, 0]:.4f}")

    def test_parabolic_identification(self, parabolic_esde) -> None:
        from autosde.km_ident import eval_estimated

        assert parabolic_esde.identified_dims == (0,)
        assert parabolic_esde.theta_drift.shape == (6, 1)
        # x y is the dominant drift term of f = x - x y.
        assert parabolic_esde.theta_drift[4, 0] == pytest.approx(-1.0, abs=0.3)
        drift, sigma = eval_estimated(parabolic_esde, np.array([[0.0, 0.0], [1.0, 1.0]]))
        assert drift.shape == (2, 1)
        assert np.all(sigma >= 0.0)

    def test_too_few_pairs(self) -> None:
        from autosde.basis import build_dictionary
        from autosde.km_ident import KmTargets, fit_sde

        dictionary = build_dictionary(2, 2)
        features = np.ones((6, 6))
        targets = KmTargets(features, np.ones((6, 1)), np.ones((6, 1)), (0,), dictionary)
        with pytest.raises(ValueError, match="more target rows"):
            fit_sde(targets)

    def test_negative_sigma2_warns_and_clamps(self) -> None:
        from autosde.basis import build_dictionary, evaluate_basis
        from autosde.km_ident import KmTargets, eval_estimated, fit_sde

        dictionary = build_dictionary(1, 1)
        x = np.linspace(0.0, 2.0, 21)[:, None]
        features = evaluate_basis(dictionary, x)
        diff = (0.5 - x)  # negative for x > 0.5
        targets = KmTargets(features, np.zeros((21, 1)), diff, (0,), dictionary)
        with pytest.warns(UserWarning, match="negative"):
            esde = fit_sde(targets, threshold=0.0)
        _, sigma = eval_estimated(esde, np.array([2.0]))
        assert sigma[0] == 0.0
        print("✅ Negative sigma^2 clamped to 0")


class TestIdentificationTable:
    """Test the reported coefficient table."""

    def test_rows_and_header(self, parabolic_esde) -> None:
        from autosde.km_ident import identification_table

        header, rows = identification_table(parabolic_esde, ["x", "y"])
        assert header == ["term", "drift_x", "sigma2_x"]
        assert [r[0] for r in rows] == ["1", "x", "y", "x^2", "x*y", "y^2"]
        assert rows[4][1] == float(parabolic_esde.theta_drift[4, 0])

    def test_hermite_fit_reported_in_monomials(self) -> None:
        from autosde.basis import build_dictionary, evaluate_basis
        from autosde.km_ident import KmTargets, fit_sde, identification_table

        rng = np.random.default_rng(5)
        z = rng.normal(size=(300, 2))
        mono = build_dictionary(2, 2)
        herm = build_dictionary(2, 2, "hermite")
        drift = (1.0 * z[:, 0] - 0.5 * z[:, 0] * z[:, 1])[:, None]
        diff = np.full((300, 1), 2.0)

        def table(dictionary):
            targets = KmTargets(evaluate_basis(dictionary, z), drift, diff, (0,), dictionary)
            return identification_table(fit_sde(targets, threshold=0.0))[1]

        for mono_row, herm_row in zip(table(mono), table(herm)):
            assert mono_row[0] == herm_row[0]
            assert np.allclose(mono_row[1:], herm_row[1:], atol=1e-8)

    def test_print_report(self, parabolic_esde, capsys) -> None:
        from autosde.km_ident import print_identification_report

        print_identification_report(parabolic_esde, ["x", "y"])
        out = capsys.readouterr().out
        assert "Identified SDE coefficients" in out
        assert "x*y" in out
        sigma = np.sqrt(max(parabolic_esde.theta_diff2[0, 0], 0.0))
        assert f"sigma_x={sigma:.4f}" in out

    def test_diffusion_column_holds_sigma_squared(self, parabolic_esde) -> None:
        from autosde.km_ident import identification_table

        header, rows = identification_table(parabolic_esde, ["x", "y"])
        column = header.index("sigma2_x")
        assert [row[column] for row in rows] == [float(v) for v in parabolic_esde.theta_diff2[:, 0]]
        print(f"✅ sigma^2 constant term {rows[0][column]:.4f}")
