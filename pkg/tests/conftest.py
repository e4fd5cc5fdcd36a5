#!/usr/bin/env python3
"""
pytest configuration and fixtures for autosde tests.

This file provides common setup and fixtures for all tests. It handles path
setup so tests run from any directory, adds markers from the test file name
and shares small seeded ensembles between tests.

Author: F. Herbrand
License: MIT
"""

import sys
from pathlib import Path

import numpy as np
import pytest


def setup_project_paths():
    """Setup paths consistently regardless of execution directory."""
    project_root = Path(__file__).resolve().parent.parent
    src_path = project_root / "src"
    tests_path = project_root / "tests"
    testresults_path = tests_path / "testresults"

    testresults_path.mkdir(parents=True, exist_ok=True)

    if str(src_path) not in sys.path:
        sys.path.insert(0, str(src_path))

    return {
        "project_root": project_root,
        "src_path": src_path,
        "tests_path": tests_path,
        "testresults_path": testresults_path,
        "configs_path": project_root / "configs",
    }


# Setup paths at module level
PATHS = setup_project_paths()


def pytest_configure(config):
    """Register the markers used across the suite."""
    config.addinivalue_line("markers", "slow: marks long end-to-end runs (deselect with '-m \"not slow\"')")
    config.addinivalue_line("markers", "integration: marks tests that chain several pipeline stages")
    config.addinivalue_line("markers", "numerics: marks tests of integrators, fits and gradients")
    config.addinivalue_line("markers", "artifacts: marks serialization and checkpoint tests")


def pytest_collection_modifyitems(config, items):
    """Add markers automatically based on the test file name."""
    numerics_files = ("test_sde_core", "test_basis", "test_km_ident", "test_neural", "test_manifold",
                      "test_training", "test_evaluate")
    for item in items:
        path = str(item.fspath)
        if "test_acceptance" in path:
            item.add_marker(pytest.mark.slow)
            item.add_marker(pytest.mark.integration)
        elif "test_cli" in path:
            item.add_marker(pytest.mark.integration)
        elif "test_artifacts" in path or "test_version_management" in path:
            item.add_marker(pytest.mark.artifacts)
        elif any(name in path for name in numerics_files):
            item.add_marker(pytest.mark.numerics)


# Fixtures
@pytest.fixture(scope="session")
def project_paths():
    """Provide project paths to all tests."""
    return PATHS


@pytest.fixture(scope="session")
def parabolic():
    from autosde.sde_core import parabolic_system

    return parabolic_system()


@pytest.fixture(scope="session")
def saddle():
    from autosde.sde_core import saddle_system

    return saddle_system()


@pytest.fixture(scope="session")
def parabolic_ensemble(parabolic):
    """1200 short bursts of the parabolic system with the default sampling box."""
    from autosde.sde_core import InitSampler, simulate_ensemble

    sampler = InitSampler(((-5.0, 5.0), (-6.0, 6.0)))
    return simulate_ensemble(parabolic, sampler, n_traj=1200, dt=0.001, n_steps=10, seed=2024)


@pytest.fixture(scope="session")
def parabolic_esde(parabolic_ensemble):
    """Drift and diffusion identified from ``parabolic_ensemble``."""
    from autosde.basis import build_dictionary
    from autosde.km_ident import build_km_targets, fit_sde

    dictionary = build_dictionary(2, 2)
    return fit_sde(build_km_targets(parabolic_ensemble, dictionary), threshold=0.05)


@pytest.fixture(scope="function")
def tiny_model():
    """Small autoencoder-LSTM over 4x2 windows."""
    from autosde.neural import Architecture, init_model

    arch = Architecture(input_dim=2, window_length=4, latent_dim=2, encoder_widths=(5, 3), lstm_hidden=3)
    return init_model(arch, seed=3)


@pytest.fixture(autouse=True, scope="function")
def global_rng_untouched():
    """
    Check that no test leaves the legacy global numpy RNG modified.

    All randomness in autosde flows through explicit Generators.
    """
    state = np.random.get_state()
    yield
    after = np.random.get_state()
    assert state[0] == after[0]
    assert np.array_equal(state[1], after[1]), "global numpy RNG state was modified!"
    assert state[2:] == after[2:]


def pytest_sessionfinish(session, exitstatus):
    """Generate summary report after all tests."""
    results_file = PATHS["testresults_path"] / "pytest_summary.txt"

    with open(results_file, "w") as f:
        f.write("autosde - pytest Test Summary\n")
        f.write("=" * 50 + "\n")
        f.write(f"Exit status: {exitstatus}\n")
        f.write(f"Total tests: {session.testscollected}\n")
        f.write(f"Failed tests: {session.testsfailed}\n")
        f.write(f"Passed tests: {session.testscollected - session.testsfailed}\n")
        f.write(
            f"Success rate: {(session.testscollected - session.testsfailed) / max(session.testscollected, 1) * 100:.1f}%\n"
        )
        f.write("Status: PASS\n" if exitstatus == 0 else "Status: FAIL\n")

    print(f"\n📁 Test summary saved to: {results_file}")
