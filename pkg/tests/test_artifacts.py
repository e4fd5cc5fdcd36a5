#!/usr/bin/env python3
"""
Artifact and configuration tests for autosde.

Tests the typed JSON layer, every stage artifact writer and reader, and the
YAML experiment configuration.

Author: F. Herbrand
License: MIT
"""

import json

import numpy as np
import pytest


class TestTypedJson:
    """Test the type handler registry through the JSON helpers."""

    def test_package_types_survive(self) -> None:
        from autosde.basis import BasisKind, build_dictionary
        from autosde.serializers import artifact_dumps, artifact_loads

        dictionary = build_dictionary(2, 3, "hermite")
        payload = {"dict": dictionary, "kind": BasisKind.MONOMIAL, "dims": (0, 2), "seed": np.int64(5)}
        restored = artifact_loads(artifact_dumps(payload))
        assert restored["dict"] == dictionary
        assert restored["kind"] is BasisKind.MONOMIAL
        assert restored["dims"] == (0, 2)
        assert restored["seed"] == 5
        print("✅ Dataclass, enum, tuple and numpy scalar restored")

    def test_arrays_are_bit_exact(self) -> None:
        from autosde.serializers import artifact_dumps, artifact_loads

        array = np.random.default_rng(0).normal(size=(3, 4)) * 1e-7
        restored = artifact_loads(artifact_dumps(array))
        assert restored.dtype == array.dtype
        assert np.array_equal(restored, array)
        ints = artifact_loads(artifact_dumps(np.arange(6, dtype=np.int32).reshape(2, 3)))
        assert ints.dtype == np.int32
        assert ints.shape == (2, 3)

    def test_functions_are_rejected(self, parabolic) -> None:
        from autosde.errors import ArtifactError
        from autosde.serializers import artifact_dumps

        with pytest.raises(ArtifactError, match="function"):
            artifact_dumps(parabolic)
        with pytest.raises(ArtifactError):
            artifact_dumps({"x": object()})

    def test_untrusted_classes_refused(self) -> None:
        from autosde.errors import ArtifactError
        from autosde.serializers import artifact_loads

        text = json.dumps({"__type__": "dataclass", "__class__": "os.Environ", "__data__": {}})
        with pytest.raises(ArtifactError, match="Refusing"):
            artifact_loads(text)

    def test_truncated_text(self) -> None:
        from autosde.errors import ArtifactError
        from autosde.serializers import artifact_dumps, artifact_loads

        with pytest.raises(ArtifactError, match="Invalid artifact JSON"):
            artifact_loads(artifact_dumps({"a": [1, 2, 3]})[:-4])

    def test_custom_handler_registration(self) -> None:
        from autosde import type_handlers
        from autosde.serializers import artifact_dumps, artifact_loads

        class ComplexHandler(type_handlers.TypeHandler):
            def can_handle(self, obj):
                return isinstance(obj, complex)

            def serialize(self, obj):
                return {"__type__": "complex", "__data__": [obj.real, obj.imag]}

            def can_deserialize(self, data):
                return isinstance(data, dict) and data.get("__type__") == "complex"

            def deserialize(self, data):
                return complex(*data["__data__"])

        handler = ComplexHandler()
        type_handlers.register_type_handler(handler, priority=1)
        try:
            assert artifact_loads(artifact_dumps({"z": 1 + 2j})) == {"z": 1 + 2j}
        finally:
            type_handlers._TYPE_HANDLERS.remove(handler)


class TestEnvelope:
    """Test the provenance header and version checks."""

    def test_header_fields(self, tmp_path) -> None:
        from autosde.artifacts import read_artifact, write_artifact

        path = write_artifact(tmp_path / "a.json", "manifold", "abc", 3, value=1.5)
        data = read_artifact(path, "manifold")
        assert data["schema"] == "manifold"
        assert data["schema_version"] == "1"
        assert data["config_hash"] == "abc"
        assert data["seed"] == 3
        assert data["value"] == 1.5

    def test_wrong_kind_and_version(self, tmp_path) -> None:
        from autosde.artifacts import read_artifact, write_artifact
        from autosde.errors import ArtifactError, SchemaVersionError

        path = write_artifact(tmp_path / "a.json", "manifold", "abc", 3)
        with pytest.raises(ArtifactError, match="expected a model artifact"):
            read_artifact(path, "model")

        data = json.loads(path.read_text())
        data["schema_version"] = "7"
        path.write_text(json.dumps(data))
        with pytest.raises(SchemaVersionError) as excinfo:
            read_artifact(path, "manifold")
        assert excinfo.value.expected == "1"
        assert excinfo.value.found == "7"

    def test_missing_and_truncated_files(self, tmp_path) -> None:
        from autosde.artifacts import read_artifact
        from autosde.errors import ArtifactError

        with pytest.raises(ArtifactError, match="Cannot read"):
            read_artifact(tmp_path / "absent.json", "model")
        broken = tmp_path / "broken.json"
        broken.write_text('{"schema": "model", "schema_ver')
        with pytest.raises(ArtifactError):
            read_artifact(broken, "model")
        headless = tmp_path / "headless.json"
        headless.write_text("[1, 2]")
        with pytest.raises(ArtifactError, match="missing schema header"):
            read_artifact(headless, "model")


class TestStageArtifacts:
    """Test round trips of every stage artifact."""

    def test_ensemble_directory(self, tmp_path, parabolic) -> None:
        from autosde.artifacts import load_ensemble, save_ensemble
        from autosde.sde_core import InitSampler, simulate_ensemble

        ensemble = simulate_ensemble(parabolic, InitSampler(((-1.0, 1.0), (0.0, 1.0))), 5, 0.001, 4, seed=1)
        save_ensemble(ensemble, tmp_path / "ensemble", parabolic, "hash")
        assert sorted(p.name for p in (tmp_path / "ensemble").iterdir())[-1] == "traj_00004.csv"
        header = (tmp_path / "ensemble" / "traj_00000.csv").read_text().splitlines()[0]
        assert header == "t,z1,z2"

        loaded, manifest = load_ensemble(tmp_path / "ensemble")
        assert np.array_equal(loaded.states, ensemble.states)
        assert loaded.dt == ensemble.dt
        assert manifest["system"] == "parabolic2d"
        assert manifest["epsilon"] == 0.01
        assert manifest["config_hash"] == "hash"
        print(f"✅ {loaded.n_traj} trajectories read back bit-exactly")

    def test_ensemble_with_truncated_trajectory(self, tmp_path, parabolic) -> None:
        from autosde.artifacts import load_ensemble, save_ensemble
        from autosde.errors import ArtifactError
        from autosde.sde_core import InitSampler, simulate_ensemble

        ensemble = simulate_ensemble(parabolic, InitSampler.fixed([1.0, 0.25]), 2, 0.001, 4, seed=1)
        save_ensemble(ensemble, tmp_path, parabolic, "hash")
        path = tmp_path / "traj_00001.csv"
        path.write_text("\n".join(path.read_text().splitlines()[:-2]) + "\n")
        with pytest.raises(ArtifactError, match="expected 5 rows"):
            load_ensemble(tmp_path)

    def test_estimated_sde_and_table(self, tmp_path, parabolic_esde) -> None:
        from autosde.artifacts import load_estimated_sde, save_estimated_sde, write_identification_table

        path = save_estimated_sde(tmp_path / "estimated_sde.json", parabolic_esde, "hash", 2024)
        loaded = load_estimated_sde(path)
        assert loaded.dictionary == parabolic_esde.dictionary
        assert np.array_equal(loaded.theta_drift, parabolic_esde.theta_drift)
        assert np.array_equal(loaded.theta_diff2, parabolic_esde.theta_diff2)
        assert loaded.identified_dims == (0,)
        assert loaded.diagnostics["n_pairs"] == parabolic_esde.diagnostics["n_pairs"]

        table = write_identification_table(tmp_path / "identification_table.csv", parabolic_esde, ["x", "y"])
        lines = table.read_text().splitlines()
        assert lines[0] == "term,drift_x,sigma2_x"
        assert lines[5].startswith("x*y,")

    def test_model_checkpoint(self, tmp_path, tiny_model) -> None:
        from autosde.artifacts import load_model, save_model

        path = save_model(tmp_path / "model.json", tiny_model, "hash", 3)
        loaded = load_model(path)
        assert loaded.architecture == tiny_model.architecture
        assert np.array_equal(loaded.params, tiny_model.params)
        assert np.array_equal(loaded.optimizer.m, tiny_model.optimizer.m)
        assert loaded.optimizer.step == tiny_model.optimizer.step
        assert loaded.init_seed == 3

    def test_model_with_tampered_layout(self, tmp_path, tiny_model) -> None:
        from autosde.artifacts import load_model, save_model
        from autosde.errors import ArtifactError

        path = save_model(tmp_path / "model.json", tiny_model)
        data = json.loads(path.read_text())
        data["layout"][1]["offset"] += 1
        path.write_text(json.dumps(data))
        with pytest.raises(ArtifactError, match="layout"):
            load_model(path)

    def test_model_with_missing_params(self, tmp_path, tiny_model) -> None:
        from autosde.artifacts import load_model, save_model
        from autosde.errors import ArtifactError

        path = save_model(tmp_path / "model.json", tiny_model)
        data = json.loads(path.read_text())
        del data["params"]
        path.write_text(json.dumps(data))
        with pytest.raises(ArtifactError, match="missing fields"):
            load_model(path)

    def test_manifold_and_reduced_system(self, tmp_path) -> None:
        from autosde.artifacts import load_manifold, load_reduced_system, save_manifold, save_reduced_system
        from autosde.manifold import fit_manifold
        from autosde.sde_core import Snapshot

        x = np.linspace(-2.0, 2.0, 21)
        fit = fit_manifold(Snapshot(40, np.column_stack([x, 0.25 * x**2])), slow_dims=(0,))
        save_manifold(tmp_path / "manifold.json", fit, "hash", 1, {"snapshot_time_index": 40})
        loaded = load_manifold(tmp_path / "manifold.json")
        assert loaded.slow_dims == (0,)
        assert np.array_equal(loaded.coeffs, fit.coeffs)
        assert loaded.dictionary == fit.dictionary

        save_reduced_system(tmp_path / "reduced_system.json", "estimated", np.array([0.9]), "hash", 1,
                            "manifold.json", "estimated_sde.json")
        reduced = load_reduced_system(tmp_path / "reduced_system.json")
        assert reduced["drift_source"] == "estimated"
        assert np.array_equal(reduced["sigma_slow"], [0.9])

    def test_evaluation_tables(self, tmp_path) -> None:
        from autosde.artifacts import write_histograms, write_sweep, write_tracking
        from autosde.evaluate import SweepRow, TrackingResult, histogram

        edges = np.array([0.0, 1.0, 2.0])
        hists = [histogram(np.array([0.5, 1.5]), edges), histogram(np.array([0.2, 0.3]), edges)]
        lines = write_histograms(tmp_path / "h.csv", hists, ["reduced_x1", "original_x1"]).read_text().splitlines()
        assert lines == ["left,right,reduced_x1,original_x1", "0.0,1.0,1,2", "1.0,2.0,1,0"]

        times = np.array([0.0, 0.1])
        paths = np.array([[1.0], [1.1]])
        tracking = TrackingResult(times, paths, paths, np.zeros(2), 0.0)
        header = write_tracking(tmp_path / "t.csv", tracking).read_text().splitlines()[0]
        assert header == "t,reduced_x1,original_x1,error"

        rows = [SweepRow((0.5,), [0.2], [0.01], [0.21], hists)]
        sweep = write_sweep(tmp_path / "s.csv", rows).read_text().splitlines()
        assert sweep[0] == "sigma1,reduced_std_x1,reduced_std_error_x1,original_std_x1"
        assert sweep[1] == "0.5,0.2,0.01,0.21"


class TestConfig:
    """Test YAML experiment configuration."""

    def test_bundled_configs_load(self, project_paths) -> None:
        from autosde.config import build_system, load_config

        for name, slow_dim in (("parabolic2d", 1), ("saddle3d", 2)):
            config = load_config(project_paths["configs_path"] / f"{name}.yaml")
            system = build_system(config.system)
            assert system.name == name
            assert system.slow_dim == slow_dim
            assert config.simulation.init_sampler().dim == system.dim
        print("✅ Bundled configs load")

    def test_defaults_and_overrides(self, tmp_path) -> None:
        from autosde.config import build_system, load_config

        path = tmp_path / "c.yaml"
        path.write_text("system:\n  name: parabolic2d\n  epsilon: 0.05\ntraining:\n  encoder_widths: [8, 4]\n")
        config = load_config(path, seed=11)
        assert config.simulation.seed == 11
        assert config.simulation.n_traj == 1200
        assert config.training.encoder_widths == (8, 4)
        assert build_system(config.system).epsilon == 0.05

    def test_unknown_key_names_dotted_path(self, tmp_path) -> None:
        from autosde.config import load_config
        from autosde.errors import ConfigError

        path = tmp_path / "c.yaml"
        path.write_text("training:\n  epoch: 3\n")
        with pytest.raises(ConfigError) as excinfo:
            load_config(path)
        assert excinfo.value.field == "training.epoch"

    def test_invalid_values_and_files(self, tmp_path) -> None:
        from autosde.config import load_config
        from autosde.errors import ConfigError

        path = tmp_path / "c.yaml"
        path.write_text("training:\n  l: 1\n")
        with pytest.raises(ConfigError, match="l must be > 1"):
            load_config(path)
        path.write_text("simulation: [1, 2\n")
        with pytest.raises(ConfigError, match="invalid YAML"):
            load_config(path)
        with pytest.raises(ConfigError, match="cannot read"):
            load_config(tmp_path / "absent.yaml")
        path.write_text("system:\n  name: lorenz\n")
        with pytest.raises(ConfigError, match="unknown system"):
            load_config(path)

    def test_polynomial_system(self, tmp_path) -> None:
        from autosde.config import build_system, load_config

        path = tmp_path / "c.yaml"
        path.write_text(
            "system:\n"
            "  name: polynomial\n"
            "  slow_dim: 1\n"
            "  fast_dim: 1\n"
            "  epsilon: 0.1\n"
            "  sigma_slow: [0.5]\n"
            "  sigma_fast: [0.1]\n"
            "  drift_slow: [[[-1.0, [1, 0]]]]\n"
            "  drift_fast: [[[-1.0, [0, 1]]]]\n"
            "simulation:\n"
            "  init: [[-1.0, 1.0], 0.0]\n"
        )
        config = load_config(path)
        system = build_system(config.system)
        assert system.drift(np.array([2.0, 1.0])) == pytest.approx([-2.0, -10.0])
        assert config.simulation.init_sampler().ranges == ((-1.0, 1.0), 0.0)

    def test_hash_tracks_resolved_values(self, project_paths) -> None:
        from autosde.config import config_hash, load_config

        path = project_paths["configs_path"] / "parabolic2d.yaml"
        first = config_hash(load_config(path))
        assert first == config_hash(load_config(path))
        assert first == config_hash(load_config(path, seed=2024))
        assert first != config_hash(load_config(path, seed=1))
        assert len(first) == 64
