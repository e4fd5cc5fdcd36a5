"""
Reading and writing stage artifacts.

Every JSON artifact is an envelope ``{"schema", "schema_version",
"config_hash", "seed", ...payload}``; readers check the kind and the schema
version before touching the payload. Tabular data (trajectories, snapshots,
tables, histograms) is plain CSV with a header row. Numbers are written with
17 significant digits so values read back identical.

Author: F. Herbrand
License: MIT
"""

import csv
import logging
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np

from .errors import ArtifactError
from .evaluate import ComparisonReport, Histogram, SweepRow, TrackingResult
from .km_ident import EstimatedSde, identification_table
from .manifold import ManifoldFit
from .neural import AdamState, Architecture, AutoSdeModel, ParameterLayout
from .sde_core import Ensemble, SlowFastSystem, Snapshot
from .serializers import read_json, write_json
from .training import ConvergenceReport
from .version_manager import current_schema_version, validate_schema_version

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]
FLOAT_FORMAT = "%.17g"


def envelope(kind: str, config_hash: str, seed: int, **payload: Any) -> Dict[str, Any]:
    """Wrap a payload with the provenance header."""
    return {
        "schema": kind,
        "schema_version": current_schema_version(kind),
        "config_hash": config_hash,
        "seed": int(seed),
        **payload,
    }


def write_artifact(path: PathLike, kind: str, config_hash: str, seed: int, **payload: Any) -> Path:
    path = write_json(path, envelope(kind, config_hash, seed, **payload))
    logger.debug("Wrote %s artifact %s", kind, path)
    return path


def read_artifact(path: PathLike, kind: str) -> Dict[str, Any]:
    """
    Load a JSON artifact and check its kind and schema version.

    Raises
    ------
    ArtifactError
        Missing, truncated or mislabelled file
    SchemaVersionError
        Unsupported schema version
    """
    data = read_json(path)
    if not isinstance(data, dict) or "schema" not in data or "schema_version" not in data:
        raise ArtifactError(f"{path}: missing schema header")
    if data["schema"] != kind:
        raise ArtifactError(f"{path}: expected a {kind} artifact, found {data['schema']}")
    validate_schema_version(kind, data["schema_version"])
    return data


def _require(data: Dict[str, Any], keys: Iterable[str], path: PathLike) -> None:
    missing = [k for k in keys if k not in data]
    if missing:
        raise ArtifactError(f"{path}: missing fields {missing}")


# ---------------------------------------------------------------------------
# CSV helpers
# ---------------------------------------------------------------------------


def write_matrix_csv(path: PathLike, header: Sequence[str], matrix: np.ndarray) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    try:
        np.savetxt(path, np.asarray(matrix, dtype=np.float64), delimiter=",", header=",".join(header),
                   comments="", fmt=FLOAT_FORMAT)
    except OSError as e:
        raise ArtifactError(f"Cannot write {path}: {e}") from e
    return path


def read_matrix_csv(path: PathLike) -> Tuple[List[str], np.ndarray]:
    path = Path(path)
    try:
        with open(path, "r", encoding="utf-8") as f:
            header = f.readline().strip().split(",")
        matrix = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    except (OSError, ValueError) as e:
        raise ArtifactError(f"Cannot read {path}: {e}") from e
    return header, matrix


def write_rows_csv(path: PathLike, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(header)
        for row in rows:
            writer.writerow([repr(v) if isinstance(v, float) else v for v in row])
    return path


def state_header(dim: int) -> List[str]:
    return [f"z{i + 1}" for i in range(dim)]


# ---------------------------------------------------------------------------
# Ensembles and snapshots
# ---------------------------------------------------------------------------


def save_ensemble(
    ensemble: Ensemble, directory: PathLike, system: SlowFastSystem, config_hash: str
) -> Path:
    """One CSV per trajectory (``t,z1..zN``) plus ``manifest.json``."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    header = ["t"] + state_header(ensemble.dim)
    times = ensemble.times[:, None]
    files = []
    for i, states in enumerate(ensemble.states):
        name = f"traj_{i:05d}.csv"
        write_matrix_csv(directory / name, header, np.hstack([times, states]))
        files.append(name)
    write_artifact(
        directory / "manifest.json",
        "ensemble",
        config_hash,
        ensemble.seed,
        system=system.name,
        slow_dim=ensemble.slow_dim,
        fast_dim=ensemble.dim - ensemble.slow_dim,
        epsilon=float(system.epsilon),
        t0=float(ensemble.t0),
        dt=float(ensemble.dt),
        n_traj=ensemble.n_traj,
        n_steps=ensemble.n_steps,
        dropped=list(ensemble.dropped),
        files=files,
    )
    logger.info("Saved ensemble of %d trajectories to %s", ensemble.n_traj, directory)
    return directory


def load_ensemble(directory: PathLike) -> Tuple[Ensemble, Dict[str, Any]]:
    """Read an ensemble directory written by ``save_ensemble``."""
    directory = Path(directory)
    manifest = read_artifact(directory / "manifest.json", "ensemble")
    _require(manifest, ("files", "dt", "t0", "slow_dim", "n_steps"), directory / "manifest.json")
    states = []
    for name in manifest["files"]:
        _, matrix = read_matrix_csv(directory / name)
        if matrix.shape[0] != manifest["n_steps"] + 1:
            raise ArtifactError(f"{directory / name}: expected {manifest['n_steps'] + 1} rows, found {matrix.shape[0]}")
        states.append(matrix[:, 1:])
    ensemble = Ensemble(
        np.stack(states), manifest["t0"], manifest["dt"], manifest["seed"], manifest["slow_dim"],
        tuple(manifest.get("dropped", ())),
    )
    return ensemble, manifest


def save_snapshot(path: PathLike, snapshot: Snapshot) -> Path:
    return write_matrix_csv(path, state_header(snapshot.points.shape[1]), snapshot.points)


def load_snapshot(path: PathLike, time_index: int) -> Snapshot:
    _, matrix = read_matrix_csv(path)
    return Snapshot(time_index, matrix)


# ---------------------------------------------------------------------------
# Estimated SDE
# ---------------------------------------------------------------------------


def save_estimated_sde(path: PathLike, esde: EstimatedSde, config_hash: str, seed: int) -> Path:
    return write_artifact(
        path,
        "estimated_sde",
        config_hash,
        seed,
        dictionary=esde.dictionary,
        theta_drift=esde.theta_drift,
        theta_diff2=esde.theta_diff2,
        identified_dims=esde.identified_dims,
        threshold=esde.threshold,
        fit_diagnostics=esde.diagnostics,
    )


def load_estimated_sde(path: PathLike) -> EstimatedSde:
    data = read_artifact(path, "estimated_sde")
    _require(data, ("dictionary", "theta_drift", "theta_diff2", "identified_dims"), path)
    return EstimatedSde(
        data["dictionary"],
        data["theta_drift"],
        data["theta_diff2"],
        tuple(data["identified_dims"]),
        data.get("threshold", 0.05),
        data.get("fit_diagnostics", {}),
    )


def write_identification_table(path: PathLike, esde: EstimatedSde, var_names: Optional[Sequence[str]] = None) -> Path:
    header, rows = identification_table(esde, var_names)
    return write_rows_csv(path, header, rows)


# ---------------------------------------------------------------------------
# Model checkpoints
# ---------------------------------------------------------------------------


def save_model(path: PathLike, model: AutoSdeModel, config_hash: str = "", seed: int = 0) -> Path:
    """
    Write a model checkpoint.

    The checkpoint holds the architecture, the layout manifest, every
    parameter, the standardization constants and the optimizer state.
    """
    layout = [
        {"name": e.name, "shape": list(e.shape), "offset": e.offset} for e in model.layout.entries
    ]
    return write_artifact(
        path,
        "model",
        config_hash,
        seed,
        architecture=model.architecture,
        activations={"hidden": model.architecture.activation, "output": "identity", "lstm": "sigmoid/tanh"},
        layout=layout,
        params=model.params,
        input_mean=model.input_mean,
        input_std=model.input_std,
        optimizer=model.optimizer,
        init_seed=model.init_seed,
        metadata=model.metadata,
    )


def load_model(path: PathLike) -> AutoSdeModel:
    """
    Read a checkpoint written by ``save_model``.

    Raises
    ------
    ArtifactError
        Truncated file, missing fields or a layout that disagrees with the architecture
    SchemaVersionError
        Unsupported checkpoint version
    """
    data = read_artifact(path, "model")
    _require(data, ("architecture", "layout", "params", "input_mean", "input_std", "optimizer"), path)
    architecture = data["architecture"]
    if not isinstance(architecture, Architecture) or not isinstance(data["optimizer"], AdamState):
        raise ArtifactError(f"{path}: malformed architecture or optimizer entry")
    expected = [
        {"name": e.name, "shape": list(e.shape), "offset": e.offset}
        for e in ParameterLayout.for_architecture(architecture).entries
    ]
    if data["layout"] != expected:
        raise ArtifactError(f"{path}: parameter layout does not match the architecture")
    try:
        return AutoSdeModel(
            architecture,
            data["params"],
            data["input_mean"],
            data["input_std"],
            data["optimizer"],
            data.get("init_seed", 0),
            data.get("metadata", {}),
        )
    except ValueError as e:
        raise ArtifactError(f"{path}: {e}") from e


# ---------------------------------------------------------------------------
# Training run, manifold, reduced system, evaluation
# ---------------------------------------------------------------------------


def save_run_manifest(
    path: PathLike, report: ConvergenceReport, config: Dict[str, Any], config_hash: str, seed: int,
    snapshot_files: Sequence[str],
) -> Path:
    return write_artifact(
        path,
        "run_manifest",
        config_hash,
        seed,
        config=config,
        status=report.status,
        generations=report.generations,
        distances=report.distances,
        loss_traces=report.loss_traces,
        time_indices=report.time_indices,
        tau_dist=report.tau_dist,
        distance_lag=report.distance_lag,
        snapshots=list(snapshot_files),
    )


def save_manifold(path: PathLike, fit: ManifoldFit, config_hash: str, seed: int, provenance: Dict[str, Any]) -> Path:
    return write_artifact(path, "manifold", config_hash, seed, fit=fit, provenance=provenance)


def load_manifold(path: PathLike) -> ManifoldFit:
    data = read_artifact(path, "manifold")
    _require(data, ("fit",), path)
    if not isinstance(data["fit"], ManifoldFit):
        raise ArtifactError(f"{path}: malformed manifold entry")
    return data["fit"]


def save_reduced_system(
    path: PathLike, source: str, sigma_slow: np.ndarray, config_hash: str, seed: int,
    manifold_file: str, drift_file: Optional[str],
) -> Path:
    return write_artifact(
        path,
        "reduced_system",
        config_hash,
        seed,
        drift_source=source,
        drift_file=drift_file,
        manifold_file=manifold_file,
        sigma_slow=np.asarray(sigma_slow, dtype=np.float64),
    )


def load_reduced_system(path: PathLike) -> Dict[str, Any]:
    data = read_artifact(path, "reduced_system")
    _require(data, ("drift_source", "manifold_file", "sigma_slow"), path)
    return data


def save_comparison_report(path: PathLike, report: ComparisonReport, config_hash: str, seed: int, **extra: Any) -> Path:
    return write_artifact(path, "comparison_report", config_hash, seed, **report.to_dict(), **extra)


def write_histograms(path: PathLike, hists: Sequence[Histogram], labels: Sequence[str]) -> Path:
    """Histograms sharing edges as columns ``left,right,<label>...``."""
    edges = hists[0].edges
    rows = []
    for k in range(edges.size - 1):
        rows.append([float(edges[k]), float(edges[k + 1])] + [int(h.counts[k]) for h in hists])
    return write_rows_csv(path, ["left", "right"] + list(labels), rows)


def write_tracking(path: PathLike, result: TrackingResult) -> Path:
    n_slow = result.reduced.shape[1]
    header = ["t"] + [f"reduced_x{k + 1}" for k in range(n_slow)] + [f"original_x{k + 1}" for k in range(n_slow)] + ["error"]
    matrix = np.hstack([result.times[:, None], result.reduced, result.original, result.errors[:, None]])
    return write_matrix_csv(path, header, matrix)


def write_sweep(path: PathLike, rows: Sequence[SweepRow]) -> Path:
    n_slow = len(rows[0].reduced_std)
    header = (
        [f"sigma{k + 1}" for k in range(len(rows[0].sigma))]
        + [f"reduced_std_x{k + 1}" for k in range(n_slow)]
        + [f"reduced_std_error_x{k + 1}" for k in range(n_slow)]
        + [f"original_std_x{k + 1}" for k in range(n_slow)]
    )
    table = [list(r.sigma) + r.reduced_std + r.reduced_std_error + r.original_std for r in rows]
    return write_rows_csv(path, header, table)
