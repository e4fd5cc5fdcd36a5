"""
Quantitative comparison of reduced and original slow dynamics.

Author: F. Herbrand
License: MIT
"""

import logging
from dataclasses import dataclass, field, replace
from typing import Any, Dict, List, Optional, Sequence, Union

import numpy as np
from scipy import stats

from .km_ident import EstimatedSde
from .manifold import ManifoldFit, ReducedSystem, build_reduced
from .sde_core import Ensemble, InitSampler, SdeSystem, SlowFastSystem, integrate, simulate_ensemble, substream
from .training import ensemble_distance

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Histogram:
    """Counts of samples between consecutive edges."""

    edges: np.ndarray
    counts: np.ndarray
    n_total: int

    def __post_init__(self) -> None:
        if np.any(np.diff(self.edges) <= 0):
            raise ValueError("histogram edges must be strictly increasing")
        if int(np.sum(self.counts)) != self.n_total:
            raise ValueError("histogram counts must sum to n_total")


def shared_edges(*samples: np.ndarray, max_bins: int = 200) -> np.ndarray:
    """Freedman-Diaconis bin edges on the pooled samples, capped at ``max_bins`` bins."""
    pooled = np.concatenate([np.asarray(s, dtype=np.float64).reshape(-1) for s in samples])
    if pooled.size == 0:
        raise ValueError("cannot build bin edges from empty samples")
    edges = np.histogram_bin_edges(pooled, bins="fd")
    if edges.size > max_bins + 1:
        edges = np.linspace(pooled.min(), pooled.max(), max_bins + 1)
    return edges


def histogram(samples: np.ndarray, edges: np.ndarray) -> Histogram:
    samples = np.asarray(samples, dtype=np.float64).reshape(-1)
    counts, _ = np.histogram(samples, bins=edges)
    return Histogram(np.asarray(edges, dtype=np.float64), counts, int(counts.sum()))


def ks_statistic(a: np.ndarray, b: np.ndarray) -> float:
    """
    Two-sample Kolmogorov-Smirnov statistic ``sup |F_a - F_b|``.

    Raises
    ------
    ValueError
        If either sample is empty
    """
    a = np.asarray(a, dtype=np.float64).reshape(-1)
    b = np.asarray(b, dtype=np.float64).reshape(-1)
    if a.size == 0 or b.size == 0:
        raise ValueError("KS statistic needs two nonempty samples")
    return float(stats.ks_2samp(a, b).statistic)


@dataclass
class ComparisonReport:
    """Per-time-step distribution metrics plus optional tracking errors."""

    metrics: List[Dict[str, Any]] = field(default_factory=list)
    histograms: Dict[int, List[Histogram]] = field(default_factory=dict)
    rmse: List[float] = field(default_factory=list)
    config: Dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, Any]:
        return {"metrics": self.metrics, "rmse": self.rmse, "config": self.config}


def compare_distributions(
    reduced_ensemble: Ensemble,
    original_ensemble: Ensemble,
    slow_dims: Sequence[int],
    time_indices: Sequence[int],
    max_points: Optional[int] = 2000,
) -> ComparisonReport:
    """
    Compare slow marginals of two ensembles at selected time indices.

    Parameters
    ----------
    reduced_ensemble : Ensemble
        Slow-only ensemble (columns in ``slow_dims`` order)
    original_ensemble : Ensemble
        Full-state ensemble on the same time grid
    slow_dims : sequence of int
        Columns of the original ensemble to compare
    time_indices : sequence of int
        Row indices to evaluate

    Returns
    -------
    ComparisonReport
        KS per slow coordinate, energy distance, means and standard
        deviations per time index, and histograms on shared edges

    Raises
    ------
    ValueError
        Different time steps or mismatched columns
    IndexError
        A time index beyond either ensemble
    """
    slow_dims = [int(d) for d in slow_dims]
    if not np.isclose(reduced_ensemble.dt, original_ensemble.dt, rtol=1e-12, atol=0.0):
        raise ValueError(f"ensembles have different dt: {reduced_ensemble.dt} vs {original_ensemble.dt}")
    if reduced_ensemble.dim != len(slow_dims):
        raise ValueError(
            f"reduced ensemble has {reduced_ensemble.dim} columns, {len(slow_dims)} slow dims requested"
        )
    report = ComparisonReport(config={"slow_dims": slow_dims, "time_indices": [int(t) for t in time_indices]})
    for t in time_indices:
        t = int(t)
        if not (0 <= t <= reduced_ensemble.n_steps and t <= original_ensemble.n_steps):
            raise IndexError(
                f"time index {t} outside the ensembles ({reduced_ensemble.n_steps}, {original_ensemble.n_steps} steps)"
            )
        reduced = reduced_ensemble.states[:, t]
        original = original_ensemble.states[:, t][:, slow_dims]
        ks = [ks_statistic(reduced[:, k], original[:, k]) for k in range(len(slow_dims))]
        metrics = {
            "time_index": t,
            "ks": ks,
            "energy_distance": ensemble_distance(reduced, original, max_points=max_points),
            "reduced_mean": reduced.mean(axis=0).tolist(),
            "reduced_std": reduced.std(axis=0, ddof=1).tolist() if reduced.shape[0] > 1 else [0.0] * len(slow_dims),
            "original_mean": original.mean(axis=0).tolist(),
            "original_std": original.std(axis=0, ddof=1).tolist() if original.shape[0] > 1 else [0.0] * len(slow_dims),
        }
        report.metrics.append(metrics)
        hists = []
        for k in range(len(slow_dims)):
            edges = shared_edges(reduced[:, k], original[:, k])
            hists += [histogram(reduced[:, k], edges), histogram(original[:, k], edges)]
        report.histograms[t] = hists
        logger.info("time index %d: KS %s, energy distance %.4g", t, [f"{v:.3f}" for v in ks], metrics["energy_distance"])
    return report


@dataclass(frozen=True)
class TrackingResult:
    """Reduced and original slow paths driven by the same noise."""

    times: np.ndarray
    reduced: np.ndarray
    original: np.ndarray
    errors: np.ndarray
    rmse: float


def track_trajectory(
    reduced: ReducedSystem,
    original_system: SdeSystem,
    x0_on_manifold: Sequence[float],
    horizon: int,
    dt: float,
    shared_seed: int,
    substeps: int = 1,
) -> TrackingResult:
    """
    Simulate reduced and original systems with common random numbers.

    The original system starts from the lift ``(x0, h(x0))`` and consumes a
    full noise block; the reduced system receives the slow columns of the
    same block. When ``original_system`` has the reduced dimension it is
    driven by the identical noise and started from ``x0``.

    Returns
    -------
    TrackingResult
        ``errors[k]`` is the Euclidean slow-state error at step ``k``; ``rmse``
        is the root mean square over all steps and slow coordinates
    """
    x0 = np.asarray(x0_on_manifold, dtype=np.float64).reshape(-1)
    slow_dims = list(reduced.manifold.slow_dims)
    if original_system.dim == reduced.dim:
        z0, slow_columns = x0, list(range(reduced.dim))
    else:
        z0, slow_columns = reduced.manifold.lift(x0), slow_dims

    noise = substream(shared_seed, 0, 1).standard_normal((horizon * substeps, original_system.dim))
    original, _ = integrate(original_system, z0[None], dt, horizon, noise[None], substeps=substeps)
    path, _ = integrate(reduced, x0[None], dt, horizon, noise[None][:, :, slow_columns], substeps=substeps)
    original_slow = original[0][:, slow_columns]
    diff = path[0] - original_slow
    errors = np.sqrt(np.sum(diff**2, axis=1))
    rmse = float(np.sqrt(np.mean(diff**2)))
    times = dt * np.arange(horizon + 1)
    return TrackingResult(times, path[0], original_slow, errors, rmse)


@dataclass(frozen=True)
class SweepRow:
    sigma: tuple
    reduced_std: List[float]
    reduced_std_error: List[float]
    original_std: List[float]
    histograms: List[Histogram]


def _with_sigma(system: SlowFastSystem, sigma: Union[float, Sequence[float]]) -> SlowFastSystem:
    sigma_slow = np.broadcast_to(np.asarray(sigma, dtype=np.float64), (system.slow_dim,)).copy()
    return replace(system, sigma_slow=sigma_slow)


def noise_sweep(
    system: SlowFastSystem,
    manifold: ManifoldFit,
    sigma_list: Sequence[Union[float, Sequence[float]]],
    x0: Sequence[float],
    time_index: int,
    n_samples: int,
    dt: float,
    seed: int,
    substeps: int = 1,
    drift_source: Optional[EstimatedSde] = None,
    reduced_substeps: int = 1,
) -> List[SweepRow]:
    """
    Spread of reduced and original ensembles for several slow noise levels.

    For every entry of ``sigma_list`` the system is rebuilt with that
    ``sigma_slow`` (a scalar is broadcast over the slow block), the reduced
    system is composed from the rebuilt system (or from ``drift_source``) and
    both are simulated from one manifold point up to ``time_index``.

    Returns
    -------
    list of SweepRow
        Sample standard deviations per slow coordinate with their standard
        errors ``std / sqrt(2 (n - 1))``, and histograms on shared edges
    """
    if len(sigma_list) == 0:
        raise ValueError("sigma_list must not be empty")
    x0 = np.asarray(x0, dtype=np.float64).reshape(-1)
    rows = []
    for sigma in sigma_list:
        sigma_values = np.atleast_1d(np.asarray(sigma, dtype=np.float64))
        if np.any(sigma_values <= 0):
            raise ValueError(f"sweep sigmas must be positive, got {sigma}")
        swept = _with_sigma(system, sigma)
        reduced = build_reduced(
            drift_source if drift_source is not None else swept, manifold, swept.sigma_slow
        )
        reduced_ens = simulate_ensemble(
            reduced, InitSampler.fixed(x0), n_samples, dt, time_index, seed, substeps=reduced_substeps
        )
        original_ens = simulate_ensemble(
            swept, InitSampler.fixed(manifold.lift(x0)), n_samples, dt, time_index, seed + 1,
            substeps=substeps, on_blowup="drop",
        )
        r = reduced_ens.states[:, -1]
        o = original_ens.states[:, -1][:, list(manifold.slow_dims)]
        reduced_std = r.std(axis=0, ddof=1)
        hists = []
        for k in range(r.shape[1]):
            edges = shared_edges(r[:, k], o[:, k])
            hists += [histogram(r[:, k], edges), histogram(o[:, k], edges)]
        rows.append(
            SweepRow(
                tuple(float(s) for s in sigma_values),
                reduced_std.tolist(),
                (reduced_std / np.sqrt(2.0 * (r.shape[0] - 1))).tolist(),
                o.std(axis=0, ddof=1).tolist(),
                hists,
            )
        )
        logger.info("sigma %s: reduced std %s", rows[-1].sigma, [f"{v:.4f}" for v in rows[-1].reduced_std])
    return rows
