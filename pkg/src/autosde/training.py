"""
Recursive train-and-predict loop that pushes an ensemble onto its slow manifold.

Every trajectory of a short-term ensemble becomes one window of ``m`` rows.
The model is trained to output each window shifted ``l - 1`` steps forward:
the leading ``m - l + 1`` output rows are matched against the observed rows
and the trailing ``l - 1`` rows against a drift-only Euler extension of the
identified SDE. Feeding the predictions back as the next generation's input
advances the ensemble by ``l - 1`` steps per generation. The loop stops when
the final-row point cloud no longer changes in energy distance.

Time indices are 0-based: generation ``k`` ends at row index
``(m - 1) + k (l - 1)`` of the original time grid, which is
``m + k (l - 1)`` when rows are counted from one.

Author: F. Herbrand
License: MIT
"""

import logging
import math
import warnings
from dataclasses import dataclass, field, replace
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.spatial.distance import cdist

from .errors import IntegrationBlowupError
from .km_ident import EstimatedSde, eval_estimated
from .neural import Architecture, AutoSdeModel, adam_step, init_model, loss_and_grad, predict, split_targets
from .sde_core import BLOWUP_LIMIT, Ensemble, SlowFastSystem, Snapshot

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class WindowDataset:
    """One ``(m, D)`` window per trajectory plus the generation counter."""

    windows: np.ndarray
    dt: float
    generation: int = 0

    def __post_init__(self) -> None:
        windows = np.asarray(self.windows, dtype=np.float64)
        if windows.ndim != 3 or windows.shape[0] < 1 or windows.shape[1] < 2:
            raise ValueError(f"windows must have shape (n>=1, m>=2, D), got {windows.shape}")
        if self.generation < 0:
            raise ValueError(f"generation must be >= 0, got {self.generation}")
        object.__setattr__(self, "windows", windows)

    @property
    def n_windows(self) -> int:
        return self.windows.shape[0]

    @property
    def m(self) -> int:
        return self.windows.shape[1]

    @property
    def dim(self) -> int:
        return self.windows.shape[2]

    def final_time_index(self, l: int) -> int:
        """0-based time index of the last row of every window."""
        return (self.m - 1) + self.generation * (l - 1)

    def last_rows(self, l: int) -> Snapshot:
        return Snapshot(self.final_time_index(l), self.windows[:, -1])


@dataclass(frozen=True)
class TrainConfig:
    """
    Hyperparameters of the recursive training loop.

    ``distance_lag`` is the number of generations between the two
    snapshots whose energy distance is tested against ``tau_dist``; the
    compared snapshots are ``distance_lag * (l - 1)`` time steps apart.
    ``distance_max_points`` caps the cloud size used for the distance.
    """

    l: int = 2
    epochs: int = 20
    batch_size: int = 64
    lr: float = 1e-3
    tau_dist: float = 0.05
    max_generations: int = 40
    distance_lag: int = 1
    seed: int = 0
    distance_max_points: Optional[int] = 2000
    latent_dim: Optional[int] = None
    encoder_widths: Tuple[int, ...] = (32, 16)
    lstm_hidden: int = 32
    activation: str = "tanh"
    standardize: bool = True

    def __post_init__(self) -> None:
        object.__setattr__(self, "encoder_widths", tuple(int(w) for w in self.encoder_widths))
        if self.l < 2:
            raise ValueError(f"l must be > 1, got {self.l}")
        if self.epochs < 0:
            raise ValueError(f"epochs must be >= 0, got {self.epochs}")
        if self.batch_size < 1 or self.max_generations < 1 or self.distance_lag < 1:
            raise ValueError("batch_size, max_generations and distance_lag must be >= 1")
        if self.distance_lag > self.max_generations:
            raise ValueError(
                f"distance_lag {self.distance_lag} exceeds max_generations {self.max_generations}"
            )
        if not self.tau_dist > 0:
            raise ValueError(f"tau_dist must be positive, got {self.tau_dist}")
        if not self.lr > 0:
            raise ValueError(f"lr must be positive, got {self.lr}")

    def check_window(self, m: int) -> None:
        if not 1 < self.l <= m:
            raise ValueError(f"shift l={self.l} must satisfy 1 < l <= m={m}")


@dataclass
class ConvergenceReport:
    """Outcome of ``run_recursive_training``."""

    status: str
    generations: int
    distances: List[float] = field(default_factory=list)
    loss_traces: List[List[float]] = field(default_factory=list)
    time_indices: List[int] = field(default_factory=list)
    tau_dist: float = 0.05
    distance_lag: int = 1

    @property
    def converged(self) -> bool:
        return self.status == "converged"

    @property
    def final_distance(self) -> float:
        return self.distances[-1] if self.distances else float("nan")


def make_windows(ensemble: Ensemble) -> WindowDataset:
    """
    Turn every trajectory of ``ensemble`` into one window at generation 0.

    Raises
    ------
    ValueError
        If trajectories have fewer than two rows
    """
    if ensemble.states.shape[1] < 2:
        raise ValueError("windows need at least two time rows per trajectory")
    return WindowDataset(ensemble.states.copy(), ensemble.dt, 0)


def extension_substeps(system: SlowFastSystem, dt: float) -> int:
    """Inner steps per ``dt`` so that the fast drift is advanced with a step of at most ``epsilon / 2``."""
    return max(1, math.ceil(dt / (0.5 * system.epsilon) - 1e-12))


def sde_extension(
    esde: EstimatedSde,
    system: SlowFastSystem,
    window: np.ndarray,
    l: int,
    dt: float,
    substeps: Optional[int] = None,
) -> np.ndarray:
    """
    Drift-only Euler continuation of a window by ``l - 1`` rows.

    Identified coordinates move with the estimated drift, the remaining ones
    with the known drift of ``system`` (for the fast block, ``g / epsilon``).
    Noise is replaced by its zero mean.

    Parameters
    ----------
    esde : EstimatedSde
        Identified slow equations
    system : SlowFastSystem
        Supplies the known fast drift and epsilon
    window : ndarray
        ``(m, D)`` or ``(B, m, D)``
    l : int
        Shift; ``l - 1`` rows are produced
    dt : float
        Row spacing of the window
    substeps : int, optional
        Inner Euler steps per row; chosen from epsilon when omitted

    Returns
    -------
    ndarray
        ``(l - 1, D)`` or ``(B, l - 1, D)``

    Raises
    ------
    IntegrationBlowupError
        If the continuation leaves the finite range
    """
    window = np.asarray(window, dtype=np.float64)
    if l < 2:
        raise ValueError(f"l must be > 1, got {l}")
    if window.shape[-1] != system.dim:
        raise ValueError(f"window has {window.shape[-1]} columns, system dimension is {system.dim}")
    n_sub = extension_substeps(system, dt) if substeps is None else int(substeps)
    h = dt / n_sub
    identified = list(esde.identified_dims)

    z = window[..., -1, :].copy()
    rows = []
    for k in range(l - 1):
        for _ in range(n_sub):
            with np.errstate(over="ignore", invalid="ignore"):
                drift = system.drift(z)
                drift[..., identified] = eval_estimated(esde, z)[0]
                z = z + h * drift
            if not np.all(np.isfinite(z) & (np.abs(z) <= BLOWUP_LIMIT)):
                raise IntegrationBlowupError("Drift-only extension left the finite range", step_index=k)
        rows.append(z.copy())
    return np.stack(rows, axis=-2)


def _generation_rng(seed: int, generation: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(int(seed), spawn_key=(int(generation),))))


def train_generation(
    model: AutoSdeModel,
    dataset: WindowDataset,
    esde: EstimatedSde,
    system: SlowFastSystem,
    cfg: TrainConfig,
) -> Tuple[AutoSdeModel, List[float]]:
    """
    Run ``cfg.epochs`` epochs of shuffled minibatch ADAM on one generation.

    Extension targets are computed once from the generation's windows.
    Returns the updated model and the mean loss of every epoch.

    Raises
    ------
    NumericalOverflowError
        Propagated from the forward or backward pass
    """
    cfg.check_window(dataset.m)
    if cfg.epochs == 0:
        return model, []

    extension = sde_extension(esde, system, dataset.windows, cfg.l, dataset.dt)
    target_overlap, target_sde = split_targets(dataset.windows, extension, cfg.l)
    rng = _generation_rng(cfg.seed, dataset.generation)
    params, optimizer = model.params, replace(model.optimizer, lr=cfg.lr)

    trace: List[float] = []
    n = dataset.n_windows
    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, cfg.batch_size):
            batch = order[start : start + cfg.batch_size]
            current = replace(model, params=params, optimizer=optimizer)
            loss, grad = loss_and_grad(
                current, dataset.windows[batch], target_overlap[batch], target_sde[batch], cfg.l
            )
            params, optimizer = adam_step(params, grad, optimizer)
            total += loss * batch.size
        trace.append(total / n)
        logger.debug("generation %d epoch %d: loss %.6g", dataset.generation, epoch, trace[-1])
    return replace(model, params=params, optimizer=optimizer), trace


def recursive_predict(model: AutoSdeModel, dataset: WindowDataset) -> WindowDataset:
    """Replace every window by the model output; the generation counter advances by one."""
    outputs = predict(model, dataset.windows)
    return WindowDataset(outputs, dataset.dt, dataset.generation + 1)


def _subsample(points: np.ndarray, max_points: Optional[int], seed: int) -> np.ndarray:
    if max_points is None or points.shape[0] <= max_points:
        return points
    rng = np.random.default_rng(seed)
    return points[np.sort(rng.choice(points.shape[0], size=max_points, replace=False))]


def _mean_pairwise(a: np.ndarray, b: np.ndarray, chunk: int = 2048) -> float:
    total = 0.0
    for start in range(0, a.shape[0], chunk):
        total += float(cdist(a[start : start + chunk], b).sum())
    return total / (a.shape[0] * b.shape[0])


def ensemble_distance(
    a: Snapshot, b: Snapshot, max_points: Optional[int] = None, seed: int = 0
) -> float:
    """
    Energy distance ``2 E|A-B| - E|A-A'| - E|B-B'|`` between two point clouds.

    All pairs, including ``i == j``, enter the means, so the value is
    nonnegative, symmetric and exactly zero for identical clouds. In one
    dimension it equals ``scipy.stats.energy_distance(a, b) ** 2``.

    Parameters
    ----------
    a, b : Snapshot
        Point clouds with the same number of columns
    max_points : int, optional
        Deterministic subsample size per cloud
    seed : int
        Subsampling seed

    Raises
    ------
    ValueError
        Column mismatch or an empty cloud
    """
    pa = np.asarray(a.points if isinstance(a, Snapshot) else a, dtype=np.float64)
    pb = np.asarray(b.points if isinstance(b, Snapshot) else b, dtype=np.float64)
    if pa.ndim == 1:
        pa = pa[:, None]
    if pb.ndim == 1:
        pb = pb[:, None]
    if pa.shape[0] == 0 or pb.shape[0] == 0:
        raise ValueError("energy distance needs nonempty point clouds")
    if pa.shape[1] != pb.shape[1]:
        raise ValueError(f"point clouds have {pa.shape[1]} and {pb.shape[1]} columns")
    pa = _subsample(pa, max_points, seed)
    pb = _subsample(pb, max_points, seed + 1)
    cross = _mean_pairwise(pa, pb)
    within_a = _mean_pairwise(pa, pa)
    within_b = _mean_pairwise(pb, pb)
    return max(0.0, 2.0 * cross - within_a - within_b)


def model_for(dataset: WindowDataset, slow_dim: int, cfg: TrainConfig) -> AutoSdeModel:
    """Fresh model sized for ``dataset``, standardized on its windows when requested."""
    latent = cfg.latent_dim if cfg.latent_dim is not None else slow_dim + 1
    arch = Architecture(
        input_dim=dataset.dim,
        window_length=dataset.m,
        latent_dim=latent,
        encoder_widths=cfg.encoder_widths,
        lstm_hidden=cfg.lstm_hidden,
        activation=cfg.activation,
    )
    mean = std = None
    if cfg.standardize:
        flat = dataset.windows.reshape(-1, dataset.dim)
        mean = flat.mean(axis=0)
        std = flat.std(axis=0)
        std = np.where(std > 0, std, 1.0)
    return init_model(arch, seed=cfg.seed, input_mean=mean, input_std=std, lr=cfg.lr)


def run_recursive_training(
    ensemble: Ensemble,
    esde: EstimatedSde,
    system: SlowFastSystem,
    cfg: TrainConfig,
    model: Optional[AutoSdeModel] = None,
) -> Tuple[List[Snapshot], AutoSdeModel, ConvergenceReport]:
    """
    Alternate training and recursive prediction until the ensemble settles.

    After generation ``g`` the final-row snapshot is compared with the one
    of generation ``max(0, g - cfg.distance_lag)``. The loop stops at the
    first ``g >= cfg.distance_lag`` whose energy distance falls below
    ``cfg.tau_dist``, or after ``cfg.max_generations``. Non-convergence is reported in the status and
    with a ``UserWarning``, not raised.

    Returns
    -------
    snapshots : list of Snapshot
        Final-row snapshot of generation 0 (the observed data) and of every
        trained generation
    model : AutoSdeModel
        Model after the last generation (warm-started throughout)
    report : ConvergenceReport
    """
    dataset = make_windows(ensemble)
    cfg.check_window(dataset.m)
    if model is None:
        model = model_for(dataset, ensemble.slow_dim, cfg)

    snapshots = [dataset.last_rows(cfg.l)]
    report = ConvergenceReport(
        "max_generations",
        0,
        time_indices=[snapshots[0].time_index],
        tau_dist=cfg.tau_dist,
        distance_lag=cfg.distance_lag,
    )
    logger.info(
        "Recursive training on %d windows of %dx%d, l=%d, up to %d generations",
        dataset.n_windows, dataset.m, dataset.dim, cfg.l, cfg.max_generations,
    )
    for generation in range(cfg.max_generations):
        model, trace = train_generation(model, dataset, esde, system, cfg)
        dataset = recursive_predict(model, dataset)
        snapshot = dataset.last_rows(cfg.l)
        reference = snapshots[max(0, generation + 1 - cfg.distance_lag)]
        distance = ensemble_distance(
            reference, snapshot, max_points=cfg.distance_max_points, seed=cfg.seed
        )
        snapshots.append(snapshot)
        report.generations = generation + 1
        report.distances.append(distance)
        report.loss_traces.append(trace)
        report.time_indices.append(snapshot.time_index)
        logger.info(
            "generation %d: time index %d, final loss %s, distance %.4g",
            generation + 1, snapshot.time_index, f"{trace[-1]:.4g}" if trace else "n/a", distance,
        )
        if generation + 1 >= cfg.distance_lag and distance < cfg.tau_dist:
            report.status = "converged"
            break

    if not report.converged:
        warnings.warn(
            f"Recursive training did not converge within {cfg.max_generations} generations "
            f"(last distance {report.final_distance:.4g}, tau_dist {cfg.tau_dist}).",
            UserWarning,
            stacklevel=2,
        )
    final_loss = next((trace[-1] for trace in reversed(report.loss_traces) if trace), None)
    model = replace(
        model,
        metadata={
            **model.metadata,
            "l": cfg.l,
            "generations": report.generations,
            "final_loss": final_loss,
            "final_time_index": report.time_indices[-1],
            "status": report.status,
        },
    )
    return snapshots, model, report
