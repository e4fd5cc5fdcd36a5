"""
Slow-manifold fitting, reduced slow SDE and the POD baseline.

A converged snapshot is regressed fast-on-slow with the same thresholded
least squares used for SDE identification. Substituting the fitted graph
``y = h(x)`` into a slow drift (known or identified) gives the reduced
system, which the integrators in ``sde_core`` simulate directly.

Author: F. Herbrand
License: MIT
"""

import logging
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import linalg

from .basis import BasisDictionary, BasisKind, build_dictionary, convert_coefficients, evaluate_basis, term_names
from .km_ident import EstimatedSde, eval_estimated, threshold_fit
from .sde_core import SlowFastSystem, Snapshot, Trajectory, simulate_trajectory, stability_matrix

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ManifoldFit:
    """
    Polynomial graph ``y = h(x)`` of the fast coordinates over the slow ones.

    ``coeffs`` has one row per dictionary term and one column per fast
    coordinate.
    """

    slow_dims: Tuple[int, ...]
    fast_dims: Tuple[int, ...]
    dictionary: BasisDictionary
    coeffs: np.ndarray
    residual_rms: float
    threshold: float = 0.01

    def __post_init__(self) -> None:
        object.__setattr__(self, "slow_dims", tuple(int(d) for d in self.slow_dims))
        object.__setattr__(self, "fast_dims", tuple(int(d) for d in self.fast_dims))
        coeffs = np.asarray(self.coeffs, dtype=np.float64).reshape(self.dictionary.n_terms, len(self.fast_dims))
        if self.dictionary.dim != len(self.slow_dims):
            raise ValueError(
                f"manifold dictionary is over {self.dictionary.dim} variables, "
                f"expected {len(self.slow_dims)} slow variables"
            )
        if not np.all(np.isfinite(coeffs)) or not self.residual_rms >= 0:
            raise ValueError("manifold coefficients must be finite and residual_rms nonnegative")
        object.__setattr__(self, "coeffs", coeffs)

    @property
    def dim(self) -> int:
        return len(self.slow_dims) + len(self.fast_dims)

    def __call__(self, x: np.ndarray) -> np.ndarray:
        """Fast coordinates on the manifold above slow point(s) ``x``."""
        return evaluate_basis(self.dictionary, x) @ self.coeffs

    def lift(self, x: np.ndarray) -> np.ndarray:
        """Full state ``z`` with ``z[slow] = x`` and ``z[fast] = h(x)``."""
        x = np.asarray(x, dtype=np.float64)
        z = np.empty(x.shape[:-1] + (self.dim,))
        z[..., list(self.slow_dims)] = x
        z[..., list(self.fast_dims)] = self(x)
        return z

    def monomial_coeffs(self) -> np.ndarray:
        if self.dictionary.kind is BasisKind.MONOMIAL:
            return self.coeffs
        monomial = build_dictionary(self.dictionary.dim, self.dictionary.degree, BasisKind.MONOMIAL)
        return convert_coefficients(self.dictionary, monomial, self.coeffs)


def fit_manifold(
    snapshot: Snapshot,
    slow_dims: Sequence[int],
    degree: int = 2,
    threshold: float = 0.01,
    kind: Union[str, BasisKind] = "monomial",
    max_sweeps: int = 10,
) -> ManifoldFit:
    """
    Regress every fast coordinate onto a polynomial dictionary in the slow ones.

    Parameters
    ----------
    snapshot : Snapshot
        Points near the invariant manifold
    slow_dims : sequence of int
        Columns treated as slow; all others are fast
    degree : int
        Total degree of the dictionary
    threshold : float
        Coefficients below this magnitude are zeroed and the rest refit

    Returns
    -------
    ManifoldFit

    Raises
    ------
    ValueError
        Fewer points than dictionary terms
    SingularFitError
        Degenerate slow values (for instance all equal)
    """
    points = snapshot.points
    slow_dims = tuple(int(d) for d in slow_dims)
    fast_dims = tuple(d for d in range(points.shape[1]) if d not in slow_dims)
    if not slow_dims or not fast_dims:
        raise ValueError(f"slow_dims {slow_dims} must leave at least one fast column of {points.shape[1]}")
    dictionary = build_dictionary(len(slow_dims), degree, kind)
    if points.shape[0] < dictionary.n_terms:
        raise ValueError(
            f"need at least {dictionary.n_terms} points for a degree-{degree} fit, got {points.shape[0]}"
        )
    features = evaluate_basis(dictionary, points[:, slow_dims])
    targets = points[:, fast_dims]
    coeffs, _ = threshold_fit(features, targets, threshold, max_sweeps, term_names(dictionary))
    residual = float(np.sqrt(np.mean((features @ coeffs - targets) ** 2)))
    logger.info("Fitted manifold of degree %d on %d points: residual rms %.4g", degree, points.shape[0], residual)
    return ManifoldFit(slow_dims, fast_dims, dictionary, coeffs, residual, float(threshold))


@dataclass(frozen=True)
class ReducedSystem:
    """
    Slow SDE ``dx = f(x, h(x)) dt + sigma_slow dW`` on a fitted manifold.

    ``source_drift`` maps full states to slow drift values; ``source`` names
    where it came from for artifacts.
    """

    source_drift: Callable[[np.ndarray], np.ndarray]
    manifold: ManifoldFit
    sigma_slow: np.ndarray
    source: str = "known"
    name: str = "reduced"

    def __post_init__(self) -> None:
        sigma = np.array(self.sigma_slow, dtype=np.float64).reshape(-1)
        if sigma.shape != (self.slow_dim,) or np.any(sigma < 0):
            raise ValueError(f"sigma_slow must be {self.slow_dim} nonnegative values, got {sigma}")
        object.__setattr__(self, "sigma_slow", sigma)

    @property
    def slow_dim(self) -> int:
        return len(self.manifold.slow_dims)

    @property
    def dim(self) -> int:
        return self.slow_dim

    @property
    def noise_scale(self) -> np.ndarray:
        return self.sigma_slow

    def drift(self, x: np.ndarray) -> np.ndarray:
        return self.source_drift(self.manifold.lift(x))


def _known_slow_drift(system: SlowFastSystem) -> Callable[[np.ndarray], np.ndarray]:
    def drift(z: np.ndarray) -> np.ndarray:
        x, y = system.split(z)
        return np.asarray(system.drift_slow(x, y), dtype=np.float64)

    return drift


def _estimated_slow_drift(esde: EstimatedSde) -> Callable[[np.ndarray], np.ndarray]:
    def drift(z: np.ndarray) -> np.ndarray:
        return eval_estimated(esde, z)[0]

    return drift


def estimated_sigma(esde: EstimatedSde) -> np.ndarray:
    """Constant diffusion read off the identified sigma^2 constant term."""
    theta = esde.theta_diff2
    if esde.dictionary.kind is not BasisKind.MONOMIAL:
        monomial = build_dictionary(esde.dictionary.dim, esde.dictionary.degree, BasisKind.MONOMIAL)
        theta = convert_coefficients(esde.dictionary, monomial, theta)
    return np.sqrt(np.maximum(theta[0], 0.0))


def build_reduced(
    source: Union[SlowFastSystem, EstimatedSde],
    manifold: ManifoldFit,
    sigma_slow: Optional[Sequence[float]] = None,
) -> ReducedSystem:
    """
    Compose a slow drift with the manifold graph.

    Parameters
    ----------
    source : SlowFastSystem or EstimatedSde
        Known system or identified slow equations
    manifold : ManifoldFit
        Graph ``y = h(x)``
    sigma_slow : sequence of float, optional
        Additive slow noise; defaults to the system's ``sigma_slow`` or the
        identified constant diffusion

    Raises
    ------
    ValueError
        If the source and the manifold disagree on dimensions
    """
    n_slow = len(manifold.slow_dims)
    if isinstance(source, SlowFastSystem):
        if source.dim != manifold.dim or source.slow_dims != manifold.slow_dims:
            raise ValueError(
                f"system with slow dims {source.slow_dims} does not match manifold slow dims {manifold.slow_dims}"
            )
        drift = _known_slow_drift(source)
        default_sigma = source.sigma_slow
        label = "known"
    elif isinstance(source, EstimatedSde):
        if source.dictionary.dim != manifold.dim or source.identified_dims != manifold.slow_dims:
            raise ValueError(
                f"estimated SDE over dims {source.identified_dims} does not match manifold slow dims {manifold.slow_dims}"
            )
        drift = _estimated_slow_drift(source)
        default_sigma = estimated_sigma(source)
        label = "estimated"
    else:
        raise TypeError(f"unsupported drift source {type(source).__name__}")
    sigma = default_sigma if sigma_slow is None else np.asarray(sigma_slow, dtype=np.float64)
    if np.asarray(sigma).size != n_slow:
        raise ValueError(f"sigma_slow needs {n_slow} entries, got {np.asarray(sigma).size}")
    return ReducedSystem(drift, manifold, sigma, source=label)


def simulate_reduced(
    reduced: ReducedSystem,
    x0: Sequence[float],
    dt: float,
    n_steps: int,
    stream: np.random.Generator,
    substeps: int = 1,
) -> Trajectory:
    """Euler-Maruyama path of the reduced system (slow columns only)."""
    return simulate_trajectory(reduced, x0, dt, n_steps, stream, substeps=substeps)


def pod_basis(snapshots: np.ndarray, d: int) -> Tuple[np.ndarray, np.ndarray]:
    """
    Leading ``d`` left singular vectors of a ``D x m`` snapshot matrix.

    Returns
    -------
    basis : ndarray
        ``(D, d)`` with orthonormal columns
    singular_values : ndarray
        All singular values, descending

    Raises
    ------
    ValueError
        If ``d`` is outside ``[1, min(D, m)]``
    """
    snapshots = np.asarray(snapshots, dtype=np.float64)
    if snapshots.ndim != 2:
        raise ValueError(f"snapshot matrix must be 2-D, got shape {snapshots.shape}")
    if not 1 <= d <= min(snapshots.shape):
        raise ValueError(f"d must lie in [1, {min(snapshots.shape)}], got {d}")
    U, s, _ = linalg.svd(snapshots, full_matrices=False)
    return U[:, :d], s


def pod_reconstruction_error(snapshots: np.ndarray, basis: np.ndarray) -> float:
    """Squared Frobenius norm of ``Z - Phi Phi^T Z``."""
    snapshots = np.asarray(snapshots, dtype=np.float64)
    residual = snapshots - basis @ (basis.T @ snapshots)
    return float(np.sum(residual**2))


def manifold_residual_report(
    fit: ManifoldFit,
    points: np.ndarray,
    reference: Optional[Callable[[np.ndarray], np.ndarray]] = None,
    system: Optional[SlowFastSystem] = None,
) -> Dict[str, Any]:
    """
    Residual statistics of a manifold fit on ``points``.

    With ``reference`` (an analytic manifold) the deviation of the fit from
    it is reported; with ``system`` the largest real part of the fast
    stability matrix along the fitted graph is added, which is negative
    where the manifold attracts.
    """
    points = np.asarray(points, dtype=np.float64)
    x = points[:, list(fit.slow_dims)]
    residual = fit(x) - points[:, list(fit.fast_dims)]
    report: Dict[str, Any] = {
        "n_points": int(points.shape[0]),
        "residual_rms": float(np.sqrt(np.mean(residual**2))),
        "residual_max": float(np.max(np.abs(residual))),
        "terms": term_names(fit.dictionary),
        "coefficients": fit.monomial_coeffs().tolist(),
    }
    if reference is not None:
        deviation = fit(x) - np.asarray(reference(x)).reshape(x.shape[0], -1)
        report["reference_rms"] = float(np.sqrt(np.mean(deviation**2)))
    if system is not None:
        worst = -np.inf
        for xi in x[: min(200, x.shape[0])]:
            eigenvalues = np.linalg.eigvals(stability_matrix(system, xi, fit))
            worst = max(worst, float(np.max(eigenvalues.real)))
        report["max_stability_eigenvalue"] = worst
    return report
