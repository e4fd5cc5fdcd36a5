"""
Kramers-Moyal identification of drift and squared diffusion.

Short-term ensemble data is turned into finite-difference targets
(increment over dt for the drift, squared increment over dt for sigma^2),
which are regressed onto a polynomial dictionary evaluated at the left end of
each pair. Sparsity comes from sequentially thresholded least squares: every
coefficient below the threshold is zeroed and the survivors are refit until
the support stops changing.

Key Functions:
    - build_km_targets(): Pool difference-quotient targets over an ensemble
    - fit_sde(): Thresholded least squares for both coefficient matrices
    - eval_estimated(): Drift and clamped diffusion of an EstimatedSde
    - identification_table(): Coefficients per term in the monomial basis

Author: F. Herbrand
License: MIT
"""

import logging
import warnings
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import linalg

from .basis import BasisDictionary, BasisKind, build_dictionary, convert_coefficients, evaluate_basis, term_names
from .errors import SingularFitError
from .sde_core import Ensemble

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class KmTargets:
    """Feature matrix and Kramers-Moyal targets pooled over all consecutive pairs."""

    features: np.ndarray
    drift_targets: np.ndarray
    diff_targets: np.ndarray
    identified_dims: Tuple[int, ...]
    dictionary: BasisDictionary

    def __post_init__(self) -> None:
        n = self.features.shape[0]
        if self.drift_targets.shape[0] != n or self.diff_targets.shape[0] != n:
            raise ValueError("features and targets must have the same number of rows")

    @property
    def n_pairs(self) -> int:
        return self.features.shape[0]


@dataclass(frozen=True)
class EstimatedSde:
    """
    Identified drift and squared-diffusion coefficients.

    Attributes
    ----------
    dictionary : BasisDictionary
        Features over the full state
    theta_drift, theta_diff2 : ndarray
        Shape ``(n_terms, len(identified_dims))``
    identified_dims : tuple of int
        State coordinates whose equations were fit
    threshold : float
        Hard-threshold level used by the sweep
    diagnostics : dict
        ``L_drift``, ``L_diffusion``, ``n_pairs``, ``sweeps`` and the loss history
    """

    dictionary: BasisDictionary
    theta_drift: np.ndarray
    theta_diff2: np.ndarray
    identified_dims: Tuple[int, ...]
    threshold: float = 0.05
    diagnostics: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        shape = (self.dictionary.n_terms, len(self.identified_dims))
        theta_drift = np.asarray(self.theta_drift, dtype=np.float64).reshape(shape)
        theta_diff2 = np.asarray(self.theta_diff2, dtype=np.float64).reshape(shape)
        if not (np.all(np.isfinite(theta_drift)) and np.all(np.isfinite(theta_diff2))):
            raise ValueError("estimated coefficients must be finite")
        object.__setattr__(self, "theta_drift", theta_drift)
        object.__setattr__(self, "theta_diff2", theta_diff2)
        object.__setattr__(self, "identified_dims", tuple(int(d) for d in self.identified_dims))

    def drift(self, z: np.ndarray) -> np.ndarray:
        return eval_estimated(self, z)[0]


def _first_pass_drift(features: np.ndarray, drift_targets: np.ndarray) -> np.ndarray:
    coeffs, _, _, _ = linalg.lstsq(features, drift_targets)
    return features @ coeffs


def build_km_targets(
    ensemble: Ensemble,
    dictionary: BasisDictionary,
    identified_dims: Optional[Sequence[int]] = None,
    drift_corrected: bool = False,
) -> KmTargets:
    """
    Assemble one target row per consecutive time pair of every trajectory.

    Parameters
    ----------
    ensemble : Ensemble
        Short-term data with at least two rows per trajectory
    dictionary : BasisDictionary
        Features over the full state ``z = (x, y)``
    identified_dims : sequence of int, optional
        Coordinates to fit; defaults to the slow block
    drift_corrected : bool
        Subtract a first-pass drift estimate from the increments before
        squaring, which removes the ``f^2 dt`` bias of the raw second moment

    Returns
    -------
    KmTargets

    Raises
    ------
    ValueError
        Fewer than two time rows, or a dictionary over the wrong dimension
    """
    if ensemble.states.shape[1] < 2:
        raise ValueError("Kramers-Moyal targets need at least two time rows per trajectory")
    if dictionary.dim != ensemble.dim:
        raise ValueError(
            f"dictionary is over {dictionary.dim} variables, ensemble state has {ensemble.dim}"
        )
    if identified_dims is None:
        identified_dims = tuple(range(ensemble.slow_dim))
    identified_dims = tuple(int(d) for d in identified_dims)
    if not identified_dims or any(not 0 <= d < ensemble.dim for d in identified_dims):
        raise ValueError(f"identified_dims {identified_dims} out of range for dimension {ensemble.dim}")

    left = ensemble.states[:, :-1].reshape(-1, ensemble.dim)
    right = ensemble.states[:, 1:].reshape(-1, ensemble.dim)
    increments = (right - left)[:, identified_dims]
    dt = ensemble.dt

    features = evaluate_basis(dictionary, left)
    drift_targets = increments / dt
    if drift_corrected:
        increments = increments - _first_pass_drift(features, drift_targets) * dt
    diff_targets = increments**2 / dt

    logger.debug(
        "Built %d Kramers-Moyal target rows with %d features", features.shape[0], dictionary.n_terms
    )
    return KmTargets(features, drift_targets, diff_targets, identified_dims, dictionary)


def _mean_square(features: np.ndarray, coeffs: np.ndarray, targets: np.ndarray) -> float:
    return float(np.mean((features @ coeffs - targets) ** 2))


def _solve(features: np.ndarray, targets: np.ndarray, support: np.ndarray, names: List[str]) -> np.ndarray:
    coeffs = np.zeros(features.shape[1])
    columns = np.flatnonzero(support)
    if columns.size == 0:
        return coeffs
    solution, _, rank, _ = linalg.lstsq(features[:, columns], targets)
    if rank < columns.size:
        raise SingularFitError(
            "Rank-deficient feature matrix on the surviving support",
            terms=[names[c] for c in columns],
        )
    coeffs[columns] = solution
    return coeffs


def threshold_fit(
    features: np.ndarray,
    targets: np.ndarray,
    threshold: float,
    max_sweeps: int = 10,
    names: Optional[List[str]] = None,
) -> Tuple[np.ndarray, List[Dict[str, float]]]:
    """
    Sequentially thresholded least squares for each target column.

    Returns the coefficient matrix and, per sweep, the mean-square loss right
    after zeroing and after refitting on the surviving support.
    """
    if threshold < 0:
        raise ValueError(f"threshold must be nonnegative, got {threshold}")
    n_terms = features.shape[1]
    names = names or [f"term{k}" for k in range(n_terms)]
    targets = np.asarray(targets, dtype=np.float64).reshape(features.shape[0], -1)

    coeffs = np.column_stack(
        [_solve(features, targets[:, j], np.ones(n_terms, dtype=bool), names) for j in range(targets.shape[1])]
    )
    history = [{"zeroed": _mean_square(features, coeffs, targets), "refit": _mean_square(features, coeffs, targets)}]

    support = np.ones(coeffs.shape, dtype=bool)
    for _ in range(max_sweeps):
        previous, support = support, np.abs(coeffs) >= threshold
        if np.array_equal(support, previous):
            break
        zeroed = np.where(support, coeffs, 0.0)
        refit = np.column_stack(
            [_solve(features, targets[:, j], support[:, j], names) for j in range(targets.shape[1])]
        )
        history.append(
            {"zeroed": _mean_square(features, zeroed, targets), "refit": _mean_square(features, refit, targets)}
        )
        coeffs = refit
    return coeffs, history


def fit_sde(targets: KmTargets, threshold: float = 0.05, max_sweeps: int = 10) -> EstimatedSde:
    """
    Fit drift and sigma^2 coefficients by thresholded least squares.

    Parameters
    ----------
    targets : KmTargets
        Output of ``build_km_targets``
    threshold : float
        Coefficients with magnitude below this are set to exactly zero
    max_sweeps : int
        Upper bound on zero-and-refit sweeps

    Returns
    -------
    EstimatedSde

    Raises
    ------
    ValueError
        If there are not more target rows than dictionary terms
    SingularFitError
        If the surviving feature columns are linearly dependent

    Notes
    -----
    Negative sigma^2 values at data points are possible with sampling noise;
    they trigger a ``UserWarning`` and are clamped to zero on evaluation.
    """
    n_terms = targets.dictionary.n_terms
    if targets.n_pairs <= n_terms:
        raise ValueError(
            f"need more target rows ({targets.n_pairs}) than dictionary terms ({n_terms})"
        )
    names = term_names(targets.dictionary)
    theta_drift, drift_history = threshold_fit(
        targets.features, targets.drift_targets, threshold, max_sweeps, names
    )
    theta_diff2, diff_history = threshold_fit(
        targets.features, targets.diff_targets, threshold, max_sweeps, names
    )

    diagnostics = {
        "L_drift": _mean_square(targets.features, theta_drift, targets.drift_targets),
        "L_diffusion": _mean_square(targets.features, theta_diff2, targets.diff_targets),
        "n_pairs": targets.n_pairs,
        "drift_history": drift_history,
        "diffusion_history": diff_history,
    }
    sigma2_at_data = targets.features @ theta_diff2
    n_negative = int(np.count_nonzero(sigma2_at_data < 0))
    if n_negative:
        warnings.warn(
            f"Estimated sigma^2 is negative at {n_negative} of {sigma2_at_data.size} data points; "
            f"values are clamped to 0 on evaluation.",
            UserWarning,
            stacklevel=2,
        )
    logger.info(
        "Identified SDE on %d pairs: L_drift=%.4g, L_diffusion=%.4g",
        targets.n_pairs, diagnostics["L_drift"], diagnostics["L_diffusion"],
    )
    return EstimatedSde(
        targets.dictionary, theta_drift, theta_diff2, targets.identified_dims, float(threshold), diagnostics
    )


def eval_estimated(esde: EstimatedSde, z: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """
    Drift ``theta_drift^T Theta(z)`` and diffusion ``sqrt(max(theta_diff2^T Theta(z), 0))``.

    ``z`` may be a single state or a batch ``(..., N)``; a single state
    yields vectors of length ``len(identified_dims)``.
    """
    features = evaluate_basis(esde.dictionary, z)
    drift = features @ esde.theta_drift
    sigma = np.sqrt(np.maximum(features @ esde.theta_diff2, 0.0))
    return drift, sigma


def identification_table(
    esde: EstimatedSde, var_names: Optional[Sequence[str]] = None
) -> Tuple[List[str], List[List[Any]]]:
    """
    Coefficients per basis term, reported in the monomial basis.

    Returns
    -------
    header : list of str
        ``term``, then ``drift_<var>`` and ``sigma2_<var>`` (squared diffusion) per identified coordinate
    rows : list of list
        One row per term: its name followed by the learnt drift and sigma^2 coefficients
    """
    dictionary = esde.dictionary
    theta_drift, theta_diff2 = esde.theta_drift, esde.theta_diff2
    if dictionary.kind is not BasisKind.MONOMIAL:
        monomial = build_dictionary(dictionary.dim, dictionary.degree, BasisKind.MONOMIAL)
        theta_drift = convert_coefficients(dictionary, monomial, theta_drift)
        theta_diff2 = convert_coefficients(dictionary, monomial, theta_diff2)
        dictionary = monomial
    if var_names is None:
        var_names = [f"z{i + 1}" for i in range(dictionary.dim)]
    header = ["term"]
    for d in esde.identified_dims:
        header += [f"drift_{var_names[d]}", f"sigma2_{var_names[d]}"]
    rows = []
    for k, name in enumerate(term_names(dictionary, var_names)):
        row: List[Any] = [name]
        for j in range(len(esde.identified_dims)):
            row += [float(theta_drift[k, j]), float(theta_diff2[k, j])]
        rows.append(row)
    return header, rows


def print_identification_report(esde: EstimatedSde, var_names: Optional[Sequence[str]] = None) -> None:
    """Print the identified coefficients as an aligned table."""
    header, rows = identification_table(esde, var_names)
    print("🔍 Identified SDE coefficients")
    print("=" * 40)
    print("  ".join(f"{h:>14}" for h in header))
    for row in rows:
        cells = [f"{row[0]:>14}"] + [f"{v:>14.4f}" for v in row[1:]]
        print("  ".join(cells))
    constant = rows[0]
    sigmas = [
        f"sigma_{name.removeprefix('sigma2_')}={np.sqrt(max(constant[col], 0.0)):.4f}"
        for col, name in enumerate(header) if name.startswith("sigma2_")
    ]
    print("📐 constant diffusion: " + "  ".join(sigmas))
    diag = esde.diagnostics
    if diag:
        print(
            f"📊 pairs={diag.get('n_pairs')}  L_drift={diag.get('L_drift', float('nan')):.4g}  "
            f"L_diffusion={diag.get('L_diffusion', float('nan')):.4g}"
        )
