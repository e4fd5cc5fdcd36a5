"""
autosde - learning reduced stochastic dynamics of slow-fast systems.

Short bursts of a multiscale SDE are turned into an identified slow SDE, an
autoencoder-LSTM that extends the bursts to long times, a polynomial slow
manifold and finally a reduced slow-only SDE that is checked against the
full system.

🎯 **Key Features:**
    - Seeded, block-parallel Euler-Maruyama ensembles with blow-up handling
    - Kramers-Moyal targets with sequentially thresholded least squares
    - From-scratch autoencoder-LSTM with analytic gradients and ADAM
    - Recursive training until the extended ensemble stops moving
    - Slow manifold fit, reduced SDE and distribution comparisons
    - Versioned JSON/CSV artifacts for every stage

🚀 **Quick Start:**
    >>> import autosde as asd
    >>> system = asd.parabolic_system()
    >>> sampler = asd.InitSampler(((-5.0, 5.0), (-6.0, 6.0)))
    >>> ens = asd.simulate_ensemble(system, sampler, n_traj=8, dt=1e-3, n_steps=10, seed=1)
    >>> ens.states.shape
    (8, 11, 2)

⚙️ **Requirements:**
    - Python 3.8+
    - numpy, scipy, pyyaml, packaging

📧 **Author:** F. Herbrand
📄 **License:** MIT
"""

from .basis import BasisDictionary, BasisKind, build_dictionary, convert_coefficients, evaluate_basis, term_names
from .config import ExperimentConfig, build_system, config_hash, load_config
from .errors import (
    ArtifactError,
    AutoSdeError,
    ConfigError,
    IntegrationBlowupError,
    NumericalOverflowError,
    SchemaVersionError,
    SingularFitError,
)
from .evaluate import compare_distributions, ks_statistic, noise_sweep, track_trajectory
from .km_ident import (
    EstimatedSde,
    build_km_targets,
    eval_estimated,
    fit_sde,
    identification_table,
    print_identification_report,
    threshold_fit,
)
from .main import __author__, __license__, __version__, main
from .manifold import ManifoldFit, ReducedSystem, build_reduced, fit_manifold, pod_basis, simulate_reduced
from .neural import Architecture, AutoSdeModel, adam_step, forward, gradient_check, init_model, predict
from .sde_core import (
    Ensemble,
    InitSampler,
    SlowFastSystem,
    Snapshot,
    coarse_grain,
    euler_maruyama_step,
    parabolic_manifold,
    parabolic_system,
    polynomial_system,
    saddle_manifold,
    saddle_system,
    simulate_ensemble,
    simulate_trajectory,
    snapshot_at,
)
from .training import TrainConfig, ensemble_distance, run_recursive_training, sde_extension

__all__ = [
    # Systems and simulation
    "SlowFastSystem",
    "Ensemble",
    "Snapshot",
    "InitSampler",
    "parabolic_system",
    "parabolic_manifold",
    "saddle_system",
    "saddle_manifold",
    "polynomial_system",
    "euler_maruyama_step",
    "simulate_trajectory",
    "simulate_ensemble",
    "coarse_grain",
    "snapshot_at",
    # Identification
    "BasisKind",
    "BasisDictionary",
    "build_dictionary",
    "evaluate_basis",
    "term_names",
    "convert_coefficients",
    "EstimatedSde",
    "build_km_targets",
    "threshold_fit",
    "fit_sde",
    "eval_estimated",
    "identification_table",
    "print_identification_report",
    # Network and training
    "Architecture",
    "AutoSdeModel",
    "init_model",
    "forward",
    "predict",
    "adam_step",
    "gradient_check",
    "TrainConfig",
    "sde_extension",
    "ensemble_distance",
    "run_recursive_training",
    # Reduction and evaluation
    "ManifoldFit",
    "ReducedSystem",
    "fit_manifold",
    "build_reduced",
    "simulate_reduced",
    "pod_basis",
    "ks_statistic",
    "compare_distributions",
    "track_trajectory",
    "noise_sweep",
    # Configuration
    "ExperimentConfig",
    "load_config",
    "build_system",
    "config_hash",
    # Errors
    "AutoSdeError",
    "IntegrationBlowupError",
    "SingularFitError",
    "NumericalOverflowError",
    "SchemaVersionError",
    "ConfigError",
    "ArtifactError",
    # Package info
    "main",
    "__version__",
    "__author__",
    "__license__",
]
