"""
Exception hierarchy for autosde.

Every error raised deliberately by the package derives from ``AutoSdeError``
so callers (and the CLI) can separate pipeline failures from programming
errors. Precondition violations additionally subclass ``ValueError``.

Author: F. Herbrand
License: MIT
"""

from typing import Any, Optional, Sequence

import numpy as np


class AutoSdeError(Exception):
    """Base class for all autosde errors."""


class IntegrationBlowupError(AutoSdeError, ArithmeticError):
    """
    Raised when an Euler-Maruyama integration leaves the finite range.

    Parameters
    ----------
    message : str
        Human-readable description
    state : ndarray, optional
        The offending state vector
    step_index : int, optional
        Index of the (outer) step at which the blow-up was detected
    trajectory_index : int, optional
        Ensemble member that diverged, if known
    """

    def __init__(
        self,
        message: str,
        state: Optional[np.ndarray] = None,
        step_index: Optional[int] = None,
        trajectory_index: Optional[int] = None,
    ) -> None:
        self.state = None if state is None else np.array(state, copy=True)
        self.step_index = step_index
        self.trajectory_index = trajectory_index
        details = []
        if trajectory_index is not None:
            details.append(f"trajectory {trajectory_index}")
        if step_index is not None:
            details.append(f"step {step_index}")
        if self.state is not None:
            details.append(f"state {np.array2string(self.state, precision=4)}")
        suffix = f" ({', '.join(details)})" if details else ""
        super().__init__(f"{message}{suffix}")

    def with_trajectory(self, trajectory_index: int) -> "IntegrationBlowupError":
        """Return a copy of this error annotated with a trajectory index."""
        return IntegrationBlowupError(
            "Integration blow-up",
            state=self.state,
            step_index=self.step_index,
            trajectory_index=trajectory_index,
        )


class SingularFitError(AutoSdeError, np.linalg.LinAlgError):
    """Raised when a least-squares fit has a rank-deficient design matrix."""

    def __init__(self, message: str, terms: Sequence[str] = ()) -> None:
        self.terms = tuple(terms)
        if self.terms:
            message = f"{message}; surviving terms: {', '.join(self.terms)}"
        super().__init__(message)


class NumericalOverflowError(AutoSdeError, ArithmeticError):
    """Raised when network activations or losses become non-finite."""


class SchemaVersionError(AutoSdeError, ValueError):
    """Raised when an artifact carries an unsupported schema version."""

    def __init__(self, kind: str, expected: str, found: Any) -> None:
        self.kind = kind
        self.expected = expected
        self.found = found
        super().__init__(
            f"Unsupported {kind} schema version: expected {expected}, found {found}"
        )


class ConfigError(AutoSdeError, ValueError):
    """Raised for missing, unknown or invalid configuration fields."""

    def __init__(self, field: str, message: str) -> None:
        self.field = field
        super().__init__(f"{field}: {message}")


class ArtifactError(AutoSdeError, OSError):
    """Raised when a stage artifact is missing, truncated or malformed."""
