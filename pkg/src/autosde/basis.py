"""
Multivariate polynomial dictionaries.

A ``BasisDictionary`` is the feature set used both for SDE identification and
for manifold fitting. Terms are multi-indices in graded order: all terms of
total degree 0, then degree 1, and so on, each degree block in the order
``itertools.combinations_with_replacement`` produces over the variables. For
two variables and degree 2 this yields ``1, x, y, x^2, xy, y^2``.

Two kinds are supported: plain monomials and products of probabilists'
Hermite polynomials ``He_n`` (``He_{n+1} = x He_n - n He_{n-1}``).

Author: F. Herbrand
License: MIT
"""

from dataclasses import dataclass
from enum import Enum
from itertools import combinations_with_replacement
from math import comb
from typing import List, Optional, Sequence, Tuple

import numpy as np
from numpy.polynomial import hermite_e


class BasisKind(Enum):
    """Family of univariate factors a dictionary is built from."""

    MONOMIAL = "monomial"
    HERMITE = "hermite"


@dataclass(frozen=True)
class BasisDictionary:
    """
    Ordered set of multivariate polynomial terms.

    Attributes
    ----------
    dim : int
        Number of variables D
    degree : int
        Maximal total degree d
    kind : BasisKind
        Monomial or probabilists' Hermite factors
    terms : tuple of tuple of int
        Multi-indices, ``C(D + d, d)`` of them, the first one all zeros
    """

    dim: int
    degree: int
    kind: BasisKind
    terms: Tuple[Tuple[int, ...], ...]

    def __post_init__(self) -> None:
        if isinstance(self.kind, str):
            object.__setattr__(self, "kind", BasisKind(self.kind))
        terms = tuple(tuple(int(a) for a in term) for term in self.terms)
        object.__setattr__(self, "terms", terms)
        if len(terms) != comb(self.dim + self.degree, self.degree):
            raise ValueError(
                f"dictionary of dim {self.dim} and degree {self.degree} needs "
                f"{comb(self.dim + self.degree, self.degree)} terms, got {len(terms)}"
            )

    @property
    def n_terms(self) -> int:
        return len(self.terms)

    @property
    def exponents(self) -> np.ndarray:
        """Multi-indices as an integer matrix of shape ``(n_terms, dim)``."""
        return np.array(self.terms, dtype=np.int64).reshape(self.n_terms, self.dim)


def graded_terms(dim: int, degree: int) -> List[Tuple[int, ...]]:
    """All multi-indices with ``|alpha| <= degree`` in graded order."""
    terms: List[Tuple[int, ...]] = []
    for total in range(degree + 1):
        for combo in combinations_with_replacement(range(dim), total):
            alpha = [0] * dim
            for var in combo:
                alpha[var] += 1
            terms.append(tuple(alpha))
    return terms


def build_dictionary(dim: int, degree: int, kind="monomial") -> BasisDictionary:
    """
    Build the graded dictionary of all terms up to ``degree`` in ``dim`` variables.

    Parameters
    ----------
    dim : int
        Number of variables, at least 1
    degree : int
        Maximal total degree, at least 0
    kind : BasisKind or str
        ``"monomial"`` or ``"hermite"``

    Returns
    -------
    BasisDictionary

    Examples
    --------
    >>> d = build_dictionary(2, 2)
    >>> term_names(d, ["x", "y"])
    ['1', 'x', 'y', 'x^2', 'x*y', 'y^2']
    """
    if dim < 1:
        raise ValueError(f"dim must be >= 1, got {dim}")
    if degree < 0:
        raise ValueError(f"degree must be >= 0, got {degree}")
    return BasisDictionary(dim, degree, BasisKind(kind), tuple(graded_terms(dim, degree)))


def _univariate_table(values: np.ndarray, degree: int, kind: BasisKind) -> np.ndarray:
    """Powers or Hermite values ``P_k(values)`` for k = 0..degree, stacked on a new last axis."""
    table = np.empty(values.shape + (degree + 1,))
    table[..., 0] = 1.0
    if degree >= 1:
        table[..., 1] = values
    for k in range(1, degree):
        if kind is BasisKind.MONOMIAL:
            table[..., k + 1] = table[..., k] * values
        else:
            table[..., k + 1] = values * table[..., k] - k * table[..., k - 1]
    return table


def evaluate_basis(dictionary: BasisDictionary, points: np.ndarray) -> np.ndarray:
    """
    Evaluate every term at one point or a batch of points.

    Parameters
    ----------
    dictionary : BasisDictionary
        Feature set
    points : ndarray
        Shape ``(dim,)`` or ``(..., dim)``

    Returns
    -------
    ndarray
        Shape ``(n_terms,)`` or ``(..., n_terms)``, dictionary order

    Raises
    ------
    ValueError
        If the trailing axis does not match ``dictionary.dim``
    """
    points = np.asarray(points, dtype=np.float64)
    if points.ndim == 0 or points.shape[-1] != dictionary.dim:
        raise ValueError(
            f"points must have trailing dimension {dictionary.dim}, got shape {points.shape}"
        )
    # tables[..., var, k] = P_k(point[var])
    tables = _univariate_table(points, dictionary.degree, dictionary.kind)
    exponents = dictionary.exponents
    out = np.ones(points.shape[:-1] + (dictionary.n_terms,))
    for var in range(dictionary.dim):
        out *= tables[..., var, :][..., exponents[:, var]]
    return out


def term_names(dictionary: BasisDictionary, var_names: Optional[Sequence[str]] = None) -> List[str]:
    """
    Human-readable term labels such as ``x*y`` or ``He2(x)``.

    Default variable names are ``z1..zD``.
    """
    if var_names is None:
        var_names = [f"z{i + 1}" for i in range(dictionary.dim)]
    if len(var_names) != dictionary.dim:
        raise ValueError(f"expected {dictionary.dim} variable names, got {len(var_names)}")
    names = []
    for term in dictionary.terms:
        factors = []
        for name, power in zip(var_names, term):
            if power == 0:
                continue
            if dictionary.kind is BasisKind.HERMITE:
                factors.append(f"He{power}({name})")
            else:
                factors.append(name if power == 1 else f"{name}^{power}")
        names.append("*".join(factors) if factors else "1")
    return names


def _change_of_basis(dictionary: BasisDictionary, to_kind: BasisKind) -> np.ndarray:
    """
    Matrix ``M`` with ``coeffs_to = M @ coeffs_from``.

    Both kinds are tensor products of univariate families, so each
    term maps onto the product of its univariate conversions, which stays
    inside the dictionary because conversion never raises a degree.
    """
    convert = hermite_e.herme2poly if to_kind is BasisKind.MONOMIAL else hermite_e.poly2herme
    index = {term: k for k, term in enumerate(dictionary.terms)}
    univariate = []
    for n in range(dictionary.degree + 1):
        unit = np.zeros(n + 1)
        unit[n] = 1.0
        univariate.append(np.asarray(convert(unit), dtype=np.float64))

    matrix = np.zeros((dictionary.n_terms, dictionary.n_terms))
    for col, term in enumerate(dictionary.terms):
        # Expand the product of per-variable coefficient vectors.
        expansion = {(): 1.0}
        for power in term:
            coefficients = univariate[power]
            expansion = {
                prefix + (j,): value * c
                for prefix, value in expansion.items()
                for j, c in enumerate(coefficients)
                if c != 0.0
            }
        for target, value in expansion.items():
            matrix[index[target], col] += value
    return matrix


def convert_coefficients(
    from_dict: BasisDictionary, to_dict: BasisDictionary, coeffs: np.ndarray
) -> np.ndarray:
    """
    Re-express coefficients of one dictionary in another of the same shape.

    ``coeffs`` may be a vector of length ``n_terms`` or a matrix with
    ``n_terms`` rows (one column per output coordinate).

    Raises
    ------
    ValueError
        If the dictionaries differ in dim or degree
    """
    if from_dict.dim != to_dict.dim or from_dict.degree != to_dict.degree:
        raise ValueError(
            f"cannot convert between dictionaries (dim {from_dict.dim}, degree {from_dict.degree}) "
            f"and (dim {to_dict.dim}, degree {to_dict.degree})"
        )
    coeffs = np.asarray(coeffs, dtype=np.float64)
    if coeffs.shape[0] != from_dict.n_terms:
        raise ValueError(
            f"coefficient array has {coeffs.shape[0]} rows, dictionary has {from_dict.n_terms} terms"
        )
    if from_dict.kind is to_dict.kind:
        return coeffs.copy()
    return _change_of_basis(from_dict, to_dict.kind) @ coeffs
