"""Orthonormal shifted Legendre polynomials on the unit cube.

The univariate polynomials are orthonormal with respect to Lebesgue measure
on ``[0, 1]``, so ``P_n(1) = sqrt(2n + 1)``. Tensor products over a
multi-index set give an orthonormal basis of the corresponding downward
closed polynomial space on ``[0, 1]^d``.

Gauss quadrature is provided only as a verification tool.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from .indexsets import DownwardClosedSet, MultiIndex
from .validation import check_points


class DomainError(ValueError):
    """Evaluation point outside the unit cube."""


def legendre_table(n: int, x: np.ndarray) -> np.ndarray:
    r"""Evaluate ``P_0, ..., P_n`` at the points ``x``.

    Uses the three-term recurrence for the classical Legendre polynomials on
    the shifted variable ``t = 2x - 1`` and rescales column ``k`` by
    ``sqrt(2k + 1)``.

    Args:
        n: Maximal degree.
        x: Points in ``[0, 1]`` of any shape.

    Returns:
        Array of shape ``x.shape + (n + 1,)``.
    """
    x = np.asarray(x, dtype=float)
    t = 2.0 * x - 1.0
    out = np.empty(x.shape + (n + 1,))
    out[..., 0] = 1.0
    if n >= 1:
        out[..., 1] = t
    for k in range(1, n):
        out[..., k + 1] = ((2 * k + 1) * t * out[..., k] - k * out[..., k - 1]) / (k + 1)
    out *= np.sqrt(2.0 * np.arange(n + 1) + 1.0)
    return out


def eval_univariate(n: int, x: float) -> float:
    """Orthonormal shifted Legendre polynomial of degree ``n`` at ``x``."""
    if n < 0:
        raise ValueError("degree must be non-negative")
    if not 0.0 <= x <= 1.0:
        raise DomainError(f"x={x} outside [0, 1]")
    return float(legendre_table(n, np.asarray(x))[n])


def eval_tensor(eta: Sequence[int], y: Sequence[float]) -> float:
    """Tensor product ``prod_j P_{eta_j}(y_j)``."""
    if len(eta) != len(y):
        raise ValueError(f"dimension mismatch: index {len(eta)}, point {len(y)}")
    out = 1.0
    for n, x in zip(eta, y):
        out *= eval_univariate(int(n), float(x))
    return out


class TensorLegendreBasis:
    """Ordered tensor Legendre basis of a polynomial space.

    The enumeration is the lexicographic member order of the index set, so
    coefficient vectors of fits on the same set are directly comparable.
    """

    def __init__(self, exponents: DownwardClosedSet | Sequence[MultiIndex], dim: int | None = None):
        if isinstance(exponents, DownwardClosedSet):
            dim = exponents.dim
            exps = list(exponents)
        else:
            exps = [tuple(int(v) for v in e) for e in exponents]
            if dim is None:
                if not exps:
                    raise ValueError("dimension is required for an empty basis")
                dim = len(exps[0])
        if len(set(exps)) != len(exps):
            raise ValueError("duplicate exponents")
        self.dim = int(dim)
        self.exponents = np.array(exps, dtype=int).reshape(len(exps), self.dim)

    def __len__(self) -> int:
        return len(self.exponents)

    def evaluate(self, Y: np.ndarray) -> np.ndarray:
        """Basis functions at the rows of ``Y``; shape ``(n_points, n_basis)``.

        Per-coordinate univariate tables are computed once up to the largest
        degree used in that coordinate.
        """
        Y = np.atleast_2d(np.asarray(Y, dtype=float))
        out = np.ones((Y.shape[0], len(self)))
        if len(self) == 0:
            return out
        for j in range(self.dim):
            col = self.exponents[:, j]
            top = int(col.max())
            if top == 0:
                continue
            table = legendre_table(top, Y[:, j])
            out *= table[:, col]
        return out

    def sum_of_squares(self, Y: np.ndarray, chunk: int = 20000) -> np.ndarray:
        """``sum_eta P_eta(y)^2`` at every row of ``Y``."""
        Y = np.atleast_2d(np.asarray(Y, dtype=float))
        out = np.empty(Y.shape[0])
        for s in range(0, Y.shape[0], chunk):
            B = self.evaluate(Y[s:s + chunk])
            out[s:s + chunk] = np.einsum("ij,ij->i", B, B)
        return out


class LegendreFeatures(TransformerMixin, BaseEstimator):
    """Expand points in ``[0, 1]^d`` into tensor Legendre features.

    Parameters
    ----------
    degree : int, default=2
        Total degree of the feature space, used when ``index_set`` is None.
    index_set : DownwardClosedSet, optional
        Explicit exponent set.
    """

    def __init__(self, degree: int = 2, index_set: DownwardClosedSet | None = None):
        self.degree = degree
        self.index_set = index_set

    def fit(self, X, y=None):
        from .indexsets import total_degree_set

        X = check_points(X)
        self.n_features_in_ = X.shape[1]
        space = self.index_set if self.index_set is not None else \
            total_degree_set(X.shape[1], self.degree)
        if space.dim != X.shape[1]:
            raise ValueError(f"index set has dimension {space.dim}, X has {X.shape[1]}")
        self.basis_ = TensorLegendreBasis(space)
        return self

    def transform(self, X):
        from sklearn.utils.validation import check_is_fitted

        check_is_fitted(self, "basis_")
        X = check_points(X, dim=self.n_features_in_)
        return self.basis_.evaluate(X)


@dataclass(frozen=True)
class QuadratureRule:
    """Tensor quadrature rule on ``[0, 1]^d`` with weights summing to one."""

    nodes: np.ndarray
    weights: np.ndarray
    degree: int

    def integrate(self, values: np.ndarray) -> float:
        return float(np.dot(self.weights, values))


def gauss_rule(d: int, q: int) -> QuadratureRule:
    """Tensor Gauss-Legendre rule with ``q`` points per axis.

    Exact for polynomials of degree ``<= 2q - 1`` in each coordinate.
    """
    if q < 1 or d < 1:
        raise ValueError("need d >= 1 and q >= 1")
    x, w = np.polynomial.legendre.leggauss(q)
    x = (x + 1.0) / 2.0
    w = w / 2.0
    grids = np.meshgrid(*([x] * d), indexing="ij")
    nodes = np.stack([g.ravel() for g in grids], axis=1)
    wgrids = np.meshgrid(*([w] * d), indexing="ij")
    weights = np.prod(np.stack([g.ravel() for g in wgrids], axis=1), axis=1)
    return QuadratureRule(nodes=nodes, weights=weights, degree=2 * q - 1)
