"""Weighted discrete least-squares projection onto polynomial spaces.

The Gramian ``G = M^T M`` of the scaled design matrix
``M_ij = sqrt(w_i / N) P_j(y_i)`` is never formed: both the spectral
deviation ``||G - I||`` and the normal-equation solve work through products
``M^T (M x)`` only.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.sparse.linalg as spla
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_is_fitted

from .indexsets import DownwardClosedSet, total_degree_set
from .polybasis import TensorLegendreBasis
from .sampling import WeightedSampleSet, make_rng
from .validation import check_points, check_values, check_weights

logger = logging.getLogger(__name__)

#: Gramian deviation above which the conditioned projection returns zero.
DEVIATION_LIMIT = 0.5
#: Coupling constant for r = 1: ``(1 - log 2) / 4``.
KAPPA_R1 = (1.0 - math.log(2.0)) / 4.0


class NumericalFailure(RuntimeError):
    """An iterative method failed to converge."""


@dataclass
class LeastSquaresProblem:
    space: DownwardClosedSet
    points: np.ndarray
    weights: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        self.points = check_points(self.points, dim=self.space.dim, name="points")
        n = len(self.points)
        self.weights = check_weights(self.weights, n)
        self.values = check_values(self.values, n, name="values")

    @classmethod
    def from_samples(cls, space: DownwardClosedSet, samples: WeightedSampleSet,
                     values) -> "LeastSquaresProblem":
        return cls(space, samples.points, samples.weights, values)


@dataclass
class LeastSquaresFit:
    """Coefficients of a projection in the lexicographic basis of ``space``."""

    space: DownwardClosedSet
    coefficients: np.ndarray
    gramian_deviation: float
    conditioned_zeroed: bool = False
    solver_iterations: int = 0
    converged: bool = True
    n_samples: int = 0

    def __post_init__(self):
        self.coefficients = np.asarray(self.coefficients, dtype=float)

    def __call__(self, Y) -> np.ndarray:
        return self.evaluate(Y)

    def evaluate(self, Y) -> np.ndarray:
        Y = check_points(Y, dim=self.space.dim, name="Y")
        return TensorLegendreBasis(self.space).evaluate(Y) @ self.coefficients

    def block_norm(self, exponents) -> float:
        """Euclidean norm of the coefficients belonging to ``exponents``."""
        idx = [self.space.index_of(e) for e in exponents]
        return float(np.linalg.norm(self.coefficients[idx]))

    def to_rows(self) -> list[tuple[tuple[int, ...], float]]:
        return list(zip(self.space.members, self.coefficients.tolist()))

    @classmethod
    def zero(cls, space: DownwardClosedSet) -> "LeastSquaresFit":
        return cls(space, np.zeros(len(space)), 0.0)


def assemble(problem: LeastSquaresProblem) -> tuple[np.ndarray, np.ndarray]:
    """Scaled design matrix ``M`` (N x m) and right-hand side ``c = M^T b``.

    ``c_j = (1/N) sum_i w_i f(y_i) P_j(y_i)``.
    """
    n = len(problem.points)
    scale = np.sqrt(problem.weights / n)
    M = TensorLegendreBasis(problem.space).evaluate(problem.points) * scale[:, None]
    c = M.T @ (scale * problem.values)
    return M, c


def gramian_deviation(M: np.ndarray, seed: int = 0, tol: float = 1e-6,
                      max_iter: int = 10 ** 4) -> float:
    """Spectral norm of ``M^T M - I`` by Lanczos iteration.

    The symmetric operator ``x -> M^T (M x) - x`` is applied matrix-free, so
    the cost per iteration is ``O(N m)``. Lanczos (ARPACK) resolves clustered
    top eigenvalues and eigenvalues of equal magnitude and opposite sign,
    which plain power iteration from a single start vector can miss. The
    start vector is seeded for determinism.

    Raises:
        NumericalFailure: no convergence within ``max_iter`` iterations.
    """
    m = M.shape[1]
    if m == 1:
        return float(abs(np.dot(M[:, 0], M[:, 0]) - 1.0))
    op = spla.LinearOperator((m, m), matvec=lambda v: M.T @ (M @ v) - v, dtype=float)
    v0 = make_rng(seed, 7919).standard_normal(m)
    try:
        w = spla.eigsh(op, k=1, which="LM", tol=tol * 1e-2, v0=v0, maxiter=max_iter,
                       return_eigenvectors=False)
    except spla.ArpackNoConvergence as exc:
        raise NumericalFailure(f"Lanczos did not converge in {max_iter} iterations") from exc
    return float(abs(w[0]))


def conjugate_gradient(M: np.ndarray, c: np.ndarray, rtol: float = 1e-10,
                       max_iter: int | None = None) -> tuple[np.ndarray, int, bool]:
    """Solve ``M^T M v = c`` by conjugate gradients from ``v = 0``.

    Starting from zero keeps iterates in the range of ``M^T``, so consistent
    singular systems converge to the minimum-norm solution.

    Returns:
        Solution, iteration count and a convergence flag.
    """
    m = len(c)
    max_iter = 10 * m if max_iter is None else max_iter
    v = np.zeros(m)
    r = c.astype(float).copy()
    target = rtol * np.linalg.norm(c)
    rr = float(r @ r)
    if math.sqrt(rr) <= target:
        return v, 0, True
    p = r.copy()
    for it in range(1, max_iter + 1):
        Mp = M @ p
        pAp = float(Mp @ Mp)
        if pAp <= 0.0:
            return v, it, False
        a = rr / pAp
        v += a * p
        r -= a * (M.T @ Mp)
        rr_new = float(r @ r)
        if math.sqrt(rr_new) <= target:
            return v, it, True
        p = r + (rr_new / rr) * p
        rr = rr_new
    return v, max_iter, False


def _fit(problem: LeastSquaresProblem, conditioned: bool, seed: int) -> LeastSquaresFit:
    M, c = assemble(problem)
    dev = gramian_deviation(M, seed=seed)
    n = len(problem.points)
    if conditioned and dev > DEVIATION_LIMIT:
        return LeastSquaresFit(problem.space, np.zeros(M.shape[1]), dev,
                               conditioned_zeroed=True, n_samples=n)
    v, its, ok = conjugate_gradient(M, c)
    if not ok:
        logger.debug("CG stopped at %d iterations without reaching tolerance", its)
    return LeastSquaresFit(problem.space, v, dev, solver_iterations=its, converged=ok,
                           n_samples=n)


def solve(problem: LeastSquaresProblem, seed: int = 0) -> LeastSquaresFit:
    """Weighted least-squares projection onto ``problem.space``."""
    return _fit(problem, conditioned=False, seed=seed)


def solve_conditioned(problem: LeastSquaresProblem, seed: int = 0) -> LeastSquaresFit:
    """Projection if ``||G - I|| <= 1/2``, the zero polynomial otherwise."""
    return _fit(problem, conditioned=True, seed=seed)


def sample_count_for(target: float, kappa: float) -> int:
    """Smallest integer ``N >= 3`` with ``kappa N / log N >= target``.

    Logs a warning when the upper coupling ``kappa N / log N <= 2 target``
    fails, which only happens for targets too small for the ``N >= 3`` floor.
    """
    if kappa <= 0:
        raise ValueError("kappa must be positive")

    def ok(n: int) -> bool:
        return kappa * n / math.log(n) >= target

    lo, hi = 3, 3
    if not ok(hi):
        while not ok(hi):
            lo, hi = hi, 2 * hi
        while hi - lo > 1:
            mid = (lo + hi) // 2
            if ok(mid):
                hi = mid
            else:
                lo = mid
    if kappa * hi / math.log(hi) > 2 * target:
        logger.warning("sample count %d exceeds twice the coupling target %.4g", hi, target)
    return hi


def k_constant(space: DownwardClosedSet, weight: Callable[[np.ndarray], np.ndarray],
               per_axis: int | None = None) -> float:
    """Grid supremum of ``w(y) sum_eta P_eta(y)^2`` over cell midpoints of ``[0,1]^d``."""
    d = space.dim
    if d > 3:
        raise ValueError("grid evaluation limited to d <= 3")
    per_axis = per_axis or min(10 ** 4, int(round(10 ** (6 / d))))
    x = (np.arange(per_axis) + 0.5) / per_axis
    grids = np.meshgrid(*([x] * d), indexing="ij")
    Y = np.stack([g.ravel() for g in grids], axis=1)
    s = TensorLegendreBasis(space).sum_of_squares(Y)
    return float(np.max(weight(Y) * s))


class WeightedLeastSquares(RegressorMixin, BaseEstimator):
    """Weighted least-squares polynomial regression on ``[0, 1]^d``.

    Parameters
    ----------
    degree : int, default=3
        Total degree of the polynomial space when ``index_set`` is None.
    index_set : DownwardClosedSet, optional
        Exponents of the tensor Legendre basis.
    conditioned : bool, default=False
        Return the zero polynomial when the Gramian deviation exceeds 1/2.
    random_state : int, default=0
        Seed of the Lanczos start vector.

    Attributes
    ----------
    coef_ : ndarray of shape (n_basis,)
    gramian_deviation_ : float
    conditioned_zeroed_ : bool
    n_iter_ : int
    fit_ : LeastSquaresFit
    """

    def __init__(self, degree: int = 3, index_set: DownwardClosedSet | None = None,
                 conditioned: bool = False, random_state: int = 0):
        self.degree = degree
        self.index_set = index_set
        self.conditioned = conditioned
        self.random_state = random_state

    def fit(self, X, y, sample_weight=None):
        X = check_points(X)
        space = self.index_set if self.index_set is not None else \
            total_degree_set(X.shape[1], self.degree)
        problem = LeastSquaresProblem(space, X, check_weights(sample_weight, len(X)), y)
        fitter = solve_conditioned if self.conditioned else solve
        self.fit_ = fitter(problem, seed=self.random_state)
        self.n_features_in_ = X.shape[1]
        self.coef_ = self.fit_.coefficients
        self.gramian_deviation_ = self.fit_.gramian_deviation
        self.conditioned_zeroed_ = self.fit_.conditioned_zeroed
        self.n_iter_ = self.fit_.solver_iterations
        return self

    def predict(self, X):
        check_is_fitted(self, "fit_")
        return self.fit_.evaluate(check_points(X, dim=self.n_features_in_))
