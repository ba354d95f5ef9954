"""Level families: hierarchies of evaluators ``f_0, f_1, ...`` of increasing accuracy.

A family evaluates level ``l`` at points of ``[0, 1]^d`` and declares the
model cost of one evaluation. Level ``l`` corresponds to the discretization
parameter ``n_l = level_base ** l``.
"""

from __future__ import annotations

import math
from functools import lru_cache

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .indexsets import total_degree_set
from .polybasis import TensorLegendreBasis
from .sampling import make_rng
from .validation import check_points


class FamilyEvaluationError(RuntimeError):
    """Evaluation of a level failed; carries the level and point."""

    def __init__(self, level: int, point, cause: Exception):
        super().__init__(f"level {level} evaluation failed at {np.asarray(point).tolist()}: {cause}")
        self.level = level
        self.point = point


class LevelFamily:
    """Interface of an evaluator hierarchy.

    Subclasses implement :meth:`_evaluate` and :meth:`cost`.
    """

    dim: int = 1
    level_base: float = 2.0
    name: str = "family"

    def _evaluate(self, level: int, Y: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def cost(self, level: int) -> float:
        """Model cost of one evaluation at ``level``."""
        raise NotImplementedError

    def evaluate(self, level: int, Y) -> np.ndarray:
        """Values of ``f_level`` at the rows of ``Y``; ``level = -1`` gives zeros."""
        Y = check_points(Y, dim=self.dim, name="Y")
        if level < 0:
            return np.zeros(len(Y))
        return self._evaluate(int(level), Y)

    def eval(self, level: int, y) -> tuple[float, float]:
        """Single-point evaluation returning ``(value, cost)``."""
        return float(self.evaluate(level, np.asarray(y, dtype=float)[None, :])[0]), self.cost(level)

    def difference(self, level: int, Y) -> np.ndarray:
        """``f_level - f_{level-1}`` at the rows of ``Y``."""
        Y = check_points(Y, dim=self.dim, name="Y")
        out = self.evaluate(level, Y)
        if level > 0:
            out = out - self.evaluate(level - 1, Y)
        return out

    def difference_cost(self, level: int) -> float:
        return self.cost(level) + (self.cost(level - 1) if level > 0 else 0.0)

    def reference_value(self, Y, L_run: int) -> np.ndarray:
        """Reference for error estimation: one level finer than the run."""
        return self.evaluate(L_run + 1, Y)

    def params(self) -> dict:
        return {"name": self.name, "dim": self.dim}


class FunctionFamily(LevelFamily):
    """Wrap a vectorized callable ``func(level, Y)`` with a cost model."""

    def __init__(self, func, dim: int, cost=lambda l: 1.0, level_base: float = 2.0,
                 name: str = "function"):
        self.func = func
        self.dim = dim
        self._cost = cost
        self.level_base = level_base
        self.name = name

    def _evaluate(self, level, Y):
        return np.asarray(self.func(level, Y), dtype=float)

    def cost(self, level):
        return float(self._cost(level))


# -- synthetic families ----------------------------------------------------

def _shell_sizes(d: int, degrees: np.ndarray) -> np.ndarray:
    return np.array([math.comb(int(q) + d - 1, d - 1) for q in degrees], dtype=float)


class SpectralFunction:
    """Legendre series with prescribed algebraic decay of its total-degree tail.

    The squared coefficients of total degree ``q`` sum to about
    ``(1 + q)^(-2 rate - 1)``, so the best L2 approximation error in the
    total-degree space of degree ``p`` decays like ``p^(-rate)``. Signs are
    pseudo-random with the given seed. The series is truncated at
    ``max_degree``.
    """

    def __init__(self, d: int, rate: float, max_degree: int = 40, seed: int = 0,
                 scale: float = 1.0):
        space = total_degree_set(d, max_degree)
        exps = np.array(space.members)
        deg = exps.sum(axis=1)
        amp = (1.0 + deg) ** (-rate - 0.5) / np.sqrt(_shell_sizes(d, deg))
        signs = make_rng(seed, 31).choice([-1.0, 1.0], size=len(deg))
        self.space = space
        self.coefficients = scale * amp * signs
        self.basis = TensorLegendreBasis(space)

    def __call__(self, Y: np.ndarray, chunk: int = 4096) -> np.ndarray:
        Y = np.atleast_2d(Y)
        out = np.empty(len(Y))
        for s in range(0, len(Y), chunk):
            out[s:s + chunk] = self.basis.evaluate(Y[s:s + chunk]) @ self.coefficients
        return out


class SyntheticFamily(LevelFamily):
    """Closed-form family with prescribed convergence and cost rates.

    ``f_l = f_inf + c * s_l * n_l^(-beta_s) * g_l`` with ``n_l = level_base**l``
    and alternating signs ``s_l``. For ``beta_w == beta_s`` the perturbation
    ``g_l = g`` is a fixed series as smooth as the target; for
    ``beta_w > beta_s`` it is a single total-degree shell of degree
    ``q_l = ceil(n_l^((beta_w - beta_s) / rate))`` with L2 norm exactly
    ``n_l^(-(beta_w - beta_s))``, so its approximability norm stays of order
    one. Shell degrees are capped at ``max_shell_degree``.

    Here ``rate = alpha * d / sigma`` is the algebraic decay of best
    approximation errors in the polynomial degree. The declared cost is
    ``n_l^gamma``.
    """

    def __init__(self, d: int = 2, alpha: float = 3.0, sigma: float | None = None,
                 beta_s: float = 2.0, beta_w: float | None = None, gamma: float = 2.0,
                 c: float = 1.0, level_base: float = 2.0, max_degree: int = 40, seed: int = 0,
                 max_shell_degree: int = 200):
        self.dim = d
        self.alpha = alpha
        self.sigma = float(d if sigma is None else sigma)
        self.beta_s = beta_s
        self.beta_w = beta_s if beta_w is None else beta_w
        if self.beta_w < self.beta_s:
            raise ValueError("beta_w must be at least beta_s")
        self.gamma = gamma
        self.c = c
        self.level_base = float(level_base)
        self.max_degree = max_degree
        self.seed = seed
        self.max_shell_degree = max_shell_degree
        self.rate = alpha * d / self.sigma
        self.name = "synthetic"
        self.target = SpectralFunction(d, self.rate, max_degree, seed)
        self.perturbation = SpectralFunction(d, self.rate, max_degree, seed + 1)

    def n(self, level: int) -> float:
        return self.level_base ** level

    def cost(self, level: int) -> float:
        return self.n(level) ** self.gamma

    def shell_degree(self, level: int) -> int:
        gap = self.beta_w - self.beta_s
        q = int(math.ceil(self.n(level) ** (gap / self.rate) - 1e-12))
        return min(q, self.max_shell_degree)

    def _shell(self, level: int, Y: np.ndarray) -> np.ndarray:
        q = self.shell_degree(level)
        exps = [e for e in total_degree_set(self.dim, q) if sum(e) == q]
        signs = make_rng(self.seed, 47, level).choice([-1.0, 1.0], size=len(exps))
        gap = self.beta_w - self.beta_s
        coef = self.n(level) ** (-gap) * signs / math.sqrt(len(exps))
        return TensorLegendreBasis(exps, dim=self.dim).evaluate(Y) @ coef

    def perturbation_at(self, level: int, Y: np.ndarray) -> np.ndarray:
        if self.beta_w == self.beta_s:
            return self.perturbation(Y)
        return self._shell(level, Y)

    def _evaluate(self, level, Y):
        sign = -1.0 if level % 2 else 1.0
        return self.target(Y) + self.c * sign * self.n(level) ** (-self.beta_s) * \
            self.perturbation_at(level, Y)

    def exact(self, Y) -> np.ndarray:
        return self.target(check_points(Y, dim=self.dim))

    def params(self) -> dict:
        return {"name": self.name, "dim": self.dim, "alpha": self.alpha, "sigma": self.sigma,
                "beta_s": self.beta_s, "beta_w": self.beta_w, "gamma": self.gamma, "c": self.c,
                "level_base": self.level_base, "max_degree": self.max_degree, "seed": self.seed}


# -- elliptic benchmark ----------------------------------------------------

class LinearSolveError(RuntimeError):
    pass


@lru_cache(maxsize=16)
def _fd_operators(level: int, r: float, offset: int):
    """Stiffness parts ``K0`` (spatial coefficient) and ``Lap`` (unit coefficient).

    Flux form of the 5-point stencil on ``[-1, 1]^2`` with ``2^(level+offset) + 1``
    points per axis; face coefficients are arithmetic means of nodal values.
    The operator for ``a = a_x + t`` is ``K0 + t * Lap``.
    """
    P = 2 ** (level + offset) + 1
    h = 2.0 / (P - 1)
    x = np.linspace(-1.0, 1.0, P)
    X1, X2 = np.meshgrid(x, x, indexing="ij")
    ax = 1.0 + np.sqrt(X1 ** 2 + X2 ** 2) ** r

    def build(a):
        n = P - 2
        fx = 0.5 * (a[1:, 1:-1] + a[:-1, 1:-1])
        fy = 0.5 * (a[1:-1, 1:] + a[1:-1, :-1])
        diag = (fx[:-1, :] + fx[1:, :] + fy[:, :-1] + fy[:, 1:]) / h ** 2
        idx = np.arange(n * n).reshape(n, n)
        wx = -fx[1:-1, :].ravel() / h ** 2
        wy = -fy[:, 1:-1].ravel() / h ** 2
        rows = np.concatenate([idx.ravel(), idx[:-1, :].ravel(), idx[1:, :].ravel(),
                               idx[:, :-1].ravel(), idx[:, 1:].ravel()])
        cols = np.concatenate([idx.ravel(), idx[1:, :].ravel(), idx[:-1, :].ravel(),
                               idx[:, 1:].ravel(), idx[:, :-1].ravel()])
        vals = np.concatenate([diag.ravel(), wx, wx, wy, wy])
        return sp.csr_matrix((vals, (rows, cols)), shape=(n * n, n * n))

    return build(ax), build(np.ones_like(ax)), h


class Elliptic2D(LevelFamily):
    """Quantity of interest of ``-div(a grad u) = 1`` on ``[-1, 1]^2``, ``u = 0`` on the boundary.

    ``a(x, y) = 1 + |x|^r + |y|^s`` with the parameter ``y`` obtained from the
    unit cube by ``y = 2 z - 1``. The QoI is ``0.5 * int u`` by the trapezoid
    rule. Level ``l`` uses ``2^(l+2) + 1`` grid points per axis; one solve
    costs the number of interior unknowns.

    Since the parameter enters only through the scalar ``t = |y|^s``, the
    discrete QoI is a smooth function of ``t`` on ``[0, d^(s/2)]`` whose
    singularities lie at ``t <= -1``. With ``interpolate=True`` (default) it
    is tabulated per level by Chebyshev interpolation through
    ``n_nodes`` exact solves, accurate to rounding; ``interpolate=False``
    solves every point.

    Args:
        d: Parameter dimension.
        r: Exponent of the spatial part of the coefficient.
        s: Exponent of the parametric part of the coefficient.
        rtol: Relative residual of the preconditioned CG solves.
    """

    level_base = 2.0

    def __init__(self, d: int = 2, r: float = 1.0, s: float = 3.0, interpolate: bool = True,
                 n_nodes: int = 48, rtol: float = 1e-12, grid_offset: int = 2):
        self.dim = d
        self.r = r
        self.s = s
        self.interpolate = interpolate
        self.n_nodes = n_nodes
        self.rtol = rtol
        self.grid_offset = grid_offset
        self.name = "elliptic"
        self._tables: dict[int, np.polynomial.Chebyshev] = {}

    def grid_points(self, level: int) -> int:
        return 2 ** (level + self.grid_offset) + 1

    def cost(self, level: int) -> float:
        return float((self.grid_points(level) - 2) ** 2)

    def t_of(self, Y: np.ndarray) -> np.ndarray:
        return np.linalg.norm(2.0 * Y - 1.0, axis=1) ** self.s

    @property
    def t_max(self) -> float:
        return self.dim ** (self.s / 2.0)

    def solve_t(self, level: int, t: float, return_field: bool = False):
        """Exact discrete solve for the coefficient ``1 + |x|^r + t``."""
        K0, Lap, h = _fd_operators(level, self.r, self.grid_offset)
        A = (K0 + t * Lap).tocsr()
        b = np.ones(A.shape[0])
        diag = A.diagonal()
        prec = spla.LinearOperator(A.shape, matvec=lambda v: v / diag)
        u, info = spla.cg(A, b, rtol=self.rtol, atol=0.0, M=prec, maxiter=20 * A.shape[0])
        if info != 0:
            raise LinearSolveError(f"CG did not converge (info={info}) at level {level}, t={t}")
        q = 0.5 * h * h * float(u.sum())
        return (q, u) if return_field else q

    def table(self, level: int) -> np.polynomial.Chebyshev:
        if level not in self._tables:
            fn = np.vectorize(lambda t: self.solve_t(level, float(t)))
            self._tables[level] = np.polynomial.Chebyshev.interpolate(
                fn, self.n_nodes - 1, domain=[0.0, self.t_max])
        return self._tables[level]

    def _evaluate(self, level, Y):
        t = self.t_of(Y)
        if self.interpolate:
            return self.table(level)(t)
        out = np.empty(len(Y))
        for i, ti in enumerate(t):
            try:
                out[i] = self.solve_t(level, float(ti))
            except LinearSolveError as exc:
                raise FamilyEvaluationError(level, Y[i], exc) from exc
        return out

    def params(self) -> dict:
        return {"name": self.name, "dim": self.dim, "r": self.r, "s": self.s,
                "interpolate": self.interpolate, "n_nodes": self.n_nodes}


def system_matrix(level: int, t: float, r: float = 1.0, offset: int = 2) -> sp.csr_matrix:
    """Assembled FD matrix for inspection in tests."""
    K0, Lap, _ = _fd_operators(level, r, offset)
    return (K0 + t * Lap).tocsr()
