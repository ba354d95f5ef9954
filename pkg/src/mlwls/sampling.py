"""Random points for weighted least squares on ``[0, 1]^d``.

Three samplers are provided:

* the arcsine distribution, usable for every polynomial space at once;
* the optimal distribution of a downward closed space, drawn exactly as a
  uniform mixture of squared tensor Legendre densities, each coordinate by
  rejection against the arcsine proposal with envelope ``4e``;
* Metropolized independent sampling towards the optimal distribution, as a
  fallback when no product structure is available.

Randomness is derived from ``numpy.random.SeedSequence`` keyed by the user
seed and integer stream keys (e.g. the level), so a sample set depends only
on ``(seed, keys, n)``.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np

from .indexsets import DownwardClosedSet
from .polybasis import TensorLegendreBasis, gauss_rule, legendre_table

#: Envelope constant for ``P_n^2 <= C * arcsine density`` on ``[0, 1]``.
ENVELOPE = 4.0 * math.e
#: Proposals allowed per coordinate draw before giving up.
MAX_PROPOSALS = 10 ** 6

_LOW = np.finfo(float).tiny
_HIGH = 1.0 - np.finfo(float).epsneg


class SamplingError(RuntimeError):
    """A sampler could not produce a valid draw."""


def make_rng(seed, *keys: int) -> np.random.Generator:
    """Independent generator for ``(seed, *keys)``.

    A ``Generator`` passed as ``seed`` is returned unchanged.
    """
    if isinstance(seed, np.random.Generator):
        return seed
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in keys))
    return np.random.Generator(np.random.PCG64(ss))


@dataclass(frozen=True)
class SamplingSpec:
    """What distribution a sample set was drawn from.

    ``kind`` is one of ``"optimal"``, ``"arcsine"``, ``"mis"`` or
    ``"perturbed"``. For ``"perturbed"``, a fraction ``contamination`` of the
    points is uniform and the rest follow ``base``.
    """

    kind: str
    dim: int
    space: DownwardClosedSet | None = None
    contamination: float = 0.0
    base: str = "optimal"

    def __post_init__(self):
        if self.kind not in ("optimal", "arcsine", "mis", "perturbed"):
            raise ValueError(f"unknown sampler kind {self.kind!r}")
        if self.kind in ("optimal", "mis") or (self.kind == "perturbed" and self.base != "arcsine"):
            if self.space is None or len(self.space) == 0:
                raise ValueError(f"{self.kind} sampling needs a non-empty space")
        if not 0.0 <= self.contamination < 1.0:
            raise ValueError("contamination must lie in [0, 1)")


@dataclass
class WeightedSampleSet:
    """Points with least-squares weights ``w = 1 / sampling density``."""

    points: np.ndarray
    weights: np.ndarray
    spec: SamplingSpec
    seed: int | None = None
    stats: dict = field(default_factory=dict)

    def __post_init__(self):
        self.points = np.atleast_2d(np.asarray(self.points, dtype=float))
        self.weights = np.asarray(self.weights, dtype=float)
        if len(self.points) != len(self.weights):
            raise ValueError("points and weights differ in length")
        if np.any(self.weights <= 0):
            raise ValueError("weights must be positive")

    def __len__(self) -> int:
        return len(self.weights)

    def to_text(self) -> str:
        """One row per point: coordinates then weight."""
        buf = io.StringIO()
        d = self.points.shape[1]
        buf.write(" ".join([f"y{j}" for j in range(d)] + ["weight"]) + "\n")
        np.savetxt(buf, np.column_stack([self.points, self.weights]), fmt="%.17g")
        return buf.getvalue()

    @staticmethod
    def read_text(text: str) -> tuple[np.ndarray, np.ndarray]:
        data = np.loadtxt(io.StringIO(text), skiprows=1, ndmin=2)
        return data[:, :-1], data[:, -1]


# -- arcsine ---------------------------------------------------------------

def arcsine_density(Y: np.ndarray) -> np.ndarray:
    """Lebesgue density ``prod_j 1 / (pi sqrt(y_j (1 - y_j)))``."""
    Y = np.atleast_2d(Y)
    return np.prod(1.0 / (np.pi * np.sqrt(Y * (1.0 - Y))), axis=1)


def arcsine_weight(Y: np.ndarray) -> np.ndarray:
    """Least-squares weight for arcsine samples with Lebesgue reference measure."""
    Y = np.atleast_2d(Y)
    return np.prod(np.pi * np.sqrt(Y * (1.0 - Y)), axis=1)


def arcsine_transform(X: np.ndarray) -> np.ndarray:
    """Map uniform angles on ``[-pi/2, pi/2]`` to arcsine samples.

    Results are clipped into the open interval so that weights stay positive.
    """
    return np.clip((np.sin(X) + 1.0) / 2.0, _LOW, _HIGH)


def _arcsine_draw(rng: np.random.Generator, size) -> np.ndarray:
    return arcsine_transform(rng.uniform(-np.pi / 2, np.pi / 2, size=size))


def sample_arcsine(d: int, n: int, seed=0, *keys: int) -> WeightedSampleSet:
    """``n`` i.i.d. points from the ``d``-dimensional arcsine distribution."""
    if n < 1:
        raise ValueError("n must be positive")
    rng = make_rng(seed, *keys)
    Y = _arcsine_draw(rng, (n, d))
    return WeightedSampleSet(Y, arcsine_weight(Y), SamplingSpec("arcsine", d),
                             seed=_seed_of(seed))


def _seed_of(seed):
    return None if isinstance(seed, np.random.Generator) else int(seed)


# -- optimal distribution --------------------------------------------------

def sample_squared_legendre(degree: int, count: int, rng: np.random.Generator,
                            max_proposals: int = MAX_PROPOSALS) -> tuple[np.ndarray, int]:
    """Draw from the Lebesgue density ``P_degree^2`` on ``[0, 1]`` by rejection.

    Proposals are arcsine distributed and accepted when
    ``U <= P_n(y)^2 / (4e p(y))``. Pending draws are proposed in vectorized
    rounds; a draw still pending after ``max_proposals`` rounds raises
    :class:`SamplingError`.

    Returns:
        The samples and the total number of proposals used.
    """
    out = np.empty(count)
    if count == 0:
        return out, 0
    pending = np.arange(count)
    proposals = 0
    rounds = 0
    while pending.size:
        if rounds >= max_proposals:
            raise SamplingError(f"rejection sampler for degree {degree} exceeded "
                                f"{max_proposals} proposals")
        y = _arcsine_draw(rng, pending.size)
        u = rng.uniform(size=pending.size)
        p = legendre_table(degree, y)[:, degree] ** 2
        accept = u * ENVELOPE * arcsine_density(y[:, None]) <= p
        out[pending[accept]] = y[accept]
        proposals += pending.size
        pending = pending[~accept]
        rounds += 1
    return out, proposals


def optimal_density(space: DownwardClosedSet, Y: np.ndarray) -> np.ndarray:
    """``(1/m) sum_eta P_eta(y)^2`` (Lebesgue density of the optimal distribution)."""
    basis = TensorLegendreBasis(space)
    return basis.sum_of_squares(Y) / len(basis)


def optimal_weight(space: DownwardClosedSet, Y: np.ndarray) -> np.ndarray | float:
    """Optimal weight ``m / sum_eta P_eta(y)^2``.

    A single point (1-D input of length ``d``) returns a float.
    """
    Y_arr = np.asarray(Y, dtype=float)
    single = Y_arr.ndim == 1 and Y_arr.shape[0] == space.dim
    Y2 = Y_arr[None, :] if single else np.atleast_2d(Y_arr)
    if space.dim == 1 and Y_arr.ndim == 1 and not single:
        Y2 = Y_arr[:, None]
    basis = TensorLegendreBasis(space)
    s = np.maximum(basis.sum_of_squares(Y2), len(basis) * np.finfo(float).eps)
    w = len(basis) / s
    return float(w[0]) if single else w


def sample_optimal(space: DownwardClosedSet, n: int, seed=0, *keys: int) -> WeightedSampleSet:
    """``n`` i.i.d. points from the optimal distribution of ``space``.

    Each point picks a multi-index uniformly from ``space`` and then draws
    every coordinate from the corresponding squared univariate Legendre
    density. Constant factors are drawn uniformly.

    ``stats["proposals"]`` maps each degree to ``(accepted, proposals)``.
    """
    if n < 1:
        raise ValueError("n must be positive")
    rng = make_rng(seed, *keys)
    exps = np.array(space.members, dtype=int)
    choice = exps[rng.integers(len(exps), size=n)]
    Y = np.empty((n, space.dim))
    stats: dict[int, list[int]] = {}
    for j in range(space.dim):
        col = choice[:, j]
        for deg in np.unique(col):
            rows = np.flatnonzero(col == deg)
            if deg == 0:
                Y[rows, j] = np.clip(rng.uniform(size=rows.size), _LOW, _HIGH)
                continue
            draws, used = sample_squared_legendre(int(deg), rows.size, rng)
            Y[rows, j] = draws
            acc = stats.setdefault(int(deg), [0, 0])
            acc[0] += rows.size
            acc[1] += used
    return WeightedSampleSet(Y, optimal_weight(space, Y), SamplingSpec("optimal", space.dim, space),
                             seed=_seed_of(seed),
                             stats={"proposals": {k: tuple(v) for k, v in stats.items()}})


def sample_perturbed(space: DownwardClosedSet, n: int, contamination: float, seed=0,
                     *keys: int) -> WeightedSampleSet:
    """Mixture of optimal samples and a fraction ``contamination`` of uniform points.

    The weights are the optimal weights of ``space`` regardless of the
    contamination.
    """
    spec = SamplingSpec("perturbed", space.dim, space, contamination=contamination)
    rng = make_rng(seed, *keys)
    Y = sample_optimal(space, n, rng).points
    swap = rng.uniform(size=n) < contamination
    Y[swap] = np.clip(rng.uniform(size=(int(swap.sum()), space.dim)), _LOW, _HIGH)
    return WeightedSampleSet(Y, optimal_weight(space, Y), spec, seed=_seed_of(seed))


# -- Metropolized independent sampling --------------------------------------

def mis_burn_in(g: float, m: int) -> int:
    """Chain length ``ceil(log(24 m^2) / g)`` giving total variation ``<= 1/(12 m^2)``."""
    if not g > 0:
        raise ValueError("the proposal-to-target bound g must be positive")
    return int(math.ceil(math.log(24.0 * m * m) / g))


def _interior_grid(d: int, per_axis: int) -> np.ndarray:
    x = (np.arange(per_axis) + 0.5) / per_axis
    grids = np.meshgrid(*([x] * d), indexing="ij")
    return np.stack([gr.ravel() for gr in grids], axis=1)


def estimate_mis_bound(space: DownwardClosedSet, per_axis: int | None = None) -> float:
    """Grid minimum of ``arcsine density / optimal density``."""
    d = space.dim
    if d > 3 and per_axis is None:
        raise ValueError("pass g explicitly for d > 3")
    per_axis = per_axis or {1: 2000, 2: 200, 3: 40}[d]
    Y = _interior_grid(d, per_axis)
    return float(np.min(arcsine_density(Y) / optimal_density(space, Y)))


def mis_sample(space: DownwardClosedSet, n: int, seed=0, *keys: int,
               g: float | None = None) -> WeightedSampleSet:
    """Terminal states of ``n`` independent Metropolized independence chains.

    Proposals are arcsine distributed; every chain starts from a proposal
    draw and runs :func:`mis_burn_in` steps. ``g`` defaults to
    :func:`estimate_mis_bound`.
    """
    if g is None:
        g = estimate_mis_bound(space)
    steps = mis_burn_in(g, len(space))
    rng = make_rng(seed, *keys)
    basis = TensorLegendreBasis(space)
    d = space.dim

    def log_ratio(Y):
        # target over proposal, both Lebesgue densities
        return np.log(basis.sum_of_squares(Y)) - np.log(arcsine_density(Y))

    state = _arcsine_draw(rng, (n, d))
    cur = log_ratio(state)
    accepted = 0
    for _ in range(steps):
        prop = _arcsine_draw(rng, (n, d))
        new = log_ratio(prop)
        take = np.log(rng.uniform(size=n)) <= new - cur
        state[take] = prop[take]
        cur[take] = new[take]
        accepted += int(take.sum())
    return WeightedSampleSet(state, optimal_weight(space, state), SamplingSpec("mis", d, space),
                             seed=_seed_of(seed),
                             stats={"burn_in": steps, "g": g,
                                    "acceptance_rate": accepted / max(1, n * steps)})


def sample(spec: SamplingSpec, n: int, seed=0, *keys: int) -> WeightedSampleSet:
    """Dispatch on ``spec.kind``."""
    if spec.kind == "arcsine":
        return sample_arcsine(spec.dim, n, seed, *keys)
    if spec.kind == "optimal":
        return sample_optimal(spec.space, n, seed, *keys)
    if spec.kind == "mis":
        return mis_sample(spec.space, n, seed, *keys)
    return sample_perturbed(spec.space, n, spec.contamination, seed, *keys)


def weight_function(kind: str, space: DownwardClosedSet | None = None) -> Callable:
    """Weight ``w(Y)`` matching a sampler kind."""
    if kind == "arcsine":
        return arcsine_weight
    return lambda Y: optimal_weight(space, np.atleast_2d(Y))


# -- diagnostics -----------------------------------------------------------

class StabilityResult(NamedTuple):
    margin: float
    threshold: float
    passed: bool


def stability_threshold(m: int, p: float) -> float:
    """``(1/6) m^(-1-1/p)``; ``p`` may be ``math.inf``."""
    return (1.0 / 6.0) * m ** (-1.0 - (0.0 if math.isinf(p) else 1.0 / p))


def stability_margin(space: DownwardClosedSet, ratio: Callable[[np.ndarray], np.ndarray],
                     p: float = 2, n_mc: int = 10 ** 5, seed=0) -> StabilityResult:
    """Estimate ``||1 - rho~/rho*||`` in ``L^p`` of the optimal distribution.

    Args:
        space: Polynomial space defining the optimal density ``rho*``.
        ratio: Vectorized ``Y -> rho~(Y) / rho*(Y)``.
        p: 1, 2 or ``math.inf``.
        n_mc: Sample size when ``d > 3``; for ``d <= 3`` tensor Gauss
            quadrature weighted by ``rho*`` is used.

    Returns:
        The margin, the threshold ``(1/6) m^(-1-1/p)`` and whether the margin
        is within it.
    """
    m = len(space)
    d = space.dim
    if d <= 3:
        top = max(space.max_degrees())
        q = {1: 200, 2: 60, 3: 24}[d]
        q = max(q, top + 2)
        rule = gauss_rule(d, q)
        Y, wq = rule.nodes, rule.weights * optimal_density(space, rule.nodes)
    else:
        Y = sample_optimal(space, n_mc, seed).points
        wq = np.full(len(Y), 1.0 / len(Y))
    dev = np.abs(1.0 - ratio(Y))
    if math.isinf(p):
        margin = float(dev.max())
    else:
        margin = float(np.dot(wq, dev ** p) ** (1.0 / p))
    thr = stability_threshold(m, p)
    return StabilityResult(margin, thr, margin <= thr)


def density_bounds_check(space: DownwardClosedSet, grid_resolution: int = 400) -> tuple[float, float]:
    """Grid infimum of the optimal density and supremum of its ratio to arcsine.

    Grid points are cell midpoints, so arcsine endpoint singularities are
    never evaluated.
    """
    if space.dim > 3:
        raise ValueError("grid check limited to d <= 3")
    Y = _interior_grid(space.dim, grid_resolution)
    rho = optimal_density(space, Y)
    return float(rho.min()), float(np.max(rho / arcsine_density(Y)))
