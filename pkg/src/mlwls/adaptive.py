"""Adaptive multilevel least squares driven by a gain-per-work profit rule.

The algorithm grows a downward-closed set ``I`` of indices ``(k, l)`` in
``N^(d+1)``: ``k`` is a dyadic block of Legendre exponents and ``l`` a level.
The level-``l`` space is spanned by the blocks ``{k : (k, l) in I}``; the
estimate is the sum of the level-difference fits on these spaces.

All fits use arcsine samples with weight ``1 / arcsine density``. The weight
does not depend on the space, so samples of a level are kept when its space
grows and only the missing ones are drawn.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .indexsets import DownwardClosedSet, MultiIndex, block_indices, neighbors, union_of_blocks
from .lsq import KAPPA_R1, LeastSquaresFit, LeastSquaresProblem, sample_count_for, solve
from .problems import LevelFamily
from .sampling import arcsine_weight, sample_arcsine
from .validation import check_points

#: Stream tag for adaptive draws in ``make_rng(seed, tag, l, batch)``.
STREAM_ADAPTIVE = 2
#: Lower bound on the work increment in the profit ratio.
WORK_FLOOR = 1e-12


class InvalidCandidateError(ValueError):
    """The index is not admissible for the current set."""


@dataclass
class LevelPool:
    """Evaluated points of one level difference ``f_l - f_{l-1}``."""

    points: np.ndarray
    values: np.ndarray
    batches: int = 0

    def __len__(self) -> int:
        return len(self.values)


@dataclass
class AdaptiveState:
    """Mutable state of an adaptive run.

    Attributes:
        d: Parameter dimension; indices have ``d + 1`` entries, the last one
            being the level.
        index_set: The current set ``I``.
        pools: Sample pool per active level.
        fits: Current fit per active level.
        work_rates: Cost per evaluation of each level difference.
        total_work: Model work spent so far.
        kappa: Coupling constant of ``N / log N >= dim / kappa``.
    """

    d: int
    seed: int = 0
    kappa: float = KAPPA_R1
    index_set: DownwardClosedSet = None
    pools: dict[int, LevelPool] = field(default_factory=dict)
    fits: dict[int, LeastSquaresFit] = field(default_factory=dict)
    work_rates: dict[int, float] = field(default_factory=dict)
    total_work: float = 0.0
    steps: int = 0
    history: list[tuple[MultiIndex, float]] = field(default_factory=list)

    def __post_init__(self):
        if self.index_set is None:
            self.index_set = DownwardClosedSet((), dim=self.d + 1)

    def blocks(self, level: int) -> list[MultiIndex]:
        return [idx[:-1] for idx in self.index_set if idx[-1] == level]

    def level_space(self, level: int, extra: MultiIndex | None = None) -> DownwardClosedSet:
        blocks = self.blocks(level)
        if extra is not None:
            blocks.append(tuple(extra))
        return union_of_blocks(blocks, self.d)

    def levels(self) -> list[int]:
        return sorted({idx[-1] for idx in self.index_set})

    def evaluate(self, Y) -> np.ndarray:
        Y = check_points(Y, dim=self.d, name="Y")
        out = np.zeros(len(Y))
        for fit in self.fits.values():
            out += fit.evaluate(Y)
        return out

    __call__ = evaluate

    def to_dict(self) -> dict:
        return {
            "d": self.d, "seed": self.seed, "kappa": self.kappa,
            "index_set": [list(i) for i in self.index_set],
            "pools": {str(l): {"points": p.points.tolist(), "values": p.values.tolist(),
                               "batches": p.batches} for l, p in self.pools.items()},
            "fits": {str(l): {"coefficients": f.coefficients.tolist(),
                              "gramian_deviation": f.gramian_deviation}
                     for l, f in self.fits.items()},
            "work_rates": {str(l): r for l, r in self.work_rates.items()},
            "total_work": self.total_work, "steps": self.steps,
            "history": [[list(i), w] for i, w in self.history],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, data: dict) -> "AdaptiveState":
        d = data["d"]
        state = cls(d=d, seed=data["seed"], kappa=data["kappa"],
                    index_set=DownwardClosedSet(data["index_set"], dim=d + 1))
        for key, p in data["pools"].items():
            pts = np.array(p["points"], dtype=float).reshape(-1, d)
            state.pools[int(key)] = LevelPool(pts, np.array(p["values"], dtype=float),
                                              p["batches"])
        for key, f in data["fits"].items():
            l = int(key)
            state.fits[l] = LeastSquaresFit(state.level_space(l), np.array(f["coefficients"]),
                                            f["gramian_deviation"],
                                            n_samples=len(state.pools[l]))
        state.work_rates = {int(k): v for k, v in data["work_rates"].items()}
        state.total_work = data["total_work"]
        state.steps = data["steps"]
        state.history = [(tuple(i), w) for i, w in data["history"]]
        return state

    @classmethod
    def from_json(cls, text: str) -> "AdaptiveState":
        return cls.from_dict(json.loads(text))


def _check_admissible(candidate, state: AdaptiveState) -> MultiIndex:
    candidate = tuple(int(v) for v in candidate)
    if candidate not in state.index_set.admissible:
        raise InvalidCandidateError(f"{candidate} is not admissible")
    return candidate


def gain(candidate, state: AdaptiveState) -> float:
    """Mean block-coefficient norm over the candidate's neighbors in ``I``.

    Returns ``inf`` when the candidate has no neighbors, which only happens
    for the root of an empty set.
    """
    candidate = _check_admissible(candidate, state)
    nbrs = neighbors(candidate, state.index_set)
    if not nbrs:
        return math.inf
    total = 0.0
    for nb in nbrs:
        fit = state.fits[nb[-1]]
        total += fit.block_norm(block_indices(nb[:-1]))
    return total / len(nbrs)


def required_samples(dim: int, kappa: float) -> int:
    return 0 if dim == 0 else sample_count_for(dim, kappa)


def prior_rate(level: int, state: AdaptiveState, family: LevelFamily) -> float:
    """Cost per evaluation of ``f_l - f_{l-1}`` before any observation."""
    if level in state.work_rates:
        return state.work_rates[level]
    try:
        return float(family.difference_cost(level))
    except NotImplementedError:
        below = state.work_rates.get(level - 1)
        return below * family.level_base if below is not None else 1.0


def work_increment(candidate, state: AdaptiveState, family: LevelFamily) -> float:
    """Rate times the number of new samples needed to add ``candidate``."""
    candidate = _check_admissible(candidate, state)
    k, l = candidate[:-1], candidate[-1]
    before = len(state.level_space(l)) if l in state.fits else 0
    after = len(state.level_space(l, extra=k))
    new = required_samples(after, state.kappa) - required_samples(before, state.kappa)
    return prior_rate(l, state, family) * max(new, 0)


def select(state: AdaptiveState, family: LevelFamily) -> MultiIndex:
    """Admissible index with maximal gain/work; ties go to the smallest ``(l, k)``."""
    best, best_key = None, None
    for cand in state.index_set.admissible:
        g = gain(cand, state)
        w = max(work_increment(cand, state, family), WORK_FLOOR)
        profit = g / w if math.isfinite(g) else math.inf
        key = (-profit, cand[-1], cand[:-1])
        if best_key is None or key < best_key:
            best, best_key = cand, key
    return best


def step(state: AdaptiveState, family: LevelFamily, candidate=None) -> AdaptiveState:
    """Add the most profitable admissible index and refit its level.

    Draws the missing arcsine samples of the level, evaluates the level
    difference on them, refits on the full pool and updates the level's
    observed work rate. ``state`` is modified in place and returned.
    """
    if candidate is None:
        candidate = select(state, family)
    candidate = _check_admissible(candidate, state)
    k, l = candidate[:-1], candidate[-1]
    space = state.level_space(l, extra=k)
    need = required_samples(len(space), state.kappa)
    pool = state.pools.get(l)
    if pool is None:
        pool = state.pools[l] = LevelPool(np.empty((0, state.d)), np.empty(0))
    missing = need - len(pool)
    if missing > 0:
        draw = sample_arcsine(state.d, missing, state.seed, STREAM_ADAPTIVE, l, pool.batches)
        values = family.difference(l, draw.points)
        spent = missing * family.difference_cost(l)
        pool.points = np.vstack([pool.points, draw.points])
        pool.values = np.concatenate([pool.values, values])
        pool.batches += 1
        state.total_work += spent
        observed = state.work_rates.get(l)
        # running average over all evaluations of this level
        prev_n = len(pool) - missing
        state.work_rates[l] = spent / missing if observed is None else \
            (observed * prev_n + spent) / len(pool)
    problem = LeastSquaresProblem(space, pool.points, arcsine_weight(pool.points), pool.values)
    state.fits[l] = solve(problem, seed=state.seed)
    state.index_set = state.index_set.add(candidate)
    state.steps += 1
    state.history.append((candidate, state.total_work))
    return state


def run_adaptive(family: LevelFamily, steps: int | None = None, work_budget: float | None = None,
                 seed: int = 0, kappa: float = KAPPA_R1, state: AdaptiveState | None = None,
                 callback=None) -> tuple[AdaptiveState, AdaptiveState]:
    """Iterate :func:`step` until the step count or the work budget is exhausted.

    Args:
        family: Level family to approximate.
        steps: Maximal number of steps.
        work_budget: Stop once the total model work exceeds this value.
        seed: Seed of all draws.
        kappa: Coupling constant.
        state: Resume from a previous state instead of starting empty.
        callback: Called as ``callback(state)`` after every step.

    Returns:
        The estimate (the state itself, callable as the sum of fits) and the
        final state.
    """
    if steps is None and work_budget is None:
        raise ValueError("give a step count or a work budget")
    if (steps is not None and steps < 1) or (work_budget is not None and work_budget <= 0):
        raise ValueError("budget must be positive")
    if state is None:
        state = AdaptiveState(d=family.dim, seed=seed, kappa=kappa)
    done = 0
    while True:
        if steps is not None and done >= steps:
            break
        if work_budget is not None and state.total_work > work_budget:
            break
        step(state, family)
        done += 1
        if callback is not None:
            callback(state)
    return state, state


class AdaptiveMultilevel(BaseEstimator):
    """Adaptive multilevel least-squares surrogate of a level family.

    Parameters
    ----------
    max_steps : int, optional
        Step budget.
    work_budget : float, optional
        Model-work budget.
    kappa : float
        Coupling constant, ``(1 - log 2) / 4`` by default.
    random_state : int
    """

    def __init__(self, max_steps: int | None = 50, work_budget: float | None = None,
                 kappa: float = KAPPA_R1, random_state: int = 0):
        self.max_steps = max_steps
        self.work_budget = work_budget
        self.kappa = kappa
        self.random_state = random_state

    def fit(self, family: LevelFamily, y=None):
        if not isinstance(family, LevelFamily):
            raise TypeError("fit expects a LevelFamily")
        _, self.state_ = run_adaptive(family, self.max_steps, self.work_budget,
                                      seed=self.random_state, kappa=self.kappa)
        self.work_ = self.state_.total_work
        self.index_set_ = self.state_.index_set
        self.n_features_in_ = family.dim
        return self

    def predict(self, X):
        check_is_fitted(self, "state_")
        return self.state_.evaluate(check_points(X, dim=self.n_features_in_))
