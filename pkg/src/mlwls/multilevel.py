"""Non-adaptive multilevel weighted least squares.

Level ``l`` of a family is paired with the polynomial space ``V_{L-l}``, so
cheap coarse evaluations are projected onto large spaces and expensive fine
corrections onto small ones. The estimator is

    S_L = sum_{l=0}^{L} Pi_{L-l} (f_l - f_{l-1}),   f_{-1} = 0.

Schedules use ``m_k = M b^(k/(sigma+alpha))`` and ``n_l = b^(l/(gamma+beta_s))``
for a base ``b``. With ``b = e`` these are the natural-exponential sequences;
a family whose level ``l`` has ``n = level_base^l`` is matched by
``b = level_base^(gamma+beta_s)``.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import asdict, dataclass, field
from typing import Callable, NamedTuple

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .indexsets import DownwardClosedSet, smallest_total_degree_set
from .lsq import LeastSquaresFit, LeastSquaresProblem, sample_count_for, solve, solve_conditioned
from .problems import LevelFamily
from .sampling import ENVELOPE, SamplingSpec, sample, sample_arcsine
from .validation import check_points

#: Stream tag for multilevel sample sets in ``make_rng(seed, tag, k)``.
STREAM_MULTILEVEL = 1


def _isclose(a: float, b: float) -> bool:
    return math.isclose(a, b, rel_tol=1e-12, abs_tol=1e-15)


@dataclass(frozen=True)
class RateParams:
    """Convergence and cost exponents of a level family.

    Attributes:
        alpha: Polynomial approximation rate in ``m``.
        sigma: Growth exponent of the space dimension, ``dim V_m ~ m^sigma``.
        beta_s: Rate of ``f_n -> f`` in the approximability norm.
        beta_w: Rate of ``f_n -> f`` in L2; defaults to ``beta_s``.
        gamma: Cost exponent, ``Work(f_n) ~ n^gamma``.
        kappa_scale: Factor applied to the coupling constant, e.g. for
            non-optimal sampling.
    """

    alpha: float
    sigma: float
    beta_s: float
    gamma: float
    beta_w: float | None = None
    kappa_scale: float = 1.0

    def __post_init__(self):
        if self.beta_w is None:
            object.__setattr__(self, "beta_w", self.beta_s)
        for name in ("alpha", "sigma", "beta_s", "beta_w", "gamma", "kappa_scale"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.beta_w < self.beta_s:
            raise ValueError("beta_w must be at least beta_s")


def rigorous_kappa_scale(d: int) -> float:
    """Coupling factor ``(4e)^(-d)`` for samples that are not exactly optimal."""
    return ENVELOPE ** (-d)


class Regime(NamedTuple):
    """Complexity regime: work ``~ eps^(-lam) |log eps|^t``."""

    case: str  # "a", "b", "c-equal" or "c-strict"
    lam: float
    t: float
    shifted: bool  # whether M = b^(L delta) rather than 1
    delta: float


def classify_regime(params: RateParams) -> Regime:
    """Compare ``gamma / beta_s`` with ``sigma / alpha`` and derive ``lam``, ``t`` and ``delta``."""
    a, s = params.alpha, params.sigma
    g, bs, bw = params.gamma, params.beta_s, params.beta_w
    ratio, target = g / bs, s / a
    delta = (bw - bs) / (a * (g + bs))
    if _isclose(ratio, target):
        return Regime("b", target, 3.0 + target, False, delta)
    if ratio < target:
        return Regime("a", target, 2.0, False, delta)
    theta = bs / bw
    lam = theta * ratio + (1.0 - theta) * target
    if _isclose(bw, bs):
        return Regime("c-equal", lam, 1.0, True, 0.0)
    return Regime("c-strict", lam, 2.0, True, delta)


def kappa_for(L: int, kappa_scale: float = 1.0) -> float:
    """Coupling constant ``kappa_scale (1 - log 2) / (2 + 2L)``."""
    return kappa_scale * (1.0 - math.log(2.0)) / (2.0 + 2.0 * L)


@dataclass
class MultilevelSchedule:
    L: int
    M: float
    delta: float
    base: float
    m: list[float]
    n: list[float]
    sample_counts: list[int]
    spaces: list[DownwardClosedSet]
    regime: str
    lam: float
    t: float
    kappa: float
    params: RateParams

    def space_for_level(self, l: int) -> DownwardClosedSet:
        """Polynomial space used for the level-``l`` difference."""
        return self.spaces[self.L - l]

    def samples_for_level(self, l: int) -> int:
        return self.sample_counts[self.L - l]

    def to_dict(self) -> dict:
        return {
            "L": self.L, "M": self.M, "delta": self.delta, "base": self.base,
            "m": self.m, "n": self.n, "sample_counts": self.sample_counts,
            "spaces": [s.to_text() for s in self.spaces], "dim": self.spaces[0].dim,
            "regime": self.regime, "lam": self.lam, "t": self.t, "kappa": self.kappa,
            "params": asdict(self.params),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "MultilevelSchedule":
        d = data["dim"]
        return cls(
            L=data["L"], M=data["M"], delta=data["delta"], base=data["base"], m=data["m"],
            n=data["n"], sample_counts=data["sample_counts"],
            spaces=[DownwardClosedSet.from_text(s, dim=d) for s in data["spaces"]],
            regime=data["regime"], lam=data["lam"], t=data["t"], kappa=data["kappa"],
            params=RateParams(**data["params"]),
        )


def total_degree_builder(d: int) -> Callable[[float], DownwardClosedSet]:
    """Space builder returning the smallest total-degree set of size ``>= target``."""
    return lambda target: smallest_total_degree_set(d, math.ceil(target - 1e-9))


def build_schedule(params: RateParams, L: int, d: int | None = None,
                   space_builder: Callable[[float], DownwardClosedSet] | None = None,
                   base: float = math.e, solver_cost: bool = False) -> MultilevelSchedule:
    """Level schedule for ``L + 1`` levels.

    Sample counts satisfy ``kappa N_k / log N_k >= dim V_k`` where
    ``dim V_k >= m_k^sigma``.

    Args:
        params: Rate exponents.
        L: Finest level.
        d: Parameter dimension for the default total-degree builder.
        space_builder: Maps a target dimension ``m_k^sigma`` to a space.
        base: Base ``b`` of the exponential sequences.
        solver_cost: Use ``m_k = M b^(k/(2 sigma + alpha))``, which accounts
            for the cost of solving the normal equations.
    """
    if L < 0:
        raise ValueError("L must be non-negative")
    if space_builder is None:
        if d is None:
            raise ValueError("either d or space_builder is required")
        space_builder = total_degree_builder(d)
    regime = classify_regime(params)
    a, s = params.alpha, params.sigma
    M = base ** (L * regime.delta) if regime.shifted else 1.0
    denom = (2.0 * s + a) if solver_cost else (s + a)
    m = [M * base ** (k / denom) for k in range(L + 1)]
    n = [base ** (l / (params.gamma + params.beta_s)) for l in range(L + 1)]
    kappa = kappa_for(L, params.kappa_scale)
    spaces, counts = [], []
    for mk in m:
        space = space_builder(mk ** s)
        spaces.append(space)
        counts.append(sample_count_for(max(len(space), mk ** s), kappa))
    return MultilevelSchedule(L, M, regime.delta, base, m, n, counts, spaces, regime.case,
                              regime.lam, regime.t, kappa, params)


def choose_levels(params: RateParams, epsilon: float, base: float = math.e) -> int:
    """Number of levels for a target accuracy ``epsilon``.

    Solves the regime's defining equation for a real ``L``, rounds up, and
    enforces ``L >= |log epsilon| / log b``.
    """
    if not 0.0 < epsilon < 1.0:
        raise ValueError("epsilon must lie in (0, 1)")
    regime = classify_regime(params)
    a, s = params.alpha, params.sigma
    lb = math.log(base)
    target = -math.log(epsilon)
    if regime.case == "a":
        L = target * (s + a) / (a * lb)
    elif regime.case == "b":
        rate = a * lb / (s + a)

        def g(x):
            return math.exp(-rate * x) * (x + 1.0) - epsilon

        # g >= 1 - epsilon > 0 up to the maximum at x = 1/rate - 1, then decreasing
        lo, hi = max(0.0, 1.0 / rate - 1.0), 1.0
        while g(hi) > 0:
            hi *= 2.0
        lo = min(lo, hi)
        while hi - lo > 1e-12 * max(1.0, hi):
            mid = 0.5 * (lo + hi)
            if g(mid) > 0:
                lo = mid
            else:
                hi = mid
        L = hi
    else:
        L = target * (params.gamma + params.beta_s) / (params.beta_w * lb)
    return max(int(math.ceil(L - 1e-9)), int(math.ceil(target / lb - 1e-9)))


def work_estimate(schedule: MultilevelSchedule, cost: Callable[[int], float]) -> float:
    """Model work ``|G_L| W(f_0) + sum_{l>=1} |G_{L-l}| (W(f_l) + W(f_{l-1}))``."""
    L = schedule.L
    total = schedule.sample_counts[L] * cost(0)
    for l in range(1, L + 1):
        total += schedule.sample_counts[L - l] * (cost(l) + cost(l - 1))
    return float(total)


@dataclass
class LevelReport:
    level: int
    n_samples: int
    dim: int
    deviation: float
    zeroed: bool
    wall_time_s: float


@dataclass
class MultilevelEstimate:
    """Sum of per-level projections; ``fits[l]`` approximates ``f_l - f_{l-1}``."""

    fits: list[LeastSquaresFit]
    schedule: MultilevelSchedule
    work: float
    conditioned: bool = False
    reports: list[LevelReport] = field(default_factory=list)

    def __call__(self, Y) -> np.ndarray:
        return self.evaluate(Y)

    def evaluate(self, Y) -> np.ndarray:
        Y = check_points(Y, dim=self.fits[0].space.dim, name="Y")
        out = np.zeros(len(Y))
        for fit in self.fits:
            if np.any(fit.coefficients):
                out += fit.evaluate(Y)
        return out

    def to_dict(self) -> dict:
        return {
            "schedule": self.schedule.to_dict(),
            "work": self.work,
            "conditioned": self.conditioned,
            "fits": [{"coefficients": f.coefficients.tolist(),
                      "gramian_deviation": f.gramian_deviation,
                      "conditioned_zeroed": f.conditioned_zeroed,
                      "n_samples": f.n_samples} for f in self.fits],
            "reports": [asdict(r) for r in self.reports],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, data: dict) -> "MultilevelEstimate":
        schedule = MultilevelSchedule.from_dict(data["schedule"])
        fits = [LeastSquaresFit(schedule.space_for_level(l), np.array(f["coefficients"]),
                                f["gramian_deviation"], f["conditioned_zeroed"],
                                n_samples=f["n_samples"])
                for l, f in enumerate(data["fits"])]
        return cls(fits, schedule, data["work"], data["conditioned"],
                   [LevelReport(**r) for r in data["reports"]])


def _draw(kind: str, space: DownwardClosedSet, n: int, seed: int, k: int):
    return sample(SamplingSpec(kind, space.dim, space), n, seed, STREAM_MULTILEVEL, k)


def run_multilevel(family: LevelFamily, schedule: MultilevelSchedule, sampler: str = "optimal",
                   seed: int = 0, conditioned: bool = False, nested: bool = False
                   ) -> MultilevelEstimate:
    """Fit every level difference on its space and sum the projections.

    The points for space ``V_k`` come from the stream ``(seed, k)`` and are
    independent across levels. With ``nested=True`` (arcsine sampling only)
    every level uses a prefix of the largest point set.

    Raises:
        FamilyEvaluationError: propagated from the family with level context.
    """
    L = schedule.L
    if nested and sampler != "arcsine":
        raise ValueError("nested sample sets require the arcsine sampler")
    pool = None
    if nested:
        pool = sample_arcsine(family.dim, max(schedule.sample_counts), seed, STREAM_MULTILEVEL)
    fitter = solve_conditioned if conditioned else solve
    fits, reports = [], []
    for l in range(L + 1):
        t0 = time.perf_counter()
        k = L - l
        space = schedule.spaces[k]
        count = schedule.sample_counts[k]
        if nested:
            pts, wts = pool.points[:count], pool.weights[:count]
        else:
            draw = _draw(sampler, space, count, seed, k)
            pts, wts = draw.points, draw.weights
        values = family.difference(l, pts)
        fit = fitter(LeastSquaresProblem(space, pts, wts, values), seed=seed)
        fits.append(fit)
        reports.append(LevelReport(l, count, len(space), fit.gramian_deviation,
                                   fit.conditioned_zeroed, time.perf_counter() - t0))
    work = work_estimate(schedule, family.cost)
    return MultilevelEstimate(fits, schedule, work, conditioned, reports)


def family_base(family: LevelFamily, params: RateParams) -> float:
    """Schedule base matching the family's level spacing."""
    return family.level_base ** (params.gamma + params.beta_s)


class MultilevelLeastSquares(BaseEstimator):
    """Multilevel weighted least-squares surrogate of a level family.

    ``fit`` takes a :class:`LevelFamily` in place of a data matrix, since the
    estimator chooses its own sample locations.

    Parameters
    ----------
    alpha, sigma, beta_s, gamma : float
        Rate exponents, see :class:`RateParams`.
    beta_w : float, optional
        L2 rate; defaults to ``beta_s``.
    L : int, optional
        Finest level. Derived from ``epsilon`` when None.
    epsilon : float, optional
        Target accuracy used when ``L`` is None.
    sampler : {"optimal", "arcsine", "mis"}
    conditioned : bool
        Use the conditioned projection on every level.
    kappa_scale : float
    nested : bool
        Reuse one arcsine point set across levels.
    random_state : int
    """

    def __init__(self, alpha: float = 3.0, sigma: float = 2.0, beta_s: float = 2.0,
                 gamma: float = 2.0, beta_w: float | None = None, L: int | None = None,
                 epsilon: float | None = None, sampler: str = "optimal",
                 conditioned: bool = False, kappa_scale: float = 1.0, nested: bool = False,
                 random_state: int = 0):
        self.alpha = alpha
        self.sigma = sigma
        self.beta_s = beta_s
        self.gamma = gamma
        self.beta_w = beta_w
        self.L = L
        self.epsilon = epsilon
        self.sampler = sampler
        self.conditioned = conditioned
        self.kappa_scale = kappa_scale
        self.nested = nested
        self.random_state = random_state

    def rate_params(self) -> RateParams:
        return RateParams(self.alpha, self.sigma, self.beta_s, self.gamma, self.beta_w,
                          self.kappa_scale)

    def fit(self, family: LevelFamily, y=None):
        if not isinstance(family, LevelFamily):
            raise TypeError("fit expects a LevelFamily")
        params = self.rate_params()
        base = family_base(family, params)
        if self.L is not None:
            L = int(self.L)
        elif self.epsilon is not None:
            L = choose_levels(params, self.epsilon, base=base)
        else:
            raise ValueError("set either L or epsilon")
        self.schedule_ = build_schedule(params, L, d=family.dim, base=base)
        self.estimate_ = run_multilevel(family, self.schedule_, self.sampler,
                                        self.random_state, self.conditioned, self.nested)
        self.work_ = self.estimate_.work
        self.n_features_in_ = family.dim
        return self

    def predict(self, X):
        check_is_fitted(self, "estimate_")
        return self.estimate_.evaluate(check_points(X, dim=self.n_features_in_))
