"""Experiment engine: configurations, sweeps, Monte-Carlo errors, rate fits and CSV output."""

from __future__ import annotations

import csv
import io
import json
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .adaptive import AdaptiveState, run_adaptive
from .indexsets import total_degree_set
from .lsq import KAPPA_R1, LeastSquaresProblem, sample_count_for, solve, solve_conditioned
from .multilevel import (RateParams, build_schedule, classify_regime, family_base,
                         rigorous_kappa_scale, run_multilevel)
from .problems import Elliptic2D, LevelFamily, SyntheticFamily
from .sampling import SamplingSpec, make_rng, sample

METHODS = ("sl", "ml", "ml-conditioned", "adaptive")
SAMPLERS = ("optimal", "arcsine", "mis")
FIXED_COLUMNS = ("L", "work", "wall_time_s", "error", "error_se", "seed")
LEVEL_FIELDS = ("n_samples", "dim", "deviation", "zeroed")
#: Stream tags of ``make_rng(seed, tag, ...)`` used by the harness.
STREAM_MC, STREAM_SL = 3, 4


class ConfigError(ValueError):
    category = "config"


@dataclass
class RunConfig:
    """Description of one sweep.

    ``sweep`` lists finest levels for ``ml`` methods, ``[level, degree]``
    pairs for ``sl`` and step budgets for ``adaptive``. ``rates`` overrides
    the family's declared exponents; ``sigma_mode="half"`` uses ``sigma = d/2``.
    ``reference_level`` fixes the level of the error reference; by default
    it is one above the run's finest level.
    """

    problem: str = "synthetic"
    problem_params: dict = field(default_factory=dict)
    method: str = "ml"
    sweep: list = field(default_factory=lambda: [1, 2, 3])
    sampler: str = "optimal"
    seeds: list = field(default_factory=lambda: [0])
    mc_count: int = 1000
    output: str | None = None
    rates: dict | None = None
    sigma_mode: str = "full"
    nested: bool = False
    solver_cost: bool = False
    kappa_mode: str = "default"
    sl_kappa: float = KAPPA_R1
    adaptive_kappa: float = KAPPA_R1
    reference_level: int | None = None

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.problem not in ("synthetic", "elliptic"):
            raise ConfigError(f"unknown problem {self.problem!r}")
        if self.method not in METHODS:
            raise ConfigError(f"unknown method {self.method!r}")
        if self.sampler not in SAMPLERS:
            raise ConfigError(f"unknown sampler {self.sampler!r}")
        if not self.sweep:
            raise ConfigError("sweep must not be empty")
        if not self.seeds:
            raise ConfigError("seeds must not be empty")
        if self.mc_count < 1:
            raise ConfigError("mc_count must be at least 1")
        if self.sigma_mode not in ("full", "half"):
            raise ConfigError("sigma_mode must be 'full' or 'half'")
        if self.kappa_mode not in ("default", "rigorous"):
            raise ConfigError("kappa_mode must be 'default' or 'rigorous'")
        if self.method == "sl" and any(not isinstance(p, (list, tuple)) or len(p) != 2
                                       for p in self.sweep):
            raise ConfigError("sl sweeps need [level, degree] pairs")

    def to_dict(self) -> dict:
        out = asdict(self)
        out["sweep"] = [list(p) if isinstance(p, (list, tuple)) else p for p in self.sweep]
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        known = set(cls.__dataclass_fields__)
        extra = set(data) - known
        if extra:
            raise ConfigError(f"unknown configuration keys: {sorted(extra)}")
        return cls(**data)

    @classmethod
    def from_file(cls, path) -> "RunConfig":
        try:
            return cls.from_dict(json.loads(Path(path).read_text()))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON in {path}: {exc}") from exc


@dataclass
class LevelColumns:
    n_samples: int
    dim: int
    deviation: float
    zeroed: bool


@dataclass
class RunRow:
    L: int
    work: float
    wall_time_s: float
    error: float
    error_se: float
    seed: int
    levels: list[LevelColumns] = field(default_factory=list)


@dataclass
class RunRecord:
    config: RunConfig
    rows: list[RunRow]
    rates: dict = field(default_factory=dict)
    version: str = ""


# -- problems and rates ----------------------------------------------------

def make_family(config: RunConfig) -> LevelFamily:
    params = dict(config.problem_params)
    try:
        if config.problem == "synthetic":
            return SyntheticFamily(**params)
        return Elliptic2D(**params)
    except TypeError as exc:
        raise ConfigError(f"bad problem parameters: {exc}") from exc


def default_rates(family: LevelFamily, sigma_mode: str = "full") -> RateParams:
    """Declared exponents of a family."""
    if isinstance(family, SyntheticFamily):
        sigma = family.sigma if sigma_mode == "full" else family.dim / 2
        return RateParams(family.alpha, sigma, family.beta_s, family.gamma, family.beta_w)
    if isinstance(family, Elliptic2D):
        sigma = family.dim if sigma_mode == "full" else family.dim / 2
        return RateParams(family.s, sigma, 2.0, 2.0)
    raise ConfigError("rates must be given for this family")


def rates_for(config: RunConfig, family: LevelFamily) -> RateParams:
    if config.rates:
        params = RateParams(**config.rates)
    else:
        params = default_rates(family, config.sigma_mode)
    if config.kappa_mode == "rigorous" and config.sampler != "optimal":
        params = RateParams(params.alpha, params.sigma, params.beta_s, params.gamma,
                            params.beta_w, params.kappa_scale * rigorous_kappa_scale(family.dim))
    return params


# -- error estimation ------------------------------------------------------

def mc_points(d: int, M: int, seed: int) -> np.ndarray:
    return make_rng(seed, STREAM_MC).uniform(size=(M, d))


def mc_error(estimate: Callable, family: LevelFamily, L_run: int, M: int = 1000, seed: int = 0,
             reference: np.ndarray | None = None) -> tuple[float, float]:
    """Root mean squared deviation from the level ``L_run + 1`` reference at ``M`` uniform points.

    The standard error of the mean of squares is propagated through the
    square root to first order.
    """
    if M < 1:
        raise ValueError("M must be at least 1")
    Y = mc_points(family.dim, M, seed)
    if reference is None:
        reference = family.reference_value(Y, L_run)
    sq = (np.asarray(reference) - estimate(Y)) ** 2
    ms = float(np.mean(sq))
    err = math.sqrt(ms)
    se_ms = float(np.std(sq, ddof=1) / math.sqrt(M)) if M > 1 else 0.0
    se = se_ms / (2.0 * err) if err > 0 else 0.0
    return err, se


class _ReferenceCache:
    """Reference values per (seed, level) so sweeps evaluate each fine level once."""

    def __init__(self, family: LevelFamily, M: int):
        self.family, self.M = family, M
        self._cache: dict[tuple[int, int], np.ndarray] = {}

    def __call__(self, seed: int, level: int) -> np.ndarray:
        key = (seed, level)
        if key not in self._cache:
            self._cache[key] = self.family.evaluate(level, mc_points(self.family.dim, self.M, seed))
        return self._cache[key]


# -- engines ---------------------------------------------------------------

def run_single_level(config: RunConfig, family: LevelFamily | None = None,
                     refs: _ReferenceCache | None = None) -> list[RunRow]:
    """One weighted least-squares fit of ``f_level`` per ``(level, degree)`` pair and seed."""
    family = family or make_family(config)
    refs = refs or _ReferenceCache(family, config.mc_count)
    fitter = solve_conditioned if config.method == "ml-conditioned" else solve
    rows = []
    for seed in config.seeds:
        for level, degree in config.sweep:
            t0 = time.perf_counter()
            space = total_degree_set(family.dim, int(degree))
            n = sample_count_for(len(space), config.sl_kappa)
            draw = sample(SamplingSpec(config.sampler, family.dim, space), n, seed, STREAM_SL,
                          int(level), int(degree))
            fit = fitter(LeastSquaresProblem(space, draw.points, draw.weights,
                                             family.evaluate(int(level), draw.points)), seed=seed)
            wall = time.perf_counter() - t0
            ref_level = config.reference_level if config.reference_level is not None \
                else int(level) + 1
            err, se = mc_error(fit, family, int(level), config.mc_count, seed,
                               reference=refs(seed, ref_level))
            rows.append(RunRow(int(level), n * family.cost(int(level)), wall, err, se, seed,
                               [LevelColumns(n, len(space), fit.gramian_deviation,
                                             fit.conditioned_zeroed)]))
    return rows


def run_ml_rows(config: RunConfig, family: LevelFamily | None = None,
                refs: _ReferenceCache | None = None) -> list[RunRow]:
    family = family or make_family(config)
    refs = refs or _ReferenceCache(family, config.mc_count)
    params = rates_for(config, family)
    base = family_base(family, params)
    rows = []
    for seed in config.seeds:
        for L in config.sweep:
            L = int(L)
            schedule = build_schedule(params, L, d=family.dim, base=base,
                                      solver_cost=config.solver_cost)
            t0 = time.perf_counter()
            est = run_multilevel(family, schedule, config.sampler, seed,
                                 conditioned=config.method == "ml-conditioned",
                                 nested=config.nested)
            wall = time.perf_counter() - t0
            ref_level = config.reference_level if config.reference_level is not None else L + 1
            err, se = mc_error(est, family, L, config.mc_count, seed,
                               reference=refs(seed, ref_level))
            rows.append(RunRow(L, est.work, wall, err, se, seed,
                               [LevelColumns(r.n_samples, r.dim, r.deviation, r.zeroed)
                                for r in est.reports]))
    return rows


def run_adaptive_rows(config: RunConfig, family: LevelFamily | None = None,
                      refs: _ReferenceCache | None = None) -> list[RunRow]:
    """One row per step budget; budgets of a seed share one incremental run."""
    family = family or make_family(config)
    refs = refs or _ReferenceCache(family, config.mc_count)
    rows = []
    budgets = sorted(int(b) for b in config.sweep)
    for seed in config.seeds:
        state = AdaptiveState(d=family.dim, seed=seed, kappa=config.adaptive_kappa)
        done, wall = 0, 0.0
        for budget in budgets:
            t0 = time.perf_counter()
            if budget > done:
                run_adaptive(family, steps=budget - done, state=state)
                done = budget
            wall += time.perf_counter() - t0
            top = max(state.levels())
            ref_level = config.reference_level if config.reference_level is not None else top + 1
            err, se = mc_error(state, family, top, config.mc_count, seed,
                               reference=refs(seed, ref_level))
            levels = [LevelColumns(len(state.pools[l]), len(state.fits[l].space),
                                   state.fits[l].gramian_deviation, False)
                      for l in range(top + 1)]
            rows.append(RunRow(budget, state.total_work, wall, err, se, seed, levels))
    return rows


def run_sweep(config: RunConfig, family: LevelFamily | None = None) -> RunRecord:
    """Run every sweep point and seed of ``config``; rows are sorted by work."""
    from . import __version__

    config.validate()
    family = family or make_family(config)
    if config.method == "sl":
        rows = run_single_level(config, family)
    elif config.method == "adaptive":
        rows = run_adaptive_rows(config, family)
    else:
        rows = run_ml_rows(config, family)
    rows.sort(key=lambda r: (r.work, r.seed, r.L))
    rates = {}
    if len({r.work for r in rows}) >= 3:
        rf = fit_rate(rows)
        rates["model"] = {"slope": rf.slope, "intercept": rf.intercept}
    if config.method in ("ml", "ml-conditioned"):
        reg = classify_regime(rates_for(config, family))
        rates["regime"] = {"case": reg.case, "lambda": reg.lam, "t": reg.t}
    record = RunRecord(config, rows, rates, __version__)
    if config.output:
        emit(record, config.output)
    return record


# -- rates and envelopes -----------------------------------------------------

@dataclass
class RateFit:
    slope: float
    intercept: float
    t: float = 0.0


def fit_rate(rows: Sequence[RunRow] | None = None, work=None, error=None, t: float = 0.0) -> RateFit:
    """Least-squares slope of ``log error`` against ``log(work / |log error|^t)``."""
    if rows is not None:
        work = [r.work for r in rows]
        error = [r.error for r in rows]
    work = np.asarray(work, dtype=float)
    error = np.asarray(error, dtype=float)
    if len(np.unique(work)) < 3:
        raise ValueError("need at least three rows with distinct work")
    if np.any(error <= 0) or np.any(work <= 0):
        raise ValueError("work and error must be positive")
    x = np.log(work)
    if t:
        x = x - t * np.log(np.abs(np.log(error)))
    slope, intercept = np.polyfit(x, np.log(error), 1)
    return RateFit(float(slope), float(intercept), t)


def lower_envelope(rows: Sequence[RunRow]) -> list[RunRow]:
    """Rows not dominated by a cheaper row with smaller or equal error."""
    out, best = [], math.inf
    for r in sorted(rows, key=lambda r: (r.work, r.error)):
        if r.error < best:
            out.append(r)
            best = r.error
    return out


def work_to_reach(rows: Sequence[RunRow], error: float) -> float:
    """Smallest work among rows with error at most ``error`` (``inf`` if none)."""
    works = [r.work for r in rows if r.error <= error]
    return min(works) if works else math.inf


# -- output ----------------------------------------------------------------

def _fmt(v) -> str:
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def rows_to_csv(rows: Sequence[RunRow]) -> str:
    width = max((len(r.levels) for r in rows), default=0)
    header = list(FIXED_COLUMNS) + [f"{f}_{j}" for j in range(width) for f in LEVEL_FIELDS]
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for r in rows:
        line = [_fmt(r.L), _fmt(float(r.work)), _fmt(float(r.wall_time_s)), _fmt(float(r.error)),
                _fmt(float(r.error_se)), _fmt(r.seed)]
        for j in range(width):
            if j < len(r.levels):
                c = r.levels[j]
                line += [_fmt(c.n_samples), _fmt(c.dim), _fmt(float(c.deviation)), _fmt(c.zeroed)]
            else:
                line += ["", "", "", ""]
        writer.writerow(line)
    return buf.getvalue()


def rows_from_csv(text: str) -> list[RunRow]:
    reader = csv.reader(io.StringIO(text))
    header = next(reader)
    width = (len(header) - len(FIXED_COLUMNS)) // len(LEVEL_FIELDS)
    rows = []
    for line in reader:
        levels = []
        for j in range(width):
            cell = line[len(FIXED_COLUMNS) + 4 * j: len(FIXED_COLUMNS) + 4 * (j + 1)]
            if cell[0] == "":
                break
            levels.append(LevelColumns(int(cell[0]), int(cell[1]), float(cell[2]), cell[3] == "1"))
        rows.append(RunRow(int(line[0]), float(line[1]), float(line[2]), float(line[3]),
                           float(line[4]), int(line[5]), levels))
    return rows


def metadata_path(csv_path) -> Path:
    return Path(csv_path).with_suffix(".json")


def emit(record: RunRecord, path) -> tuple[Path, Path]:
    """Write ``<path>`` (CSV rows) and ``<path>.json`` (config, version, seeds, rates)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(rows_to_csv(record.rows))
    meta = {"config": record.config.to_dict(), "version": record.version,
            "seeds": list(record.config.seeds), "rates": record.rates,
            "nondeterministic_columns": ["wall_time_s"]}
    mpath = metadata_path(path)
    mpath.write_text(json.dumps(meta, sort_keys=True, indent=2) + "\n")
    return path, mpath


def parse(path) -> RunRecord:
    """Inverse of :func:`emit`."""
    path = Path(path)
    rows = rows_from_csv(path.read_text())
    meta = json.loads(metadata_path(path).read_text())
    return RunRecord(RunConfig.from_dict(meta["config"]), rows, meta["rates"], meta["version"])


def strip_wall_time(csv_text: str) -> str:
    """CSV text with the wall-time column removed, for reproducibility checks."""
    idx = FIXED_COLUMNS.index("wall_time_s")
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    for line in csv.reader(io.StringIO(csv_text)):
        writer.writerow(line[:idx] + line[idx + 1:])
    return out.getvalue()
