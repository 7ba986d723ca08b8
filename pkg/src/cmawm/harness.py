"""Experiment driver: trials, aggregation, alpha sweeps, MO runs and CSV output.

Trial ``k`` of an experiment with master seed ``s`` runs on the stream
seeded by ``SeedSequence([s, k])``; its 64-bit derived seed is what the
per-trial CSV records, and ``run_trial(config, seed)`` replays it exactly.
"""

from __future__ import annotations

import configparser
import csv
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .benchmarks import BENCHMARK_NAMES, make_benchmark
from .cma import CMAwM, Termination, default_params
from .im import CMAESIM
from .mo import MOCMAwM
from .numerics import DefinitenessError, RngStream

SINGLE_OBJECTIVE = ("cma-es-margin", "cma-es-im", "cma-es-im-box")
MULTI_OBJECTIVE = ("mo-cma-es", "mo-cma-es-margin")
ALGORITHMS = SINGLE_OBJECTIVE + MULTI_OBJECTIVE
SWEEP_EXPONENTS = (0.0, 0.5, 1.0, 1.5, 2.0, 2.5, 3.0)

TRIALS_HEADER = ("function", "N", "algorithm", "alpha", "seed", "success", "evaluations",
                 "best_f", "termination")
SUMMARY_HEADER = ("function", "N", "algorithm", "alpha", "trials", "successes",
                  "median_evals", "iqr")
SWEEP_HEADER = ("m", "n", "alpha", "success_rate", "median_evals", "iqr")
MO_TRACE_HEADER = ("iteration", "hypervolume", "p_med_min", "p_med_median")


class ConfigError(ValueError):
    """Invalid or incomplete experiment configuration."""


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything needed to run one experiment.

    ``budget`` counts evaluations for single-objective runs and iterations
    for multi-objective ones. ``alpha = None`` means ``1 / (N popsize)``.
    """

    algorithm: str = "cma-es-margin"
    benchmark: str = "SphereOneMax"
    n: int = 20
    n_co: Optional[int] = None
    trials: int = 1
    seed: int = 0
    alpha: Optional[float] = None
    popsize: Optional[int] = None
    budget: Optional[int] = None
    box: Optional[float] = None
    integer_min: Optional[int] = None
    integer_max: Optional[int] = None
    sweep_m: Tuple[float, ...] = SWEEP_EXPONENTS
    sweep_n: Tuple[float, ...] = SWEEP_EXPONENTS
    output: str = "results"
    threads: int = 1

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ConfigError(f"algorithm must be one of {', '.join(ALGORITHMS)}")
        if self.benchmark not in BENCHMARK_NAMES:
            raise ConfigError(f"benchmark must be one of {', '.join(BENCHMARK_NAMES)}")
        multi = self.benchmark in ("DSLOTZ", "DSInt")
        if multi != (self.algorithm in MULTI_OBJECTIVE):
            raise ConfigError(f"{self.algorithm} cannot run the benchmark {self.benchmark}")
        if self.n < 2:
            raise ConfigError("n must be at least 2")
        if self.trials < 1:
            raise ConfigError("trials must be at least 1")
        if not 0 <= self.seed < 2**64:
            raise ConfigError("seed must be an unsigned 64-bit integer")
        if self.alpha is not None and not 0.0 <= self.alpha < 0.5:
            raise ConfigError("alpha must lie in [0, 0.5)")
        if self.budget is not None and self.budget < 0:
            raise ConfigError("budget must be non-negative")
        if self.popsize is not None and self.popsize < 2:
            raise ConfigError("popsize must be at least 2")
        if self.threads < 1:
            raise ConfigError("threads must be at least 1")
        for grid in (self.sweep_m, self.sweep_n):
            if not grid or any(v not in SWEEP_EXPONENTS for v in grid):
                raise ConfigError(f"sweep exponents must come from {SWEEP_EXPONENTS}")
        if (self.integer_min is None) != (self.integer_max is None):
            raise ConfigError("integer_min and integer_max go together")
        if self.integer_min is not None and self.integer_max <= self.integer_min:
            raise ConfigError("integer_max must exceed integer_min")

    @property
    def is_multi_objective(self) -> bool:
        return self.algorithm in MULTI_OBJECTIVE

    @property
    def effective_budget(self) -> int:
        if self.budget is not None:
            return self.budget
        return 2000 if self.is_multi_objective else 10**6

    def benchmark_spec(self):
        values = None
        if self.integer_min is not None:
            values = tuple(range(self.integer_min, self.integer_max + 1))
        try:
            return make_benchmark(self.benchmark, self.n, self.n_co, values)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def resolved_popsize(self) -> int:
        if self.popsize is not None:
            return self.popsize
        return 10 if self.is_multi_objective else default_params(self.n).popsize

    def resolved_alpha(self) -> Optional[float]:
        """Margin used by the algorithm; None for the integer mutation baseline."""
        if self.algorithm in ("cma-es-im", "cma-es-im-box"):
            return None
        if self.algorithm == "mo-cma-es":
            return 0.0
        if self.alpha is not None:
            return self.alpha
        return 1.0 / (self.n * self.resolved_popsize())


_INT_KEYS = {"n", "n_co", "trials", "seed", "popsize", "budget", "integer_min", "integer_max",
             "threads"}
_FLOAT_KEYS = {"alpha", "box"}
_GRID_KEYS = {"sweep_m", "sweep_n"}
_STR_KEYS = {"algorithm", "benchmark", "output"}


def load_config(path: str, **overrides) -> ExperimentConfig:
    """Read an INI file with a single ``[experiment]`` section.

    Keyword overrides (e.g. from the command line) win over file values;
    ``None`` overrides are ignored.
    """
    parser = configparser.ConfigParser()
    try:
        with open(path, encoding="utf-8") as fh:
            parser.read_file(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except configparser.Error as exc:
        raise ConfigError(f"malformed config {path}: {exc}") from exc
    extra = set(parser.sections()) - {"experiment"}
    if extra:
        raise ConfigError(f"unknown section(s) in {path}: {', '.join(sorted(extra))}")
    if not parser.has_section("experiment"):
        raise ConfigError(f"{path} has no [experiment] section")
    return config_from_mapping(dict(parser.items("experiment")), **overrides)


def config_from_mapping(raw: Dict[str, str], **overrides) -> ExperimentConfig:
    known = _INT_KEYS | _FLOAT_KEYS | _GRID_KEYS | _STR_KEYS
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"unknown config key(s): {', '.join(sorted(unknown))}")
    values = {}
    for key, text in raw.items():
        text = text.strip()
        try:
            if key in _STR_KEYS:
                values[key] = text
            elif text.lower() in ("", "default", "none"):
                values[key] = None
            elif key in _INT_KEYS:
                values[key] = int(text)
            elif key in _FLOAT_KEYS:
                values[key] = float(text)
            else:
                values[key] = tuple(float(v) for v in text.split(","))
        except ValueError as exc:
            raise ConfigError(f"bad value for {key}: {text!r}") from exc
    if values.get("sweep_m", ()) is None or values.get("sweep_n", ()) is None:
        raise ConfigError("sweep grids cannot be empty")
    for key in ("trials", "threads"):
        if key in values and values[key] is None:
            raise ConfigError(f"{key} needs a value")
    values.update({k: v for k, v in overrides.items() if v is not None})
    return ExperimentConfig(**values)


@dataclass
class TrialRecord:
    function: str
    n: int
    algorithm: str
    alpha: Optional[float]
    seed: int
    success: bool
    evaluations: int
    best_f: float
    termination: str
    history: Optional[List[Tuple[np.ndarray, np.ndarray, float]]] = field(default=None, repr=False)

    def row(self) -> tuple:
        return (self.function, self.n, self.algorithm, _fmt(self.alpha), self.seed,
                "true" if self.success else "false", self.evaluations, _fmt(self.best_f),
                self.termination)


def trial_seed(master_seed: int, trial_index: int) -> int:
    """64-bit seed of trial ``trial_index``, derived from the master seed."""
    state = np.random.SeedSequence([master_seed, trial_index]).generate_state(2, np.uint32)
    return int(state[0]) | (int(state[1]) << 32)


def _build_optimizer(config: ExperimentConfig, rng: RngStream):
    spec = config.benchmark_spec()
    mean = spec.initial_mean(rng)
    if config.algorithm == "cma-es-margin":
        opt = CMAwM(spec.space, mean, spec.sigma0, popsize=config.popsize,
                    alpha=config.resolved_alpha(), rng=rng)
    else:
        box = None
        if config.algorithm == "cma-es-im-box":
            lo, hi = spec.im_box()
            if config.box is not None:
                hi = np.where(np.isfinite(hi), config.box, hi)
                lo = -hi
            box = (lo, hi)
        opt = CMAESIM(spec.im_space(), mean, spec.sigma0, popsize=config.popsize, box=box, rng=rng)
    return spec, opt


def run_trial(config: ExperimentConfig, seed: int, record_history: bool = False) -> TrialRecord:
    """Run one single-objective trial to termination.

    Numerical breakdowns (a covariance that loses positive definiteness)
    end the trial with termination ``not_positive_definite``.
    """
    if config.is_multi_objective:
        raise ConfigError("run_trial handles single-objective algorithms only")
    rng = RngStream(seed)
    spec, opt = _build_optimizer(config, rng)
    budget = config.effective_budget
    history = [] if record_history else None
    try:
        while (reason := opt.should_stop(budget)) is None:
            opt.step(spec.evaluate)
            if history is not None:
                s = opt.state
                history.append((s.mean.copy(), s.sigma * np.sqrt(np.diag(s.C)), opt.best_f))
    except (DefinitenessError, np.linalg.LinAlgError, FloatingPointError):
        reason = Termination.NOT_POSITIVE_DEFINITE
    return TrialRecord(spec.name, spec.n, config.algorithm, config.resolved_alpha(), seed,
                       reason is Termination.SUCCESS, opt.evaluations, opt.best_f,
                       reason.value, history)


def _run_indexed(args):
    config, k = args
    return run_trial(config, trial_seed(config.seed, k))


def run_trials(config: ExperimentConfig) -> List[TrialRecord]:
    """All trials of an experiment, in trial order regardless of ``threads``."""
    jobs = [(config, k) for k in range(config.trials)]
    if config.threads == 1 or config.trials == 1:
        return [_run_indexed(job) for job in jobs]
    with ProcessPoolExecutor(max_workers=config.threads) as pool:
        return list(pool.map(_run_indexed, jobs))


@dataclass(frozen=True)
class Summary:
    function: str
    n: int
    algorithm: str
    alpha: Optional[float]
    trials: int
    successes: int
    median_evals: Optional[float]
    iqr: Optional[float]

    @property
    def success_rate(self) -> float:
        return self.successes / self.trials

    def row(self) -> tuple:
        return (self.function, self.n, self.algorithm, _fmt(self.alpha), self.trials,
                self.successes, _fmt(self.median_evals), _fmt(self.iqr))


def aggregate(records: Sequence[TrialRecord]) -> Summary:
    """Success count, plus median and IQR of evaluations over successful trials.

    Percentiles use linear interpolation between closest ranks (numpy's
    default). With no success the median and IQR are absent.
    """
    if not records:
        raise ValueError("cannot aggregate an empty list of trials")
    first = records[0]
    evals = np.array([r.evaluations for r in records if r.success], dtype=float)
    if evals.size:
        q25, q50, q75 = np.percentile(evals, [25, 50, 75])
        median, iqr = float(q50), float(q75 - q25)
    else:
        median = iqr = None
    return Summary(first.function, first.n, first.algorithm, first.alpha, len(records),
                   int(evals.size), median, iqr)


def sweep_cells(config: ExperimentConfig) -> List[Tuple[float, float, float]]:
    """``(m, n, alpha)`` for every grid cell except alpha = 1."""
    lam = config.resolved_popsize()
    return [(m, n, config.n ** -m * lam ** -n)
            for m in config.sweep_m for n in config.sweep_n if not (m == 0 and n == 0)]


def alpha_sweep(config: ExperimentConfig) -> List[Tuple[float, float, Summary, List[TrialRecord]]]:
    if config.algorithm != "cma-es-margin":
        raise ConfigError("the alpha sweep needs algorithm = cma-es-margin")
    out = []
    for m, n, alpha in sweep_cells(config):
        records = run_trials(replace(config, alpha=alpha))
        out.append((m, n, aggregate(records), records))
    return out


@dataclass
class MoRunResult:
    seed: int
    hypervolume: List[float]
    p_med_min: List[float]
    p_med_median: List[float]
    final_f: np.ndarray
    final_encoded: np.ndarray
    iterations: int
    aborted: bool
    p_med_all: List[np.ndarray] = field(default_factory=list, repr=False)


def mo_trial(config: ExperimentConfig, seed: int, iterations: Optional[int] = None,
             keep_p_med: bool = False, audit=None) -> MoRunResult:
    """One multi-objective run, tracing hypervolume and p_med every iteration.

    Row 0 of each trace describes the initial population. ``audit`` (if
    given) is called after every step with the optimizer.
    """
    if not config.is_multi_objective:
        raise ConfigError("mo_trial needs a multi-objective algorithm")
    spec = config.benchmark_spec()
    rng = RngStream(seed)
    lam = config.resolved_popsize()
    means = spec.initial_population(rng, lam)
    opt = MOCMAwM(spec.space, spec.evaluate, means, spec.sigma0,
                  alpha=config.resolved_alpha(), rng=rng)
    total = config.effective_budget if iterations is None else iterations
    hv, pmin, pmed, pall = [], [], [], []

    def record():
        hv.append(opt.hypervolume())
        p = opt.p_med_values()
        pmin.append(float(np.min(p)) if p.size else math.nan)
        pmed.append(float(np.median(p)) if p.size else math.nan)
        if keep_p_med:
            pall.append(p)

    record()
    aborted = False
    for _ in range(total):
        try:
            opt.step()
        except (DefinitenessError, np.linalg.LinAlgError, FloatingPointError):
            aborted = True
            break
        if audit is not None:
            audit(opt)
        record()
    final_f = np.array([ind.f for ind in opt.population])
    final_x = np.array([ind.encoded for ind in opt.population])
    return MoRunResult(seed, hv, pmin, pmed, final_f, final_x, opt.iteration, aborted, pall)


def mo_run(config: ExperimentConfig) -> List[MoRunResult]:
    jobs = [trial_seed(config.seed, k) for k in range(config.trials)]
    if config.threads == 1 or config.trials == 1:
        return [mo_trial(config, s) for s in jobs]
    with ProcessPoolExecutor(max_workers=config.threads) as pool:
        return list(pool.map(mo_trial, [config] * len(jobs), jobs))


def median_trace(runs: Sequence[MoRunResult]) -> List[tuple]:
    """Per-iteration median hypervolume over runs, with p_med min and median.

    Runs that stopped early hold their last value.
    """
    length = max(len(r.hypervolume) for r in runs)

    def padded(seq):
        return np.array(list(seq) + [seq[-1]] * (length - len(seq)))

    hv = np.stack([padded(r.hypervolume) for r in runs])
    pmin = np.stack([padded(r.p_med_min) for r in runs])
    pmed = np.stack([padded(r.p_med_median) for r in runs])
    with np.errstate(all="ignore"):
        rows = [(t, float(np.median(hv[:, t])), float(np.min(pmin[:, t])),
                 float(np.median(pmed[:, t]))) for t in range(length)]
    return rows


def _fmt(value) -> str:
    if value is None:
        return "-"
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    value = float(value)
    if math.isnan(value):
        return "nan"
    return repr(value)


def emit_csv(path: str, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    """Write a comma-separated file with a header row and LF line endings."""
    try:
        parent = os.path.dirname(path)
        if parent:
            os.makedirs(parent, exist_ok=True)
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(header)
            for row in rows:
                writer.writerow([v if isinstance(v, str) else _fmt(v) for v in row])
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc


def read_csv(path: str) -> List[Dict[str, str]]:
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def parse_trial_row(row: Dict[str, str]) -> TrialRecord:
    """Inverse of :meth:`TrialRecord.row` (history is not stored)."""
    alpha = None if row["alpha"] == "-" else float(row["alpha"])
    return TrialRecord(row["function"], int(row["N"]), row["algorithm"], alpha, int(row["seed"]),
                       row["success"] == "true", int(row["evaluations"]), float(row["best_f"]),
                       row["termination"])


def trace_rows(record: TrialRecord) -> Tuple[List[str], List[tuple]]:
    """Header and rows of a per-iteration trace (mean, coordinate std, best f)."""
    if not record.history:
        return ["iteration", "best_f"], []
    n = record.history[0][0].size
    header = (["iteration", "best_f"] + [f"m_{j}" for j in range(n)]
              + [f"sd_{j}" for j in range(n)])
    rows = [(t + 1, best, *mean, *sd) for t, (mean, sd, best) in enumerate(record.history)]
    return header, rows


def all_aborted(records: Sequence[TrialRecord]) -> bool:
    return bool(records) and all(
        r.termination == Termination.NOT_POSITIVE_DEFINITE.value for r in records)


def final_population_rows(run: MoRunResult) -> Tuple[List[str], List[tuple]]:
    n = run.final_encoded.shape[1]
    header = ["individual", "f1", "f2"] + [f"x_{j}" for j in range(n)]
    rows = [(i, f[0], f[1], *x) for i, (f, x) in enumerate(zip(run.final_f, run.final_encoded))]
    return header, rows
