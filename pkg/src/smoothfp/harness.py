"""Experiment configuration, metrics, persistence and aggregation over seeds.

A config is a JSON file::

    {
      "game": {"path": "game.json"}
          or {"generate": {"states": 2, "actions": [2, 2], "class": "ZeroSum",
                           "mixing": 0.2, "discount": 0.5}},
      "algorithm": "mfp",                 # sfp | mfp | sbrd | mbrd
      "beta": 0.1, "regularizer": "entropy",
      "schedule": {"kind": "harmonic"},   # discrete value rate (learners.Schedule)
      "rate": {"kind": "harmonic"},       # continuous value rate (dynamics.RateFunction)
      "lambda": {"kind": "constant", "floor": 0.2},
      "method": "rk4", "h": 0.01,
      "noise": {"kind": "gaussian", "scale": 0.1},
      "steps": 100000, "t_end": 100.0, "every": 1000,
      "seeds": [0, 1, 2], "master_seed": 0,
      "output": "out", "thresholds": {"rho_val_max": 0.05}
    }

Seed ``k`` draws from ``SeedSequence(master_seed, spawn_key=(k, stream))``:
stream 0 generates the game (when the config generates one), stream 1 drives
the learner. Adding seeds therefore never changes existing ones.
"""

from __future__ import annotations

import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .auxiliary import ZERO_SUM_MODE, matrix_duality_gap, stage_tables, value_mode
from .dynamics import (
    BestResponseField,
    LambdaPolicy,
    RateFunction,
    initial_continuous_state,
    integrate,
)
from .game import GameClass, NoiseSpec, StochasticGame, classify, load, random_ergodic_game
from .learners import Schedule, Trace, initial_state, run
from .oracles import UnsupportedGameError, equilibrium_residuals, solve
from .regularizers import DEFAULT_BETA, get_regularizer

ALGORITHMS = ("sfp", "mfp", "sbrd", "mbrd")
DISCRETE = ("sfp", "mfp")
GAME_STREAM, LEARNER_STREAM = 0, 1


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    game: dict
    algorithm: str = "sfp"
    beta: float = DEFAULT_BETA
    regularizer: str = "entropy"
    schedule: dict = field(default_factory=dict)
    rate: dict = field(default_factory=dict)
    lam: dict = field(default_factory=dict)
    method: str = "rk4"
    h: float = 0.01
    noise: dict = field(default_factory=lambda: {"kind": "gaussian", "scale": 0.1})
    steps: int = 10_000
    t_end: float = 10.0
    every: int = 100
    seeds: list = field(default_factory=lambda: [0])
    master_seed: int = 0
    output: str = "out"
    thresholds: dict = field(default_factory=dict)
    workers: int = 1

    @classmethod
    def from_dict(cls, obj: dict) -> "ExperimentConfig":
        if not isinstance(obj, dict):
            raise ConfigError("config must be a JSON object")
        obj = dict(obj)
        if "lambda" in obj:
            obj["lam"] = obj.pop("lambda")
        known = set(cls.__dataclass_fields__)
        unknown = sorted(set(obj) - known)
        if unknown:
            raise ConfigError(f"unknown config fields: {unknown}")
        if "game" not in obj:
            raise ConfigError("config needs a 'game' entry")
        cfg = cls(**obj)
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        try:
            obj = json.loads(Path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
        return cls.from_dict(obj)

    def validate(self) -> None:
        if self.algorithm not in ALGORITHMS:
            raise ConfigError(f"unknown algorithm {self.algorithm!r}; choose from {ALGORITHMS}")
        if not self.seeds:
            raise ConfigError("seed list is empty")
        if len(set(self.seeds)) != len(self.seeds):
            raise ConfigError("seed list has duplicates")
        if self.every < 1:
            raise ConfigError("metric cadence must be at least 1")
        if self.beta <= 0:
            raise ConfigError("beta must be positive")
        if self.workers < 1:
            raise ConfigError("workers must be at least 1")
        try:
            get_regularizer(self.regularizer)
            self.make_noise()
            if self.algorithm in DISCRETE:
                self.make_schedule()
            else:
                self.make_rate()
                self.make_lambda()
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc
        if self.algorithm in DISCRETE:
            if self.steps < 1:
                raise ConfigError("steps must be at least 1")
            if self.steps % self.every:
                raise ConfigError(f"cadence {self.every} does not divide steps {self.steps}")
        else:
            if self.h <= 0 or self.t_end < self.h:
                raise ConfigError("need h > 0 and t_end >= h")
            n = self.t_end / self.h
            if abs(n - round(n)) > 1e-9 or round(n) % self.every:
                raise ConfigError(f"cadence {self.every} does not divide the {n:g} integration steps")
            if self.method not in ("euler", "rk4"):
                raise ConfigError(f"unknown method {self.method!r}")
        if "path" in self.game:
            if not Path(self.game["path"]).is_file():
                raise ConfigError(f"game file {self.game['path']!r} does not exist")
        elif "generate" not in self.game:
            raise ConfigError("game entry needs 'path' or 'generate'")
        for name, bound in self.thresholds.items():
            if not isinstance(bound, (int, float)):
                raise ConfigError(f"threshold for {name!r} must be a number")

    def make_schedule(self) -> Schedule:
        return Schedule(**self.schedule)

    def make_rate(self) -> RateFunction:
        return RateFunction(**self.rate)

    def make_lambda(self) -> LambdaPolicy:
        spec = dict(self.lam)
        if "values" in spec:
            spec["values"] = tuple(spec["values"])
        return LambdaPolicy(**spec)

    def make_noise(self) -> NoiseSpec:
        return NoiseSpec(**self.noise)

    def seed_rng(self, seed: int, stream: int) -> np.random.Generator:
        return np.random.default_rng(np.random.SeedSequence(self.master_seed, spawn_key=(seed, stream)))

    def make_game(self, seed: int) -> StochasticGame:
        if "path" in self.game:
            return load(self.game["path"])
        spec = self.game["generate"]
        cls = GameClass(spec.get("class", "General"), tuple(spec.get("constants", ())))
        return random_ergodic_game(
            int(spec["states"]), tuple(spec["actions"]), cls, float(spec.get("mixing", 0.5)),
            self.seed_rng(seed, GAME_STREAM), float(spec.get("discount", 0.5)))


# -- metrics ----------------------------------------------------------------------


def _metric_row(game, x, u, beta, reg, mode, oracle_u=None, errors=None, rate=None) -> dict:
    res = equilibrium_residuals(game, beta, reg, x, u, mode)
    row = {}
    for i in range(game.num_players):
        for s in range(game.num_states):
            row[f"u_p{i}_s{s}"] = float(u[i, s])
    for s in range(game.num_states):
        row[f"rho_val_s{s}"] = float(res.rho_val[s])
    for s in range(game.num_states):
        row[f"rho_br_s{s}"] = float(res.rho_br[s])
    row["rho_val_max"] = res.max_val
    row["rho_br_max"] = res.max_br
    if mode == ZERO_SUM_MODE:
        tables = stage_tables(game.rewards, game.transitions, game.discount, u)
        gaps = [matrix_duality_gap(tables[0, s].reshape(game.action_counts), x[0][s], x[1][s],
                                   beta, reg)[0] for s in range(game.num_states)]
        for s, w in enumerate(gaps):
            row[f"gap_s{s}"] = float(w)
        row["duality_gap_max"] = float(max(gaps))
    if oracle_u is not None:
        row["u_err"] = float(np.max(np.abs(u[0] - oracle_u)))
    if errors is not None:
        row["q_err"], row["r_err"] = errors
    row["value_rate"] = float(rate)
    return row


def standard_metrics(game: StochasticGame, oracle_u=None):
    """Callback for :func:`learners.run` producing the standard trace columns.

    Residuals and duality gaps use the true model. ``oracle_u``, when given,
    adds the sup distance ``u_err`` of player 1's values to it.
    """

    def callback(state, _game):
        sched = state.schedule
        rate = sched.rate(state.step) if not sched.per_visit else float("nan")
        errors = state.model.errors(game) if state.model is not None and not state.model.frozen else None
        return _metric_row(game, state.x, state.u, state.beta, state.reg, state.mode,
                           oracle_u, errors, rate)

    return callback


def continuous_metrics(game: StochasticGame, oracle_u=None):
    """Callback for :func:`dynamics.integrate` with the same columns."""

    def callback(cs, field_):
        errors = None
        if cs.learns_model:
            errors = (float(np.max(np.abs(cs.q_hat - game.transitions))),
                      float(np.max(np.abs(cs.r_hat - game.rewards))))
        return _metric_row(game, cs.x, cs.u, field_.beta, field_.reg, field_.mode,
                           oracle_u, errors, field_.rate(cs.t))

    return callback


def _oracle_values(game, beta, reg):
    try:
        return solve(game, beta, reg).u
    except (UnsupportedGameError, ValueError):
        return None


# -- running ------------------------------------------------------------------------


@dataclass
class SeedResult:
    seed: int
    final: dict | None = None
    error: str | None = None
    trace_file: str | None = None


@dataclass
class SummaryReport:
    seeds: list
    aggregates: dict
    thresholds: dict
    failures: list
    passed: bool

    def to_dict(self) -> dict:
        return {
            "passed": self.passed,
            "thresholds": self.thresholds,
            "failures": self.failures,
            "aggregates": self.aggregates,
            "seeds": [vars(r) for r in self.seeds],
        }

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n",
                              encoding="utf-8")


def run_seed(cfg: ExperimentConfig, seed: int) -> tuple[Trace, dict]:
    """Run one seed and return its trace and the final metric row."""
    game = cfg.make_game(seed)
    reg = get_regularizer(cfg.regularizer)
    rng = cfg.seed_rng(seed, LEARNER_STREAM)
    oracle_u = _oracle_values(game, cfg.beta, reg)
    if cfg.algorithm in DISCRETE:
        init = initial_state(game, cfg.beta, reg, cfg.make_schedule(), rng,
                             model_free=cfg.algorithm == "mfp", noise=cfg.make_noise())
        trace, _ = run(init, game, cfg.steps, standard_metrics(game, oracle_u), cfg.every,
                       cfg.algorithm)
    else:
        rhs = BestResponseField(game, cfg.make_rate(), cfg.make_lambda(), reg, cfg.beta,
                                value_mode(classify(game)))
        init = initial_continuous_state(game, learn_model=cfg.algorithm == "mbrd")
        trace, _ = integrate(rhs, init, cfg.t_end, cfg.h, cfg.method,
                             continuous_metrics(game, oracle_u), cfg.every)
    final = dict(zip(trace.columns, trace.rows[-1]))
    return trace, final


def _seed_job(args) -> SeedResult:
    cfg, seed, out = args
    path = out / f"trace_seed{seed}.csv"
    try:
        trace, final = run_seed(cfg, seed)
    except Exception as exc:  # recorded per seed; siblings keep running
        return SeedResult(seed, error=f"{type(exc).__name__}: {exc}")
    trace.to_csv(path)
    return SeedResult(seed, final=final, trace_file=path.name)


def summarize(results: list[SeedResult], thresholds: dict) -> SummaryReport:
    ok = [r for r in results if r.final is not None]
    aggregates = {}
    if ok:
        for name in ok[0].final:
            vals = np.array([r.final[name] for r in ok], dtype=float)
            q25, q50, q75 = np.quantile(vals, [0.25, 0.5, 0.75])
            aggregates[name] = {"median": float(q50), "q25": float(q25), "q75": float(q75),
                                "min": float(vals.min()), "max": float(vals.max())}
    failures = []
    for r in results:
        if r.error is not None:
            failures.append({"seed": r.seed, "reason": r.error})
            continue
        for name, bound in thresholds.items():
            if name not in r.final:
                failures.append({"seed": r.seed, "reason": f"metric {name!r} not in trace"})
            elif not r.final[name] <= bound:
                failures.append({"seed": r.seed, "reason": f"{name}={r.final[name]:.6g} > {bound:g}"})
    return SummaryReport(results, aggregates, dict(thresholds), failures, not failures)


def run_experiment(cfg: ExperimentConfig) -> SummaryReport:
    """Run every seed, write ``trace_seed<k>.csv`` files and ``summary.json``."""
    cfg.validate()
    out = Path(cfg.output)
    out.mkdir(parents=True, exist_ok=True)
    jobs = [(cfg, seed, out) for seed in cfg.seeds]
    if cfg.workers > 1:
        with ProcessPoolExecutor(cfg.workers) as pool:
            results = list(pool.map(_seed_job, jobs))
    else:
        results = [_seed_job(j) for j in jobs]
    report = summarize(results, cfg.thresholds)
    report.save(out / "summary.json")
    return report


# -- plot data ------------------------------------------------------------------------


@dataclass
class PlotData:
    """Long-format table: one row per (time, seed) with the across-seed median."""

    columns: list
    rows: list

    def to_csv(self, path) -> None:
        lines = [",".join(self.columns)]
        for t, seed, value, median in self.rows:
            lines.append(f"{format(t, '.17g')},{seed},{format(value, '.17g')},{format(median, '.17g')}")
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_traces(directory) -> dict[int, Trace]:
    """Traces written by :func:`run_experiment`, keyed by seed."""
    out = {}
    for path in sorted(Path(directory).glob("trace_seed*.csv")):
        out[int(path.stem.removeprefix("trace_seed"))] = Trace.from_csv(path)
    if not out:
        raise FileNotFoundError(f"no trace files in {directory}")
    return dict(sorted(out.items()))


def emit_plot_data(traces: dict[int, Trace], metric: str) -> PlotData:
    """Reshape one metric across seeds into long format plus per-time medians."""
    if not traces:
        raise ValueError("no traces given")
    series = {seed: (tr.column(tr.columns[0]), tr.column(metric)) for seed, tr in traces.items()}
    time_name = next(iter(traces.values())).columns[0]
    by_time: dict[float, list[float]] = {}
    for times, values in series.values():
        for t, v in zip(times, values):
            by_time.setdefault(float(t), []).append(float(v))
    medians = {t: float(np.median(v)) for t, v in by_time.items()}
    rows = []
    for seed, (times, values) in series.items():
        rows.extend((float(t), seed, float(v), medians[float(t)]) for t, v in zip(times, values))
    rows.sort(key=lambda r: (r[0], r[1]))
    return PlotData([time_name, "seed", "value", "median"], rows)
