"""Experiment orchestration: configs, problem construction, per-seed runs,
trace files, summaries and cross-run comparison tables."""
from __future__ import annotations

import csv
import json
import sys
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from .bfgs import classical_bfgs_run, classical_lbfgs_run, slbfgs_run
from .data import TOY_GEOMETRIES, TOY_NETWORKS, build_network, gen_toy_dataset, load_csv_dataset
from .diagnostics import spectra_meta, spectrum_run, write_spectra
from .firstorder import ADAM_LR_GRID, AdamHyper, adam_run, adam_tuned, gd_run
from .linesearch import LineSearchParams
from .objective import (CountingObjective, MlpObjective, MlpSpec, QuadraticObjective,
                        init_params, random_spd)
from .sr1 import classical_lsr1_run, classical_sr1_run, slsr1_run
from .trace import Budget, Trace, TraceRow, read_trace_csv, write_trace_csv
from .trustregion import TrustRegionParams, newton_tr_run

METHODS = ("gd", "adam", "bfgs", "lbfgs", "sr1", "lsr1", "s-lbfgs", "s-lsr1", "newton-tr-cg")
DEFAULT_CHECKPOINTS = (10, 25, 50, 100)
QUANTILES = {"min": 0.0, "25%": 0.25, "median": 0.5, "75%": 0.75, "max": 1.0}
COMPARE_HEADER = ("method", "seed", "checkpoint_epochs", "accuracy", "loss")

_LS_KEYS = {f.name for f in fields(LineSearchParams)}
_TR_KEYS = {f.name for f in fields(TrustRegionParams)}
_ADAM_KEYS = {f.name for f in fields(AdamHyper)}

# Hyperparameters each method understands, besides line-search / trust-region constants.
_METHOD_KEYS = {
    "gd": {"step"} | _LS_KEYS,
    "adam": _ADAM_KEYS,
    "bfgs": _LS_KEYS,
    "lbfgs": {"m", "scale_init"} | _LS_KEYS,
    "sr1": {"eps", "cg_rel_tol"} | _TR_KEYS,
    "lsr1": {"m", "eps", "gamma", "cg_rel_tol"} | _TR_KEYS,
    "s-lbfgs": {"m", "r", "eps", "option", "step", "probe_norm"} | _LS_KEYS,
    "s-lsr1": {"m", "r", "eps", "option", "gamma", "cg_rel_tol", "probe_norm"} | _TR_KEYS,
    "newton-tr-cg": {"cg_rel_tol", "cg_max_iter"} | _TR_KEYS,
}


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    method: str
    problem: str = "toy-small"
    hyper: dict = field(default_factory=dict)
    budget: Budget = field(default_factory=lambda: Budget(max_epochs=100))
    seeds: list = field(default_factory=lambda: [0])
    out_dir: str = "runs"
    checkpoints: list = field(default_factory=lambda: list(DEFAULT_CHECKPOINTS))
    init_scale: float = 0.5
    data_seed: int = 0
    geometry: str = "parabola"
    network: list | None = None
    csv_header: bool = False
    test_csv: str | None = None
    condition: float = 100.0
    audit: bool = False
    timing: bool = False

    def __post_init__(self):
        if self.method not in METHODS:
            raise ConfigError(f"unknown method {self.method!r}; choose from {', '.join(METHODS)}")
        if not self.seeds:
            raise ConfigError("seed list is empty")
        if any(not isinstance(s, int) or isinstance(s, bool) or s < 0 for s in self.seeds):
            raise ConfigError(f"seeds must be non-negative integers, got {self.seeds}")
        if not isinstance(self.budget, Budget):
            raise ConfigError("budget must be a Budget")
        if not self.init_scale > 0:
            raise ConfigError("init_scale must be positive")
        if self.geometry not in TOY_GEOMETRIES:
            raise ConfigError(f"unknown geometry {self.geometry!r}")
        unknown = set(self.hyper) - _METHOD_KEYS[self.method]
        if unknown:
            raise ConfigError(f"hyperparameters {sorted(unknown)} not understood by {self.method}")
        try:
            LineSearchParams(**_split(self.hyper, _LS_KEYS))
            TrustRegionParams(**_split(self.hyper, _TR_KEYS))
            if self.method == "adam" and self.hyper.get("lr") != "tuned":
                AdamHyper(**self.hyper)
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from None
        if self.hyper.get("option", "II") not in ("I", "II"):
            raise ConfigError(f"option must be 'I' or 'II', got {self.hyper['option']!r}")
        _problem_kind(self.problem)
        if self.problem.startswith("csv:") and not self.network:
            raise ConfigError("csv problems need a 'network' layer list")

    @classmethod
    def from_dict(cls, raw: dict) -> "RunConfig":
        if not isinstance(raw, dict):
            raise ConfigError("config must be a JSON object")
        known = {f.name for f in fields(cls)}
        extra = set(raw) - known
        if extra:
            raise ConfigError(f"unknown config fields {sorted(extra)}")
        if "method" not in raw:
            raise ConfigError("config needs a 'method'")
        raw = dict(raw)
        budget = raw.pop("budget", {"max_epochs": 100})
        try:
            raw["budget"] = Budget(**budget)
            return cls(**raw)
        except ConfigError:
            raise
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from None

    @classmethod
    def from_json(cls, path) -> "RunConfig":
        return cls.from_dict(_load_json(path))

    def to_dict(self) -> dict:
        out = asdict(self)
        out["budget"] = asdict(self.budget)
        return out


def _load_json(path) -> dict:
    try:
        with open(path) as fh:
            return json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None


def _problem_kind(problem: str) -> str:
    if problem.startswith("toy-") and problem[4:] in TOY_NETWORKS:
        return "toy"
    if problem.startswith("csv:") and len(problem) > 4:
        return "csv"
    if problem.startswith("quadratic:"):
        try:
            d = int(problem.split(":", 1)[1])
        except ValueError:
            d = 0
        if d >= 1:
            return "quadratic"
    raise ConfigError(f"unknown problem {problem!r}; use toy-small|toy-medium|toy-large|csv:<path>|quadratic:<d>")


def build_problem(cfg: RunConfig):
    """The objective named by ``cfg.problem``."""
    kind = _problem_kind(cfg.problem)
    if kind == "toy":
        return MlpObjective(build_network(cfg.problem[4:]), gen_toy_dataset(cfg.data_seed, geometry=cfg.geometry))
    if kind == "quadratic":
        d = int(cfg.problem.split(":", 1)[1])
        b = np.random.default_rng([cfg.data_seed, 1]).standard_normal(d)
        return QuadraticObjective(random_spd(d, cfg.condition, cfg.data_seed), b)
    spec = MlpSpec(tuple(cfg.network))
    path = cfg.problem[4:]
    try:
        train = load_csv_dataset(path, spec.layer_sizes[0], cfg.csv_header, spec.n_classes)
        test = (load_csv_dataset(cfg.test_csv, spec.layer_sizes[0], cfg.csv_header, spec.n_classes)
                if cfg.test_csv else None)
    except OSError as exc:
        raise ConfigError(f"cannot read dataset: {exc}") from None
    return MlpObjective(spec, train, test)


def initial_point(obj, seed: int, scale: float) -> np.ndarray:
    if isinstance(obj, MlpObjective):
        return init_params(obj.spec, seed, scale)
    return np.random.default_rng(seed).uniform(-scale, scale, obj.dim)


def _split(hyper: dict, keys) -> dict:
    return {k: hyper[k] for k in keys if k in hyper}


def run_method(method: str, obj, w0, hyper: dict, budget: Budget, seed: int, timing: bool = False) -> Trace:
    """Dispatch one run. ``obj`` should already be a counting wrapper if the
    caller wants to inspect the epoch ledger afterwards."""
    ls = LineSearchParams(**_split(hyper, _LS_KEYS))
    tr = TrustRegionParams(**_split(hyper, _TR_KEYS))
    own = {k: v for k, v in hyper.items() if k not in _LS_KEYS | _TR_KEYS}
    if method == "gd":
        return gd_run(obj, w0, budget=budget, ls=ls, timing=timing, **own)
    if method == "adam":
        if own.get("lr") == "tuned":
            grid_hyper = {k: v for k, v in own.items() if k != "lr"}
            _, trace = adam_tuned(obj, w0, budget, seed, ADAM_LR_GRID, **grid_hyper)
            return trace
        return adam_run(obj, w0, AdamHyper(**own), budget, seed, timing)
    if method == "bfgs":
        return classical_bfgs_run(obj, w0, budget, ls, timing)
    if method == "lbfgs":
        return classical_lbfgs_run(obj, w0, budget=budget, ls=ls, timing=timing, **own)
    if method == "sr1":
        return classical_sr1_run(obj, w0, tr, budget, timing=timing, **own)
    if method == "lsr1":
        return classical_lsr1_run(obj, w0, params=tr, budget=budget, timing=timing, **own)
    if method == "s-lbfgs":
        return slbfgs_run(obj, w0, budget=budget, seed=seed, ls=ls, timing=timing, **own)
    if method == "s-lsr1":
        return slsr1_run(obj, w0, params=tr, budget=budget, seed=seed, timing=timing, **own)
    if method == "newton-tr-cg":
        return newton_tr_run(obj, w0, tr, budget, timing=timing, **own)
    raise ConfigError(f"unknown method {method!r}")


def accuracy_at(rows: list[TraceRow], checkpoint: float) -> TraceRow:
    """Last row whose cumulative epochs do not exceed ``checkpoint`` (the
    initial row if none does)."""
    best = rows[0]
    for row in rows:
        if row.epochs <= checkpoint:
            best = row
        else:
            break
    return best


def _quantiles(values) -> dict:
    values = np.asarray(values, dtype=np.float64)
    return {name: float(np.quantile(values, q)) for name, q in QUANTILES.items()}


def run_experiment(cfg: RunConfig, obj=None) -> dict:
    """Run every seed, write ``trace_seed{N}.csv`` files and ``summary.json``
    into ``cfg.out_dir``, and return the summary."""
    obj = build_problem(cfg) if obj is None else obj
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    finals, aborts, per_seed_rows = [], [], {}
    extras = {}
    for seed in cfg.seeds:
        cobj = CountingObjective(obj)
        w0 = initial_point(obj, seed, cfg.init_scale)
        try:
            trace = run_method(cfg.method, cobj, w0, cfg.hyper, cfg.budget, seed, cfg.timing)
        except (ArithmeticError, RuntimeError, ValueError) as exc:
            trace = Trace(aborted=True, reason=f"{type(exc).__name__}: {exc}")
        if cfg.audit:
            cobj.audit()
        write_trace_csv(trace, out / f"trace_seed{seed}.csv")
        if trace.aborted:
            aborts.append({"seed": seed, "reason": trace.reason})
        if trace.rows:
            per_seed_rows[seed] = trace.rows
            finals.append({"seed": seed, **asdict(trace.final)})
        norms = trace.extras.get("approx_norm")
        if norms:
            extras[str(seed)] = {"approx_norm_max": float(max(norms))}

    quantiles = {}
    for c in cfg.checkpoints:
        accs = [accuracy_at(rows, c).train_acc for rows in per_seed_rows.values()]
        quantiles[str(c)] = _quantiles(accs) if accs else None
    summary = {
        "method": cfg.method,
        "problem": cfg.problem,
        "seeds": list(cfg.seeds),
        "checkpoints": list(cfg.checkpoints),
        "quantiles": quantiles,
        "aborts": aborts,
        "final": finals,
        "config": cfg.to_dict(),
    }
    if extras:
        summary["probes"] = extras
    with open(out / "summary.json", "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return summary


def all_seeds_aborted(summary: dict) -> bool:
    return len(summary["aborts"]) == len(summary["seeds"])


def _warn(msg: str) -> None:
    print(f"warning: {msg}", file=sys.stderr)


def _trace_seed(path: Path) -> int | None:
    stem = path.stem
    if not stem.startswith("trace_seed"):
        return None
    try:
        return int(stem[len("trace_seed"):])
    except ValueError:
        return None


def compare_report(dirs, out) -> int:
    """Long-format table of accuracy and loss at each checkpoint for every
    trace found under ``dirs``. Returns the number of data rows written."""
    records = []
    for d in map(Path, dirs):
        if not d.is_dir():
            _warn(f"{d} is not a directory, skipped")
            continue
        method, checkpoints = d.name, list(DEFAULT_CHECKPOINTS)
        summary = d / "summary.json"
        if summary.exists():
            try:
                meta = json.loads(summary.read_text())
                method = meta.get("method", method)
                checkpoints = meta.get("checkpoints", checkpoints)
            except (json.JSONDecodeError, OSError):
                _warn(f"{summary} unreadable, using directory name and default checkpoints")
        for path in sorted(d.glob("trace_seed*.csv")):
            seed = _trace_seed(path)
            if seed is None:
                continue
            try:
                rows = read_trace_csv(path)
            except (ValueError, OSError, StopIteration, TypeError) as exc:
                _warn(f"{path} is corrupt ({exc}), skipped")
                continue
            if not rows:
                _warn(f"{path} has no rows, skipped")
                continue
            for c in checkpoints:
                row = accuracy_at(rows, c)
                records.append((method, seed, c, row.train_acc, row.loss))
    records.sort(key=lambda r: (r[0], r[1]))
    with open(out, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(COMPARE_HEADER)
        for method, seed, c, acc, loss in records:
            writer.writerow([method, seed, c, repr(float(acc)), repr(float(loss))])
    return len(records)


@dataclass
class SpectrumConfig:
    problem: str = "toy-small"
    T: int = 40
    m: int = 16
    r: float = 0.01
    checkpoints: list | None = None
    seeds: list = field(default_factory=lambda: [0])
    option: str = "II"
    eps: float = 1e-8
    init_scale: float = 0.5
    data_seed: int = 0
    geometry: str = "parabola"
    out_dir: str = "spectra"

    def __post_init__(self):
        if self.T < 1 or self.m < 1 or not self.r > 0:
            raise ConfigError("T and m must be positive integers and r positive")
        if not self.seeds:
            raise ConfigError("seed list is empty")
        if self.option not in ("I", "II"):
            raise ConfigError(f"option must be 'I' or 'II', got {self.option!r}")
        if _problem_kind(self.problem) == "csv":
            raise ConfigError("spectrum runs support toy and quadratic problems")

    @classmethod
    def from_json(cls, path) -> "SpectrumConfig":
        raw = _load_json(path)
        if not isinstance(raw, dict):
            raise ConfigError("config must be a JSON object")
        extra = set(raw) - {f.name for f in fields(cls)}
        if extra:
            raise ConfigError(f"unknown config fields {sorted(extra)}")
        try:
            return cls(**raw)
        except ConfigError:
            raise
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from None


def run_spectrum(cfg: SpectrumConfig) -> dict:
    """Per seed, write one spectrum CSV per checkpoint plus ``spectrum_meta.json``
    (skipped history pairs, identity fallbacks, match values) under
    ``out_dir/seed{N}``."""
    rc = RunConfig(method="sr1", problem=cfg.problem, data_seed=cfg.data_seed, geometry=cfg.geometry)
    obj = build_problem(rc)
    result = {}
    for seed in cfg.seeds:
        w0 = initial_point(obj, seed, cfg.init_scale)
        snaps = spectrum_run(obj, w0, cfg.T, cfg.m, cfg.r, cfg.checkpoints, seed, cfg.option, cfg.eps)
        out = Path(cfg.out_dir) / f"seed{seed}"
        write_spectra(snaps, out)
        meta = spectra_meta(snaps)
        with open(out / "spectrum_meta.json", "w") as fh:
            json.dump(meta, fh, indent=2)
            fh.write("\n")
        result[seed] = meta
    return result
