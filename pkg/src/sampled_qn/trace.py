"""Run budgets, trace rows and the recorder shared by every runner."""
from __future__ import annotations

import csv
import math
import time
from dataclasses import astuple, dataclass, field, fields

import numpy as np

TRACE_HEADER = (
    "iter", "epochs", "wall_ms", "loss", "train_acc", "test_acc",
    "grad_norm", "step_or_delta", "pairs_accepted", "pairs_sampled",
)


@dataclass(frozen=True)
class Budget:
    max_epochs: float = math.inf
    max_iters: int = 10**9
    grad_tol: float = 1e-8

    def __post_init__(self):
        if self.max_epochs < 0 or self.max_iters < 0 or self.grad_tol < 0:
            raise ValueError(f"budget entries must be non-negative: {self}")


@dataclass(frozen=True)
class TraceRow:
    iter: int
    epochs: float
    wall_ms: float
    loss: float
    train_acc: float
    test_acc: float
    grad_norm: float
    step_or_delta: float
    pairs_accepted: int
    pairs_sampled: int

    def is_finite(self) -> bool:
        return all(math.isfinite(v) for v in astuple(self))


@dataclass
class Trace:
    rows: list[TraceRow] = field(default_factory=list)
    aborted: bool = False
    reason: str | None = None
    w: np.ndarray | None = None
    extras: dict = field(default_factory=dict)

    @property
    def final(self) -> TraceRow:
        return self.rows[-1]

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.rows])


class Recorder:
    """Logs one row per outer iteration and decides when a run must stop.

    Row statistics (loss, accuracies, gradient norm) are evaluated on the
    uncounted inner objective so logging never consumes budget.
    """

    def __init__(self, cobj, budget: Budget, timing: bool = False, keep_iterates: bool = False):
        self.cobj = cobj
        self.budget = budget
        self.timing = timing
        self.trace = Trace()
        if keep_iterates:
            self.trace.extras["iterates"] = []
        self._t0 = time.perf_counter()

    @property
    def iteration(self) -> int:
        return len(self.trace.rows) - 1

    def log(self, w, step_or_delta=0.0, accepted=0, sampled=0, iteration=None) -> bool:
        """Append a row; returns False (and flags the trace) if anything is non-finite."""
        inner = self.cobj.inner
        try:
            loss, acc, test_acc = inner.metrics(w)
            gnorm = float(np.linalg.norm(inner.gradient(w)))
        except ArithmeticError as exc:
            self.abort(f"non-finite evaluation: {exc}")
            return False
        it = len(self.trace.rows) if iteration is None else iteration
        wall = (time.perf_counter() - self._t0) * 1e3 if self.timing else 0.0
        row = TraceRow(it, float(self.cobj.epochs), wall, float(loss), float(acc), float(test_acc),
                       gnorm, float(step_or_delta), int(accepted), int(sampled))
        self.trace.rows.append(row)
        self.trace.w = np.array(w, copy=True)
        if "iterates" in self.trace.extras:
            self.trace.extras["iterates"].append(self.trace.w)
        if not row.is_finite() or not np.all(np.isfinite(w)):
            self.abort("non-finite values in trace")
            return False
        return True

    def abort(self, reason: str) -> None:
        self.trace.aborted = True
        self.trace.reason = reason

    def done(self) -> bool:
        if self.trace.aborted:
            return True
        last = self.trace.rows[-1]
        return (
            self.cobj.epochs >= self.budget.max_epochs
            or self.iteration >= self.budget.max_iters
            or last.grad_norm <= self.budget.grad_tol
        )


def write_trace_csv(trace: Trace, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(TRACE_HEADER)
        for row in trace.rows:
            writer.writerow([repr(v) for v in astuple(row)])


def read_trace_csv(path) -> list[TraceRow]:
    types = {f.name: f.type for f in fields(TraceRow)}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if tuple(header) != TRACE_HEADER:
            raise ValueError(f"{path}: unexpected trace header {header}")
        rows = []
        for line in reader:
            vals = [int(v) if types[name] == "int" else float(v) for name, v in zip(header, line)]
            rows.append(TraceRow(*vals))
    return rows
