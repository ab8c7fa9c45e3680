"""Gradient descent and ADAM baselines."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .bfgs import _counting
from .linesearch import LineSearchError, LineSearchParams, armijo_backtrack
from .trace import Budget, Recorder, Trace


@dataclass(frozen=True)
class AdamHyper:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps_hat: float = 1e-8
    batch_size: int = 1

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be at least 1")
        if not (self.lr > 0 and 0 <= self.beta1 < 1 and 0 <= self.beta2 < 1 and self.eps_hat > 0):
            raise ValueError(f"invalid ADAM hyperparameters {self}")


ADAM_LR_GRID = (1e-1, 1e-2, 1e-3, 1e-4)


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0

    @classmethod
    def zeros(cls, d: int) -> "AdamState":
        return cls(np.zeros(d), np.zeros(d), 0)

    def step(self, g, hyper: AdamHyper) -> np.ndarray:
        """Advance the moments with gradient ``g`` and return the update to add to w."""
        self.t += 1
        self.m = hyper.beta1 * self.m + (1.0 - hyper.beta1) * g
        self.v = hyper.beta2 * self.v + (1.0 - hyper.beta2) * g * g
        m_hat = self.m / (1.0 - hyper.beta1**self.t)
        v_hat = self.v / (1.0 - hyper.beta2**self.t)
        return -hyper.lr * m_hat / (np.sqrt(v_hat) + hyper.eps_hat)


def gd_run(obj, w0, step="armijo", budget: Budget = Budget(),
           ls: LineSearchParams = LineSearchParams(), timing: bool = False) -> Trace:
    cobj = _counting(obj)
    rec = Recorder(cobj, budget, timing)
    w = np.array(w0, dtype=np.float64)
    if not rec.log(w):
        return rec.trace
    f = None
    while not rec.done():
        g = cobj.gradient(w)
        if step == "armijo":
            if f is None:
                f = cobj.value(w)
            try:
                alpha, f, _ = armijo_backtrack(cobj, w, -g, g, f, ls)
            except (LineSearchError, ValueError) as exc:
                rec.abort(f"line search failed: {exc}")
                break
        else:
            alpha = float(step)
        w = w - alpha * g
        if not rec.log(w, alpha):
            break
    return rec.trace


def adam_run(obj, w0, hyper: AdamHyper = AdamHyper(), budget: Budget = Budget(),
             seed: int = 0, timing: bool = False) -> Trace:
    """Mini-batch ADAM over per-pass shuffles; one trace row per completed pass.

    ``max_iters`` in the budget counts passes, not mini-batch steps.
    """
    cobj = _counting(obj)
    rng = np.random.default_rng(seed)
    rec = Recorder(cobj, budget, timing)
    w = np.array(w0, dtype=np.float64)
    state = AdamState.zeros(w.size)
    n = cobj.n_samples
    if not rec.log(w, hyper.lr, iteration=0):
        return rec.trace
    while not rec.done():
        order = rng.permutation(n)
        for start in range(0, n, hyper.batch_size):
            idx = order[start:start + hyper.batch_size]
            w = w + state.step(cobj.batch_gradient(w, idx), hyper)
            if not np.all(np.isfinite(w)):
                break
        if not rec.log(w, hyper.lr, iteration=state.t):
            break
    return rec.trace


def adam_tuned(obj, w0, budget: Budget, seed: int = 0, grid=ADAM_LR_GRID, **hyper) -> tuple[float, Trace]:
    """Run ADAM for every learning rate in ``grid`` and keep the one with the
    lowest final training loss."""
    best = None
    for lr in grid:
        trace = adam_run(obj, w0, AdamHyper(lr=lr, **hyper), budget, seed)
        loss = trace.final.loss if not trace.aborted else np.inf
        if best is None or loss < best[2]:
            best = (lr, trace, loss)
    return best[0], best[1]
