from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class NonDescentError(ValueError):
    pass


class LineSearchError(RuntimeError):
    pass


@dataclass(frozen=True)
class LineSearchParams:
    alpha0: float = 1.0
    c1: float = 1e-4
    tau: float = 0.5
    max_backtracks: int = 50

    def __post_init__(self):
        if not (self.alpha0 > 0 and 0 < self.c1 < 1 and 0 < self.tau < 1 and self.max_backtracks >= 1):
            raise ValueError(f"invalid line-search parameters {self}")


def armijo_backtrack(obj, w, p, g, f0, params: LineSearchParams = LineSearchParams()):
    """Return ``(alpha, f_new, trials)`` for the first ``alpha0 * tau**i`` that
    gives sufficient decrease. Each trial is one objective evaluation.

    Trial points whose objective is not finite simply fail the test.
    """
    slope = float(g @ p)
    if not slope < 0:
        raise NonDescentError(f"direction is not a descent direction (g'p = {slope:.3g})")
    alpha = params.alpha0
    for trial in range(1, params.max_backtracks + 1):
        try:
            f_new = obj.value(w + alpha * p)
        except ArithmeticError:
            f_new = np.inf
        if np.isfinite(f_new) and f_new <= f0 + params.c1 * alpha * slope:
            return alpha, float(f_new), trial
        alpha *= params.tau
    raise LineSearchError(f"no sufficient decrease after {params.max_backtracks} trials")
