"""Trust-region machinery: CG-Steihaug, the acceptance ratio, radius updates,
and the exact-Hessian Newton-CG baseline."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .objective import CountingObjective
from .trace import Budget, Recorder, Trace

INTERIOR = "interior"
BOUNDARY = "boundary"
NEGATIVE_CURVATURE = "negative-curvature"


class DegenerateModelError(ArithmeticError):
    pass


@dataclass(frozen=True)
class TrustRegionParams:
    eta1: float = 1e-4
    eta2: float = 0.75
    eta3: float = 0.1
    gamma1: float = 0.5
    zeta1: float = 2.0
    zeta2: float = 0.5
    delta0: float = 1.0
    delta_max: float = 1e6

    def __post_init__(self):
        ok = (
            0 <= self.eta3 < self.eta2 < 1
            and 0 < self.gamma1 < 1
            and self.zeta1 > 1
            and 0 < self.zeta2 < 1
            and self.delta0 > 0
            and self.delta_max >= self.delta0
        )
        if not ok:
            raise ValueError(f"invalid trust-region parameters {self}")


@dataclass
class SubproblemResult:
    p: np.ndarray
    model_decrease: float
    status: str
    cg_iterations: int


def _to_boundary(p, d, delta):
    """Positive tau with ||p + tau d|| = delta."""
    a = d @ d
    b = 2.0 * (p @ d)
    c = p @ p - delta * delta
    root = math.sqrt(max(b * b - 4.0 * a * c, 0.0))
    if b <= 0:
        return (-b + root) / (2.0 * a)
    return -2.0 * c / (b + root)


def steihaug_cg(bv: Callable[[np.ndarray], np.ndarray], g, delta: float,
                rel_tol: float | None = None, max_iter: int | None = None,
                model_history: list | None = None) -> SubproblemResult:
    """Approximately minimize ``g'p + p'Bp/2`` subject to ``||p|| <= delta``.

    ``bv`` is the only access to ``B``. The model value is tracked through the
    CG recurrences so no extra product is spent on ``model_decrease``. If
    ``model_history`` is given, the model value at every inner iterate is
    appended to it.
    """
    if not delta > 0:
        raise ValueError("trust-region radius must be positive")
    g = np.asarray(g, dtype=np.float64)
    gnorm = float(np.linalg.norm(g))
    p = np.zeros_like(g)
    if gnorm == 0.0:
        return SubproblemResult(p, 0.0, INTERIOR, 0)
    if rel_tol is None:
        rel_tol = min(0.5, math.sqrt(gnorm))
    if max_iter is None:
        max_iter = g.size

    r = g.copy()
    d = -r
    rr = r @ r
    mval = 0.0
    if model_history is not None:
        model_history.append(mval)
    status = INTERIOR
    it = 0
    while it < max_iter:
        it += 1
        Bd = bv(d)
        dBd = float(d @ Bd)
        if dBd <= 0.0:
            tau = _to_boundary(p, d, delta)
            mval += tau * (r @ d) + 0.5 * tau * tau * dBd
            p = p + tau * d
            status = NEGATIVE_CURVATURE
            break
        alpha = rr / dBd
        p_next = p + alpha * d
        if np.linalg.norm(p_next) >= delta:
            tau = _to_boundary(p, d, delta)
            mval += tau * (r @ d) + 0.5 * tau * tau * dBd
            p = p + tau * d
            status = BOUNDARY
            break
        mval += alpha * (r @ d) + 0.5 * alpha * alpha * dBd
        p = p_next
        r = r + alpha * Bd
        rr_next = r @ r
        if model_history is not None:
            model_history.append(mval)
        if math.sqrt(rr_next) <= rel_tol * gnorm:
            break
        d = -r + (rr_next / rr) * d
        rr = rr_next
    if model_history is not None and status != INTERIOR:
        model_history.append(mval)
    return SubproblemResult(p, -mval, status, it)


def rho(f_old: float, f_trial: float, model_decrease: float) -> float:
    if model_decrease <= 1e-16:
        raise DegenerateModelError(f"model decrease {model_decrease:.3g} is not positive")
    return (f_old - f_trial) / model_decrease


def adjust_tr(delta: float, rho_val: float, p_norm: float, params: TrustRegionParams) -> float:
    if rho_val > params.eta2:
        if p_norm <= params.gamma1 * delta:
            return delta
        return min(params.zeta1 * delta, params.delta_max)
    if params.eta3 <= rho_val <= params.eta2:
        return delta
    return params.zeta2 * delta


@dataclass
class StepOutcome:
    accepted: bool
    w: np.ndarray
    f: float
    rho: float
    p: np.ndarray
    delta: float
    result: SubproblemResult


def _ratio(f, f_trial, model_decrease) -> float:
    if not math.isfinite(f_trial):
        return -math.inf
    # both decreases at roundoff level: the ratio is noise, judge by sign only
    noise = 100.0 * np.finfo(float).eps * max(1.0, abs(f))
    if model_decrease <= noise and abs(f - f_trial) <= noise:
        return 1.0 if f_trial < f else -math.inf
    return rho(f, f_trial, model_decrease)


def tr_step(cobj, w, f, g, bv, delta, params: TrustRegionParams, cg_rel_tol=None,
            cg_max_iter=None) -> StepOutcome:
    """One solve / evaluate / accept / resize cycle. Costs one objective
    evaluation plus whatever ``bv`` charges."""
    res = steihaug_cg(bv, g, delta, rel_tol=cg_rel_tol, max_iter=cg_max_iter)
    p_norm = float(np.linalg.norm(res.p))
    try:
        if res.model_decrease <= 1e-16 * max(1.0, abs(f)):
            raise DegenerateModelError("no model decrease")
        w_trial = w + res.p
        try:
            f_trial = cobj.value(w_trial)
        except ArithmeticError:
            f_trial = math.inf
        ratio = _ratio(f, f_trial, res.model_decrease)
    except DegenerateModelError:
        return StepOutcome(False, w, f, -math.inf, res.p, params.zeta2 * delta, res)
    new_delta = adjust_tr(delta, ratio, p_norm, params)
    if ratio >= params.eta1:
        return StepOutcome(True, w_trial, f_trial, ratio, res.p, new_delta, res)
    return StepOutcome(False, w, f, ratio, res.p, new_delta, res)


def newton_tr_run(obj, w0, params: TrustRegionParams = TrustRegionParams(),
                  budget: Budget = Budget(), cg_rel_tol=None, cg_max_iter=None, timing=False) -> Trace:
    """Trust-region Newton-CG with exact Hessian products (one epoch each)."""
    cobj = obj if isinstance(obj, CountingObjective) else CountingObjective(obj)
    rec = Recorder(cobj, budget, timing)
    w = np.array(w0, dtype=np.float64)
    delta = params.delta0
    if not rec.log(w, delta):
        return rec.trace
    if rec.done():
        return rec.trace
    f = cobj.value(w)
    g = cobj.gradient(w)
    while not rec.done():
        out = tr_step(cobj, w, f, g, lambda v: cobj.hvp(w, v), delta, params, cg_rel_tol, cg_max_iter)
        delta = out.delta
        if out.accepted:
            w, f = out.w, out.f
            g = cobj.gradient(w)
        if not rec.log(w, delta):
            break
        if delta < 1e-12:
            break
    return rec.trace
