"""BFGS-type methods: dense inverse updates, the two-loop recursion, and the
classical and sampled runners (line-search globalized)."""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .linesearch import LineSearchError, LineSearchParams, NonDescentError, armijo_backtrack
from .objective import MAX_DENSE_DIM, CountingObjective, SizeError
from .sampler import OPTION_HESSIAN_PRODUCT, CurvaturePairs, sample_pairs
from .trace import Budget, Recorder, Trace


class CurvatureViolation(ValueError):
    pass


@dataclass
class LbfgsMemory:
    pairs: list = field(default_factory=list)
    gamma0: float = 1.0
    capacity: int | None = None

    def push(self, s, y):
        self.pairs.append((s, y))
        if self.capacity is not None and len(self.pairs) > self.capacity:
            del self.pairs[0]


def bfgs_update_dense(H, s, y) -> np.ndarray:
    """Inverse BFGS update ``V'HV + rho s s'`` with ``V = I - rho y s'``."""
    s = np.asarray(s, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    sy = float(s @ y)
    if not sy > 1e-14 * np.linalg.norm(s) * np.linalg.norm(y):
        raise CurvatureViolation(f"s'y = {sy:.3g} fails the curvature condition")
    rho = 1.0 / sy
    Hy = H @ y
    # expanded form of V'HV + rho s s'
    Hn = (H - rho * (np.outer(s, Hy) + np.outer(Hy, s))
          + (rho * rho * (y @ Hy) + rho) * np.outer(s, s))
    return 0.5 * (Hn + Hn.T)


def two_loop(memory: LbfgsMemory, g) -> np.ndarray:
    """Product of the implicit inverse Hessian with ``g``; pairs are applied
    oldest first, the newest pair being the outermost update."""
    q = np.array(g, dtype=np.float64)
    saved = []
    for s, y in reversed(memory.pairs):
        rho = 1.0 / (s @ y)
        a = rho * (s @ q)
        q -= a * y
        saved.append((rho, a))
    r = memory.gamma0 * q
    for (s, y), (rho, a) in zip(memory.pairs, reversed(saved)):
        b = rho * (y @ r)
        r += (a - b) * s
    return r


def filter_pairs_curvature(pairs: CurvaturePairs, eps: float):
    """Keep pairs with ``s'y >= eps ||s||^2``; returns ``(kept, n_rejected)``."""
    if not eps > 0:
        raise ValueError("eps must be positive")
    kept = [(s, y) for s, y in pairs.columns() if s @ y >= eps * (s @ s)]
    return kept, pairs.m - len(kept)


def _power_norm(matvec, d, rng, iters=30) -> float:
    v = rng.standard_normal(d)
    v /= np.linalg.norm(v)
    lam = 0.0
    for _ in range(iters):
        u = matvec(v)
        lam = float(np.linalg.norm(u))
        if lam == 0.0 or not np.isfinite(lam):
            return lam
        v = u / lam
    return lam


def _search(cobj, w, p, g, f, ls: LineSearchParams):
    """Armijo along ``p``; on failure retry once along ``-g``."""
    try:
        alpha, f_new, _ = armijo_backtrack(cobj, w, p, g, f, ls)
        return alpha, f_new, p
    except (NonDescentError, LineSearchError):
        p = -g
        alpha, f_new, _ = armijo_backtrack(cobj, w, p, g, f, ls)
        return alpha, f_new, p


def _counting(obj):
    return obj if isinstance(obj, CountingObjective) else CountingObjective(obj)


def slbfgs_run(obj, w0, m: int = 10, r: float = 1.0, eps: float = 1e-8,
               option: str = OPTION_HESSIAN_PRODUCT, step="armijo", budget: Budget = Budget(),
               seed: int = 0, ls: LineSearchParams = LineSearchParams(),
               probe_norm: bool = False, keep_iterates: bool = False, timing: bool = False) -> Trace:
    """Sampled L-BFGS. ``step`` is ``"armijo"`` or a constant step length.

    With ``keep_iterates`` every logged iterate is kept in ``extras["iterates"]``.
    """
    cobj = _counting(obj)
    rng = np.random.default_rng(seed)
    probe_rng = np.random.default_rng([seed, 1])
    rec = Recorder(cobj, budget, timing, keep_iterates)
    w = np.array(w0, dtype=np.float64)
    rec.trace.extras["approx_norm"] = []
    if not rec.log(w):
        return rec.trace
    f = None
    while not rec.done():
        pairs, g = sample_pairs(cobj, w, m, r, option, rng)
        kept, _ = filter_pairs_curvature(pairs, eps)
        if kept:
            s_l, y_l = kept[int(rng.integers(len(kept)))]
            mem = LbfgsMemory(kept, float(s_l @ y_l) / float(y_l @ y_l))
            p = -two_loop(mem, g)
        else:
            mem = LbfgsMemory([], 1.0)
            p = -g
        if probe_norm:
            rec.trace.extras["approx_norm"].append(_power_norm(lambda v: two_loop(mem, v), w.size, probe_rng))

        if step == "armijo":
            if f is None:
                f = cobj.value(w)
            try:
                alpha, f, p = _search(cobj, w, p, g, f, ls)
            except (NonDescentError, LineSearchError) as exc:
                rec.abort(f"line search failed: {exc}")
                break
        else:
            alpha = float(step)
        w = w + alpha * p
        if not rec.log(w, alpha, len(kept), m):
            break
    return rec.trace


def classical_bfgs_run(obj, w0, budget: Budget = Budget(), ls: LineSearchParams = LineSearchParams(),
                       timing: bool = False) -> Trace:
    """Dense BFGS with ``H0 = I``; pairs failing the curvature test are skipped."""
    cobj = _counting(obj)
    d = cobj.dim
    if d > MAX_DENSE_DIM:
        raise SizeError(f"dense BFGS refuses d = {d} > {MAX_DENSE_DIM}")
    H = np.eye(d)
    return _history_bfgs(cobj, w0, budget, ls, timing, dense=H)


def classical_lbfgs_run(obj, w0, m: int = 10, budget: Budget = Budget(),
                        ls: LineSearchParams = LineSearchParams(), scale_init: bool = False,
                        timing: bool = False) -> Trace:
    """L-BFGS over the ``m`` most recent iterate-history pairs.

    With ``scale_init`` the initial matrix is ``(s'y / y'y) I`` from the newest
    pair; otherwise it is the identity, which makes the method coincide with
    dense BFGS while nothing has been evicted.
    """
    return _history_bfgs(_counting(obj), w0, budget, ls, timing,
                         memory=LbfgsMemory([], 1.0, m), scale_init=scale_init)


def _history_bfgs(cobj, w0, budget, ls, timing, dense=None, memory=None, scale_init=False):
    rec = Recorder(cobj, budget, timing)
    w = np.array(w0, dtype=np.float64)
    if not rec.log(w):
        return rec.trace
    if rec.done():
        return rec.trace
    f = cobj.value(w)
    g = cobj.gradient(w)
    H = dense
    while not rec.done():
        p = -(H @ g) if H is not None else -two_loop(memory, g)
        try:
            alpha, f_new, p = _search(cobj, w, p, g, f, ls)
        except (NonDescentError, LineSearchError) as exc:
            rec.abort(f"line search failed: {exc}")
            break
        w_new = w + alpha * p
        g_new = cobj.gradient(w_new)
        s, y = w_new - w, g_new - g
        stored = 0
        if s @ y > 1e-14 * np.linalg.norm(s) * np.linalg.norm(y):
            stored = 1
            if H is not None:
                H = bfgs_update_dense(H, s, y)
            else:
                memory.push(s, y)
                if scale_init:
                    memory.gamma0 = float(s @ y) / float(y @ y)
        w, g, f = w_new, g_new, f_new
        if not rec.log(w, alpha, stored, 1):
            break
    if H is not None:
        rec.trace.extras["H"] = H
    return rec.trace
