"""SR1-type methods: dense rank-one updates, the compact limited-memory form
with cautious incremental pair acceptance, and the trust-region runners."""
from __future__ import annotations

from collections import deque

import numpy as np

from .bfgs import _counting, _power_norm
from .kernels import SingularSystemError, lu_factor
from .objective import MAX_DENSE_DIM, SizeError
from .sampler import OPTION_HESSIAN_PRODUCT, CurvaturePairs, sample_pairs
from .trace import Budget, Recorder, Trace
from .trustregion import TrustRegionParams, tr_step


def _secant_already_holds(r_norm: float, y) -> bool:
    return r_norm <= 1e-12 * max(1.0, float(np.linalg.norm(y)))


def sr1_update_dense(B, s, y, eps: float = 1e-8):
    """Return ``(B_new, applied)``. Skips (``applied=False``) when ``y - Bs``
    vanishes or the cautious test ``|s'(y-Bs)| >= eps ||s|| ||y-Bs||`` fails."""
    if not eps > 0:
        raise ValueError("eps must be positive")
    s = np.asarray(s, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    r = y - B @ s
    r_norm = float(np.linalg.norm(r))
    if _secant_already_holds(r_norm, y):
        return B, False
    denom = float(s @ r)
    if abs(denom) < eps * np.linalg.norm(s) * r_norm:
        return B, False
    Bn = B + np.outer(r, r) / denom
    return 0.5 * (Bn + Bn.T), True


class Sr1Compact:
    """``B = gamma I + U M^{-1} U'`` with ``U = Y - gamma S`` and middle matrix
    ``M = D + L + L' - gamma S'S`` over the accepted columns."""

    def __init__(self, d: int, gamma: float = 1.0):
        if not gamma > 0:
            raise ValueError("gamma must be positive")
        self.d = d
        self.gamma = float(gamma)
        self.S = np.zeros((d, 0))
        self.Y = np.zeros((d, 0))
        self.U = np.zeros((d, 0))
        self._lu = None
        self.accepted: list[int] = []
        self.rejected: list[int] = []
        self.fallback = False

    @property
    def k(self) -> int:
        return self.S.shape[1]

    def middle(self, S=None, Y=None) -> np.ndarray:
        S = self.S if S is None else S
        Y = self.Y if Y is None else Y
        SY = S.T @ Y
        # (D + L + L')_{ij} = s_max(i,j)' y_min(i,j)
        DL = np.tril(SY) + np.tril(SY, -1).T
        return DL - self.gamma * (S.T @ S)

    def D(self) -> np.ndarray:
        return np.diag(np.einsum("ij,ij->j", self.S, self.Y))

    def L(self) -> np.ndarray:
        return np.tril(self.S.T @ self.Y, -1)

    def matvec(self, v) -> np.ndarray:
        v = np.asarray(v, dtype=np.float64)
        out = self.gamma * v
        if self.k:
            out = out + self.U @ self._lu.solve(self.U.T @ v)
        return out

    __call__ = matvec

    def try_append(self, s, y) -> bool:
        S = np.column_stack([self.S, s])
        Y = np.column_stack([self.Y, y])
        try:
            lu = lu_factor(self.middle(S, Y))
        except SingularSystemError:
            return False
        self.S, self.Y = S, Y
        self.U = Y - self.gamma * S
        self._lu = lu
        return True

    def to_dense(self) -> np.ndarray:
        B = self.matvec(np.eye(self.d))
        return 0.5 * (B + B.T)


def build_compact(pairs: CurvaturePairs, gamma: float = 1.0, eps: float = 1e-8) -> Sr1Compact:
    """Scan pairs in column order, admitting each one only if it passes the
    cautious SR1 test against the matrix built from the pairs admitted so far."""
    if not eps > 0:
        raise ValueError("eps must be positive")
    state = Sr1Compact(pairs.S.shape[0], gamma)
    for j, (s, y) in enumerate(pairs.columns()):
        r = y - state.matvec(s)
        r_norm = float(np.linalg.norm(r))
        ok = (
            not _secant_already_holds(r_norm, y)
            and abs(float(s @ r)) >= eps * float(np.linalg.norm(s)) * r_norm
            and state.try_append(s, y)
        )
        (state.accepted if ok else state.rejected).append(j)
    if state.k == 0:
        state.gamma = 1.0
        state.fallback = True
    return state


def compact_hvp(state: Sr1Compact, v) -> np.ndarray:
    return state.matvec(v)


def _pairs_from(history, d) -> CurvaturePairs:
    if not history:
        return CurvaturePairs(np.zeros((d, 0)), np.zeros((d, 0)), "history", 0.0)
    S = np.column_stack([s for s, _ in history])
    Y = np.column_stack([y for _, y in history])
    return CurvaturePairs(S, Y, "history", 0.0)


def slsr1_run(obj, w0, m: int = 10, r: float = 1.0, eps: float = 1e-8,
              option: str = OPTION_HESSIAN_PRODUCT, params: TrustRegionParams = TrustRegionParams(),
              budget: Budget = Budget(), seed: int = 0, gamma: float = 1.0,
              cg_rel_tol: float | None = 1e-10, probe_norm: bool = False, keep_iterates: bool = False,
              timing: bool = False) -> Trace:
    """Sampled L-SR1 in a trust region. Products with the compact matrix are free."""
    cobj = _counting(obj)
    rng = np.random.default_rng(seed)
    probe_rng = np.random.default_rng([seed, 1])
    rec = Recorder(cobj, budget, timing, keep_iterates)
    w = np.array(w0, dtype=np.float64)
    delta = params.delta0
    rec.trace.extras["approx_norm"] = []
    if not rec.log(w, delta):
        return rec.trace
    if rec.done():
        return rec.trace
    f = cobj.value(w)
    while not rec.done():
        pairs, g = sample_pairs(cobj, w, m, r, option, rng)
        B = build_compact(pairs, gamma, eps)
        if probe_norm:
            rec.trace.extras["approx_norm"].append(_power_norm(B.matvec, w.size, probe_rng))
        out = tr_step(cobj, w, f, g, B.matvec, delta, params, cg_rel_tol, 2 * w.size)
        delta = out.delta
        if out.accepted:
            w, f = out.w, out.f
        if not rec.log(w, delta, B.k, m):
            break
        if delta < 1e-12:
            break
    return rec.trace


def classical_sr1_run(obj, w0, params: TrustRegionParams = TrustRegionParams(),
                      budget: Budget = Budget(), eps: float = 1e-8,
                      cg_rel_tol: float | None = 1e-10, keep_history: bool = False,
                      timing: bool = False) -> Trace:
    """Dense SR1 trust-region method starting from ``B = I``."""
    cobj = _counting(obj)
    if cobj.dim > MAX_DENSE_DIM:
        raise SizeError(f"dense SR1 refuses d = {cobj.dim} > {MAX_DENSE_DIM}")
    return _history_sr1(cobj, w0, params, budget, eps, cg_rel_tol, keep_history, timing, memory=None)


def classical_lsr1_run(obj, w0, m: int = 10, params: TrustRegionParams = TrustRegionParams(),
                       budget: Budget = Budget(), eps: float = 1e-8,
                       cg_rel_tol: float | None = 1e-10, gamma: float = 1.0,
                       timing: bool = False) -> Trace:
    """Limited-memory SR1: the compact form is rebuilt every iteration from the
    ``m`` most recent history pairs."""
    return _history_sr1(_counting(obj), w0, params, budget, eps, cg_rel_tol, False, timing,
                        memory=m, gamma=gamma)


def _history_sr1(cobj, w0, params, budget, eps, cg_rel_tol, keep_history, timing, memory, gamma=1.0):
    rec = Recorder(cobj, budget, timing)
    w = np.array(w0, dtype=np.float64)
    d = w.size
    delta = params.delta0
    history = deque(maxlen=memory) if memory else []
    iterates = [w.copy()]
    skipped = []
    B = np.eye(d) if memory is None else None
    if not rec.log(w, delta):
        return rec.trace
    if not rec.done():
        f = cobj.value(w)
        g = cobj.gradient(w)
    while not rec.done():
        if B is not None:
            Bmat = B
            bv = lambda v: Bmat @ v
            n_acc = len(history) - len(skipped)
        else:
            comp = build_compact(_pairs_from(history, d), gamma, eps)
            bv = comp.matvec
            n_acc = comp.k
        out = tr_step(cobj, w, f, g, bv, delta, params, cg_rel_tol, 2 * d)
        delta = out.delta
        if out.accepted:
            g_new = cobj.gradient(out.w)
            s, y = out.w - w, g_new - g
            history.append((s, y))
            if B is not None:
                B, applied = sr1_update_dense(B, s, y, eps)
                if not applied:
                    skipped.append(len(history) - 1)
            w, f, g = out.w, out.f, g_new
        iterates.append(w.copy())
        if not rec.log(w, delta, n_acc, len(history)):
            break
        if delta < 1e-12:
            break
    if keep_history:
        rec.trace.extras.update(pairs=list(history), iterates=iterates, skipped=skipped)
    if B is not None:
        rec.trace.extras["B"] = B
    return rec.trace
