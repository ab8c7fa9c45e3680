"""Small dense linear-algebra primitives.

Everything here works on float64 numpy arrays. The eigensolver is a cyclic
Jacobi method using a round-robin (parallel) ordering so that each round of
disjoint rotations is applied as one vectorized update.
"""
from __future__ import annotations

import numpy as np


class DimensionError(ValueError):
    """Input has the wrong shape."""


class AsymmetryError(ValueError):
    """A matrix expected to be symmetric is not."""


class SingularSystemError(ArithmeticError):
    """A pivot fell below the singularity threshold."""


def _as_square(A) -> np.ndarray:
    A = np.array(A, dtype=np.float64)
    if A.ndim != 2 or A.shape[0] != A.shape[1] or A.shape[0] < 1:
        raise DimensionError(f"expected a non-empty square matrix, got shape {A.shape}")
    return A


def is_symmetric(A: np.ndarray) -> bool:
    diff = np.abs(A - A.T)
    return bool(np.all(diff <= 1e-12 * np.maximum(1.0, np.abs(A))))


def _round_robin(n: int) -> list[tuple[np.ndarray, np.ndarray]]:
    """Pairings of 0..n-1 such that every pair (p, q) shows up exactly once."""
    players = list(range(n))
    if n % 2:
        players.append(-1)
    size = len(players)
    rounds = []
    for _ in range(size - 1):
        ps, qs = [], []
        for i in range(size // 2):
            a, b = players[i], players[size - 1 - i]
            if a < 0 or b < 0:
                continue
            ps.append(min(a, b))
            qs.append(max(a, b))
        rounds.append((np.array(ps, dtype=int), np.array(qs, dtype=int)))
        players = [players[0], players[-1]] + players[1:-1]
    return rounds


def sym_eig(A, tol: float = 1e-12, max_sweeps: int = 100) -> tuple[np.ndarray, np.ndarray]:
    """Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.

    Returns ``(eigenvalues, eigenvectors)`` with eigenvalues ascending and the
    eigenvectors stored as orthonormal columns.
    """
    A = _as_square(A)
    if not is_symmetric(A):
        raise AsymmetryError("sym_eig requires a symmetric matrix")
    A = 0.5 * (A + A.T)
    n = A.shape[0]
    V = np.eye(n)
    scale = np.linalg.norm(A)
    if n == 1 or scale == 0.0:
        return np.diag(A).copy(), V

    rounds = _round_robin(n)
    for _ in range(max_sweeps):
        off = np.sqrt(max(np.sum(A * A) - np.sum(np.diag(A) ** 2), 0.0))
        if off <= tol * scale:
            break
        for P, Q in rounds:
            apq = A[P, Q]
            active = np.abs(apq) > 1e-300
            if not np.any(active):
                continue
            P, Q, apq = P[active], Q[active], apq[active]
            theta = (A[Q, Q] - A[P, P]) / (2.0 * apq)
            t = np.sign(theta) / (np.abs(theta) + np.hypot(theta, 1.0))
            t[theta == 0.0] = 1.0
            c = 1.0 / np.sqrt(t * t + 1.0)
            s = t * c

            cp, cq = A[:, P].copy(), A[:, Q].copy()
            A[:, P] = c * cp - s * cq
            A[:, Q] = s * cp + c * cq
            rp, rq = A[P, :].copy(), A[Q, :].copy()
            A[P, :] = c[:, None] * rp - s[:, None] * rq
            A[Q, :] = s[:, None] * rp + c[:, None] * rq
            vp, vq = V[:, P].copy(), V[:, Q].copy()
            V[:, P] = c * vp - s * vq
            V[:, Q] = s * vp + c * vq

    evals = np.diag(A).copy()
    order = np.argsort(evals, kind="stable")
    return evals[order], V[:, order]


class LUFactors:
    """Row-pivoted LU factors of a square matrix, ``A[perm] = L @ U``."""

    def __init__(self, lu: np.ndarray, perm: np.ndarray, sign: float):
        self.lu = lu
        self.perm = perm
        self.sign = sign

    def solve(self, b) -> np.ndarray:
        b = np.asarray(b, dtype=np.float64)
        n = self.lu.shape[0]
        if b.shape[0] != n:
            raise DimensionError(f"rhs has length {b.shape[0]}, expected {n}")
        x = b[self.perm].copy()
        for i in range(n):
            x[i] -= self.lu[i, :i] @ x[:i]
        for i in range(n - 1, -1, -1):
            x[i] = (x[i] - self.lu[i, i + 1:] @ x[i + 1:]) / self.lu[i, i]
        return x

    def det(self) -> float:
        return float(self.sign * np.prod(np.diag(self.lu)))


def lu_factor(A) -> LUFactors:
    """LU with partial pivoting; raises SingularSystemError on a tiny pivot."""
    A = _as_square(A)
    n = A.shape[0]
    lu = A.copy()
    perm = np.arange(n)
    sign = 1.0
    threshold = 1e-12 * np.linalg.norm(A)
    for k in range(n):
        piv = k + int(np.argmax(np.abs(lu[k:, k])))
        if abs(lu[piv, k]) <= threshold or lu[piv, k] == 0.0:
            raise SingularSystemError(f"pivot {k} is numerically zero")
        if piv != k:
            lu[[k, piv]] = lu[[piv, k]]
            perm[[k, piv]] = perm[[piv, k]]
            sign = -sign
        lu[k + 1:, k] /= lu[k, k]
        lu[k + 1:, k + 1:] -= np.outer(lu[k + 1:, k], lu[k, k + 1:])
    return LUFactors(lu, perm, sign)


def solve_dense(A, b) -> np.ndarray:
    return lu_factor(A).solve(b)


def det(A) -> float:
    try:
        return lu_factor(A).det()
    except SingularSystemError:
        return 0.0
