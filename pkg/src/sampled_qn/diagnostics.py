"""Eigenvalue spectra of SR1-type approximations against the true Hessian
along an SR1 trajectory."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .kernels import sym_eig
from .objective import MAX_DENSE_DIM, SizeError, full_hessian
from .sampler import OPTION_HESSIAN_PRODUCT, CurvaturePairs, sample_pairs
from .sr1 import build_compact, classical_sr1_run, sr1_update_dense
from .trace import Budget
from .trustregion import TrustRegionParams

SPECTRUM_HEADER = ("checkpoint", "source", "index", "eigenvalue")
SOURCES = ("true", "sr1", "lsr1", "slsr1")


@dataclass
class SpectrumSnapshot:
    checkpoint: int
    w: np.ndarray
    spectra: dict[str, np.ndarray]
    sr1_skipped: int = 0
    slsr1_fallback: bool = False
    slsr1_accepted: int = 0
    lsr1_accepted: int = 0
    meta: dict = field(default_factory=dict)


def spectrum_match(a, b) -> float:
    """Mean absolute difference of two ascending lists, paired in order and
    truncated to the shorter one."""
    k = min(len(a), len(b))
    return float(np.mean(np.abs(np.sort(a)[:k] - np.sort(b)[:k])))


def default_checkpoints(T: int) -> list[int]:
    pts = np.linspace(T / 4, T - 1, 3)
    return sorted({int(round(p)) for p in pts})


def _eigs(M) -> np.ndarray:
    return sym_eig(0.5 * (M + M.T))[0]


def spectrum_run(obj, w0, T: int = 40, m: int = 16, r: float = 0.01, checkpoints=None,
                 seed: int = 0, option: str = OPTION_HESSIAN_PRODUCT, eps: float = 1e-8,
                 params: TrustRegionParams = TrustRegionParams()) -> list[SpectrumSnapshot]:
    d = obj.dim
    if d > MAX_DENSE_DIM:
        raise SizeError(f"spectrum diagnostics refuse d = {d} > {MAX_DENSE_DIM}")
    checkpoints = default_checkpoints(T) if checkpoints is None else sorted(checkpoints)
    if any(c < 0 or c >= T for c in checkpoints):
        raise ValueError(f"checkpoints must lie in [0, {T})")

    trace = classical_sr1_run(obj, w0, params, Budget(max_iters=T, grad_tol=0.0), eps=eps, keep_history=True)
    iterates = trace.extras["iterates"]
    pairs = trace.extras["pairs"]
    # history pairs produced before iteration k: one per accepted step
    n_before = np.cumsum([0] + [not np.array_equal(a, b) for a, b in zip(iterates[:-1], iterates[1:])])

    rng = np.random.default_rng(seed)
    snaps = []
    for c in checkpoints:
        k = min(c, len(iterates) - 1)
        w = iterates[k]
        hist = pairs[:n_before[k]]

        B = np.eye(d)
        skipped = 0
        for s, y in hist:
            B, applied = sr1_update_dense(B, s, y, eps)
            skipped += not applied

        recent = hist[-m:]
        if recent:
            lpairs = CurvaturePairs(np.column_stack([s for s, _ in recent]),
                                    np.column_stack([y for _, y in recent]), "history", 0.0)
        else:
            lpairs = CurvaturePairs(np.zeros((d, 0)), np.zeros((d, 0)), "history", 0.0)
        lsr1 = build_compact(lpairs, 1.0, eps)

        spairs, _ = sample_pairs(obj, w, m, r, option, rng)
        slsr1 = build_compact(spairs, 1.0, eps)

        spectra = {
            "true": _eigs(full_hessian(obj, w)),
            "sr1": _eigs(B),
            "lsr1": _eigs(lsr1.to_dense()),
            "slsr1": _eigs(slsr1.to_dense()),
        }
        snaps.append(SpectrumSnapshot(c, w.copy(), spectra, skipped, slsr1.fallback, slsr1.k, lsr1.k))
    return snaps


def write_spectra(snaps: list[SpectrumSnapshot], out_dir) -> list[Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for snap in snaps:
        path = out_dir / f"spectrum_ckpt{snap.checkpoint}.csv"
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(SPECTRUM_HEADER)
            for source in SOURCES:
                for i, ev in enumerate(snap.spectra[source]):
                    writer.writerow([snap.checkpoint, source, i, repr(float(ev))])
        paths.append(path)
    return paths


def spectra_meta(snaps: list[SpectrumSnapshot]) -> list[dict]:
    return [
        {
            "checkpoint": s.checkpoint,
            "sr1_skipped_pairs": s.sr1_skipped,
            "lsr1_accepted": s.lsr1_accepted,
            "slsr1_accepted": s.slsr1_accepted,
            "slsr1_identity_fallback": s.slsr1_fallback,
            "match_lsr1": spectrum_match(s.spectra["lsr1"], s.spectra["true"]),
            "match_slsr1": spectrum_match(s.spectra["slsr1"], s.spectra["true"]),
            "match_sr1": spectrum_match(s.spectra["sr1"], s.spectra["true"]),
        }
        for s in snaps
    ]
