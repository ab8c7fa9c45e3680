import csv

import numpy as np
import pytest

from sampled_qn.diagnostics import (SOURCES, SPECTRUM_HEADER, default_checkpoints, spectra_meta,
                                    spectrum_match, spectrum_run, write_spectra)
from sampled_qn.objective import SizeError, init_params, quadratic_objective
from sampled_qn.sampler import sample_pairs
from sampled_qn.sr1 import build_compact

from conftest import ConstantObjective, spd_quadratic


def test_match_metric():
    assert spectrum_match([3.0, 1.0, 2.0], [1.5, 2.0, 3.0]) == pytest.approx(0.5 / 3)
    assert spectrum_match([0.0, 10.0], [1.0]) == 1.0


def test_default_checkpoints():
    assert default_checkpoints(40) == [10, 24, 39]


def test_quadratic_full_memory_recovers_spectrum():
    q = spd_quadratic(8, cond=50, seed=2)
    snaps = spectrum_run(q, np.ones(8), T=6, m=8, r=0.01, seed=1)
    for snap in snaps:
        np.testing.assert_allclose(snap.spectra["slsr1"], snap.spectra["true"], atol=1e-8)
        np.testing.assert_allclose(snap.spectra["true"], q.eigenvalues, atol=1e-10)


def test_lists_sorted_and_true_length(toy_small):
    snaps = spectrum_run(toy_small, init_params(toy_small.spec, 0), T=12, m=16, seed=0)
    assert [s.checkpoint for s in snaps] == default_checkpoints(12)
    for snap in snaps:
        assert len(snap.spectra["true"]) == 36
        for src in SOURCES:
            vals = snap.spectra[src]
            assert np.all(np.diff(vals) >= 0) and np.all(np.isfinite(vals))


def test_identity_fallback_is_flagged():
    """On F = ||w||^2 / 2 every sampled pair already satisfies y = Bs for
    B = I, so S-LSR1 accepts nothing and reports the identity spectrum."""
    q = quadratic_objective(np.eye(5), np.zeros(5))
    snaps = spectrum_run(q, np.ones(5), T=4, m=3, checkpoints=[1, 3])
    for snap in snaps:
        assert snap.slsr1_fallback and snap.slsr1_accepted == 0
        np.testing.assert_allclose(snap.spectra["slsr1"], np.ones(5))
    assert all(m["slsr1_identity_fallback"] for m in spectra_meta(snaps))


def test_constant_objective_behaviour():
    """Zero Hessian: the true spectrum is all zeros. With gamma = 1 the
    cautious test |s'(0 - s)| >= eps ||s||^2 passes, so the sampled pairs are
    accepted and the approximation gains m zero eigenvalues (the rest stay 1)."""
    obj = ConstantObjective(6)
    pairs, _ = sample_pairs(obj, np.zeros(6), 2, 0.01, "II", seed=0)
    state = build_compact(pairs, 1.0)
    assert state.k == 2 and not state.fallback
    np.testing.assert_allclose(np.linalg.eigvalsh(state.to_dense()), [0, 0, 1, 1, 1, 1], atol=1e-12)
    snaps = spectrum_run(obj, np.zeros(6), T=4, m=2, checkpoints=[2])
    np.testing.assert_array_equal(snaps[0].spectra["true"], np.zeros(6))


def test_checkpoint_validation(toy_small):
    with pytest.raises(ValueError):
        spectrum_run(toy_small, init_params(toy_small.spec, 0), T=5, checkpoints=[5])


def test_dense_guard():
    class Big:
        dim = 5000
    with pytest.raises(SizeError):
        spectrum_run(Big(), None)


def test_write_spectra(tmp_path, toy_small):
    snaps = spectrum_run(toy_small, init_params(toy_small.spec, 1), T=8, m=4, seed=2)
    paths = write_spectra(snaps, tmp_path)
    assert len(paths) == len(snaps)
    with open(paths[0]) as fh:
        rows = list(csv.reader(fh))
    assert tuple(rows[0]) == SPECTRUM_HEADER
    assert len(rows) == 1 + 4 * 36
    assert {r[1] for r in rows[1:]} == set(SOURCES)
    meta = spectra_meta(snaps)
    assert {"sr1_skipped_pairs", "match_slsr1", "match_lsr1"} <= set(meta[0])
