import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sampled_qn.objective import CountingObjective, init_params, quadratic_objective
from sampled_qn.trace import Budget
from sampled_qn.trustregion import (BOUNDARY, INTERIOR, NEGATIVE_CURVATURE, DegenerateModelError,
                                    TrustRegionParams, adjust_tr, newton_tr_run, rho, steihaug_cg,
                                    tr_step)

from conftest import spd_quadratic


def model(B, g, p):
    return g @ p + 0.5 * p @ B @ p


def test_zero_gradient():
    res = steihaug_cg(lambda v: v, np.zeros(3), 1.0)
    assert np.all(res.p == 0) and res.model_decrease == 0.0


def test_identity_model_interior_newton_point():
    res = steihaug_cg(lambda v: v, np.array([3.0, 4.0]), 100.0)
    np.testing.assert_allclose(res.p, [-3.0, -4.0])
    assert res.status == INTERIOR and res.cg_iterations == 1
    assert res.model_decrease == pytest.approx(12.5)


def test_negative_curvature_goes_to_boundary():
    B = np.diag([-1.0, 1.0])
    res = steihaug_cg(lambda v: B @ v, np.array([1.0, 0.0]), 2.0)
    assert res.status == NEGATIVE_CURVATURE and res.cg_iterations == 1
    assert np.linalg.norm(res.p) == pytest.approx(2.0)
    np.testing.assert_allclose(res.p, [-2.0, 0.0])


def test_boundary_stop():
    res = steihaug_cg(lambda v: v, np.array([3.0, 4.0]), 1.0)
    assert res.status == BOUNDARY
    np.testing.assert_allclose(res.p, [-0.6, -0.8])


def test_invalid_radius():
    with pytest.raises(ValueError):
        steihaug_cg(lambda v: v, np.ones(2), 0.0)


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 20), st.integers(0, 2**31), st.floats(1e-3, 1e3), st.booleans())
def test_feasibility_and_cauchy_decrease(d, seed, delta, definite):
    rng = np.random.default_rng(seed)
    M = rng.standard_normal((d, d))
    B = M @ M.T + 1e-3 * np.eye(d) if definite else 0.5 * (M + M.T)
    g = rng.standard_normal(d)
    hist = []
    res = steihaug_cg(lambda v: B @ v, g, delta, model_history=hist)
    assert np.linalg.norm(res.p) <= delta * (1 + 1e-12)
    assert res.model_decrease >= 0
    assert res.model_decrease == pytest.approx(-model(B, g, res.p), rel=1e-9, abs=1e-12)
    gn = np.linalg.norm(g)
    cauchy = 0.5 * gn * min(delta, gn / np.linalg.norm(B, 2))
    assert res.model_decrease >= cauchy * (1 - 1e-10)
    assert np.all(np.diff(hist) <= 1e-12 * max(1.0, abs(hist[-1])))


def test_rho_examples():
    q = spd_quadratic(4, seed=0)
    w = np.ones(4)
    g = q.gradient(w)
    res = steihaug_cg(lambda v: q.A @ v, g, 0.1)
    assert rho(q.value(w), q.value(w + res.p), res.model_decrease) == pytest.approx(1.0, rel=1e-9)
    assert rho(2.0, 2.0, 0.3) == 0.0
    assert rho(1.0, 0.4, 0.5) == pytest.approx(1.2)
    with pytest.raises(DegenerateModelError):
        rho(1.0, 0.5, 0.0)


def test_adjust_tr_examples():
    p = TrustRegionParams()
    assert adjust_tr(1.0, 0.9, 0.9, p) == 2.0
    assert adjust_tr(1.0, 0.5, 0.3, p) == 1.0
    assert adjust_tr(1.0, -0.2, 0.3, p) == 0.5


def expected_radius(delta, r, pn, prm):
    if r > prm.eta2 and pn <= prm.gamma1 * delta:
        return delta
    if r > prm.eta2:
        return min(prm.zeta1 * delta, prm.delta_max)
    if prm.eta3 <= r <= prm.eta2:
        return delta
    return prm.zeta2 * delta


def test_adjust_tr_branch_table():
    prm = TrustRegionParams(delta_max=3.0)
    deltas = [0.5, 1.0, 2.0]
    rhos = [-1.0, 0.0, 0.05, prm.eta3, 0.5, prm.eta2, 0.76, 1.0, 2.0]
    fractions = [0.0, 0.25, prm.gamma1, 0.51, 1.0]
    branches = set()
    for delta, r, f in itertools.product(deltas, rhos, fractions):
        got = adjust_tr(delta, r, f * delta, prm)
        assert got == expected_radius(delta, r, f * delta, prm), (delta, r, f)
        if r > prm.eta2:
            branches.add("hold-short" if f <= prm.gamma1 else ("cap" if delta * prm.zeta1 > 3 else "grow"))
        else:
            branches.add("hold" if r >= prm.eta3 else "shrink")
    assert branches == {"hold-short", "grow", "cap", "hold", "shrink"}


@pytest.mark.parametrize("kwargs", [
    dict(eta2=0.05, eta3=0.1), dict(eta2=1.0), dict(gamma1=1.0), dict(zeta1=1.0),
    dict(zeta2=1.0), dict(delta0=0.0), dict(delta_max=0.5),
])
def test_params_validation(kwargs):
    with pytest.raises(ValueError):
        TrustRegionParams(**kwargs)


def test_tr_step_rejection_keeps_point():
    q = quadratic_objective(np.diag([1.0, 100.0]), np.zeros(2))
    w = np.array([1.0, 1.0])
    c = CountingObjective(q)
    out = tr_step(c, w, q.value(w), q.gradient(w), lambda v: 1e-3 * v, 5.0, TrustRegionParams())
    assert not out.accepted and out.delta == 2.5
    np.testing.assert_array_equal(out.w, w)
    assert c.epochs == 1


def test_newton_one_accepted_iteration_on_quadratic():
    q = spd_quadratic(10, seed=3)
    tr = newton_tr_run(q, np.ones(10), TrustRegionParams(delta0=1e3, delta_max=1e4),
                       Budget(max_iters=1, grad_tol=1e-10), cg_rel_tol=1e-13, cg_max_iter=30)
    assert tr.final.grad_norm <= 1e-10


def test_newton_epoch_accounting():
    q = spd_quadratic(6, seed=1)
    w0 = np.ones(6)
    c = CountingObjective(q)
    newton_tr_run(c, w0, TrustRegionParams(delta0=1e3, delta_max=1e4), Budget(max_iters=1, grad_tol=0),
                  cg_rel_tol=1e-3)
    t = steihaug_cg(lambda v: q.A @ v, q.gradient(w0), 1e3, rel_tol=1e-3).cg_iterations
    # initial value and gradient, then t products, one trial value and one new gradient
    assert c.epochs == 2 + t + 1 + 1
    assert c.calls["hvp"] == t


def test_newton_decreases_on_toy(toy_small):
    tr = newton_tr_run(toy_small, init_params(toy_small.spec, 0, 1.0), budget=Budget(max_epochs=60))
    loss = tr.column("loss")
    moved = np.diff(loss) != 0
    assert np.all(np.diff(loss)[moved] < 0)
    assert math.isfinite(loss[-1]) and loss[-1] < loss[0]
