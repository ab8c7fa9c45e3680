import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sampled_qn.kernels import AsymmetryError
from sampled_qn.objective import (CountingObjective, Dataset, MlpObjective, MlpSpec,
                                  NumericOverflowError, QuadraticObjective, SizeError, full_hessian,
                                  gradient, hvp, hvp_batch, init_params, loss_accuracy,
                                  quadratic_objective, random_spd)

from conftest import spd_quadratic


def random_data(rng, n, n_in, n_classes):
    return Dataset(rng.standard_normal((n, n_in)), rng.integers(0, n_classes, n), n_classes)


def fd_gradient(f, w, h=1e-6):
    g = np.zeros_like(w)
    for i in range(w.size):
        e = np.zeros_like(w)
        e[i] = h
        g[i] = (f(w + e) - f(w - e)) / (2 * h)
    return g


def rel(a, b):
    return np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-300)


def test_init_params_examples():
    small = MlpSpec((2, 2, 2, 2, 2, 2, 2))
    assert np.array_equal(init_params(small, 7, 0.0), np.zeros(36))
    np.testing.assert_array_equal(init_params(small, 7, 0.5), init_params(small, 7, 0.5))
    w = init_params(MlpSpec((2, 4, 8, 8, 4, 2, 2)), 11, 0.3)
    assert w.size == 176 and np.all(np.abs(w) <= 0.3)


def test_zero_weights_give_log_two():
    spec = MlpSpec((2, 2, 2, 2, 2, 2, 2))
    data = random_data(np.random.default_rng(1), 30, 2, 2)
    loss, _ = loss_accuracy(spec, np.zeros(36), data)
    assert loss == pytest.approx(math.log(2), abs=1e-15)


def test_hand_fixed_logits():
    spec = MlpSpec((2, 2))
    w = np.array([0, 0, 0, 0, 1.0, 0.0])  # W = 0, b = (1, 0)
    loss, acc = loss_accuracy(spec, w, Dataset(np.array([[0.3, -0.2]]), np.array([0]), 2))
    assert loss == pytest.approx(-math.log(math.e / (math.e + 1)), abs=1e-15)
    assert loss == pytest.approx(0.3133, abs=1e-4)
    assert acc == 1.0


def test_perfect_predictions_accuracy():
    spec = MlpSpec((2, 2))
    w = np.array([1.0, 0, 0, 1.0, 0, 0])  # logits = x
    X = np.array([[2.0, -1.0], [-1.0, 3.0], [0.5, 0.1]])
    _, acc = loss_accuracy(spec, w, Dataset(X, np.array([0, 1, 0]), 2))
    assert acc == 1.0


def test_zero_output_layer_blocks_earlier_gradients(rng):
    spec = MlpSpec((2, 3, 3, 2))
    data = random_data(rng, 20, 2, 2)
    w = rng.uniform(-1, 1, spec.n_params)
    w[-(2 * 3 + 2):-2] = 0.0  # output weights, keep its bias
    g = gradient(spec, w, data)
    n_early = spec.n_params - (2 * 3 + 2)
    assert np.all(g[:n_early] == 0.0)


def test_gradient_finite_differences(rng):
    spec = MlpSpec((2, 2, 2, 2, 2, 2, 2))
    data = random_data(rng, 10, 2, 2)
    w = rng.uniform(-1, 1, 36)
    f = lambda x: loss_accuracy(spec, x, data)[0]
    assert rel(gradient(spec, w, data), fd_gradient(f, w)) <= 1e-6


def test_softmax_regression_closed_form(rng):
    spec = MlpSpec((3, 4))
    data = random_data(rng, 25, 3, 4)
    w = rng.standard_normal(spec.n_params)
    W, b = w[:12].reshape(4, 3), w[12:]
    Z = data.inputs @ W.T + b
    P = np.exp(Z - Z.max(1, keepdims=True))
    P /= P.sum(1, keepdims=True)
    E = P - np.eye(4)[data.labels]
    expected = np.concatenate([(E.T @ data.inputs / data.n).ravel(), E.mean(0)])
    np.testing.assert_allclose(gradient(spec, w, data), expected, rtol=1e-12, atol=1e-15)


def test_directional_gradient_probes(toy_small, rng):
    for _ in range(20):
        w = rng.uniform(-1.5, 1.5, toy_small.dim)
        v = rng.standard_normal(toy_small.dim)
        h = 1e-6
        fd = (toy_small.value(w + h * v) - toy_small.value(w - h * v)) / (2 * h)
        exact = toy_small.gradient(w) @ v
        assert abs(fd - exact) <= 1e-6 * max(abs(exact), np.linalg.norm(toy_small.gradient(w)) * np.linalg.norm(v))


def test_quadratic_gradient_probes(rng):
    q = spd_quadratic(8)
    for _ in range(20):
        w = rng.standard_normal(8)
        assert rel(q.gradient(w), fd_gradient(q.value, w)) <= 1e-6


def test_hvp_examples(toy_small, w_small, rng):
    d = toy_small.dim
    assert np.all(toy_small.hvp(w_small, np.zeros(d)) == 0)
    u, v = rng.standard_normal((2, d))
    a, b = 1.7, -0.4
    lhs = toy_small.hvp(w_small, a * u + b * v)
    rhs = a * toy_small.hvp(w_small, u) + b * toy_small.hvp(w_small, v)
    assert np.linalg.norm(lhs - rhs) <= 1e-10 * max(1.0, np.linalg.norm(rhs))
    h = 1e-5
    fd = (toy_small.gradient(w_small + h * v) - toy_small.gradient(w_small - h * v)) / (2 * h)
    assert rel(toy_small.hvp(w_small, v), fd) <= 1e-5


def test_hvp_symmetry(toy_medium, rng):
    w = init_params(toy_medium.spec, 2, 1.0)
    S = rng.standard_normal((toy_medium.dim, 6))
    G = S.T @ toy_medium.hvp_batch(w, S)
    np.testing.assert_allclose(G, G.T, atol=1e-10 * np.abs(G).max())


@pytest.mark.parametrize("m", [1, 4, 16])
def test_hvp_batch_matches_columnwise(toy_small, w_small, rng, m):
    S = rng.standard_normal((toy_small.dim, m))
    HS = toy_small.hvp_batch(w_small, S)
    cols = np.column_stack([toy_small.hvp(w_small, S[:, j]) for j in range(m)])
    assert np.abs(HS - cols).max() <= 1e-12 * max(1.0, np.abs(cols).max())


def test_full_hessian_basis_probe(toy_small, w_small):
    H = full_hessian(toy_small, w_small)
    assert np.array_equal(H, H.T)
    for j in (0, 17, 35):
        e = np.zeros(36)
        e[j] = 1.0
        np.testing.assert_allclose(H[:, j], toy_small.hvp(w_small, e), atol=1e-12)
    h = 1e-6
    fd = np.column_stack([
        (toy_small.gradient(w_small + h * e) - toy_small.gradient(w_small - h * e)) / (2 * h)
        for e in np.eye(36)
    ])
    assert np.abs(H - fd).max() <= 1e-4


def test_full_hessian_of_quadratic_is_exact():
    A = random_spd(6, 10, 3)
    H = full_hessian(quadratic_objective(A, np.zeros(6)), np.ones(6))
    np.testing.assert_array_equal(H, 0.5 * (A + A.T))


def test_full_hessian_size_guard():
    class Huge:
        dim = 5000
    with pytest.raises(SizeError):
        full_hessian(Huge(), None)


def test_quadratic_examples(rng):
    q = quadratic_objective(np.eye(3), np.zeros(3))
    w = rng.standard_normal(3)
    np.testing.assert_allclose(q.gradient(w), w)
    np.testing.assert_allclose(q.minimizer(), 0)
    q = quadratic_objective(np.diag([2.0, 5.0]), np.array([2.0, 5.0]))
    np.testing.assert_allclose(q.minimizer(), [1, 1])
    q = spd_quadratic(8, seed=4)
    assert np.linalg.norm(q.gradient(q.minimizer())) <= 1e-10


def test_quadratic_preconditions():
    with pytest.raises(AsymmetryError):
        QuadraticObjective(np.array([[1.0, 2.0], [0.0, 1.0]]), np.zeros(2))
    with pytest.raises(ValueError):
        QuadraticObjective(np.diag([1.0, -1.0]), np.zeros(2))


def test_random_spd_spectrum():
    q = QuadraticObjective(random_spd(20, 100, 0), np.zeros(20))
    assert q.eigenvalues[0] == pytest.approx(1.0, rel=1e-10)
    assert q.eigenvalues[-1] == pytest.approx(100.0, rel=1e-10)


def test_overflow_names_the_sample():
    spec = MlpSpec((1, 2))
    w = np.array([1e308, -1e308, 0.0, 0.0])
    data = Dataset(np.array([[0.5], [10.0], [3.0]]), np.array([0, 1, 0]), 2)
    with pytest.raises(NumericOverflowError) as info:
        loss_accuracy(spec, w, data)
    assert info.value.sample_index == 1


def test_dataset_invariants():
    with pytest.raises(ValueError):
        Dataset(np.array([[0.0, np.nan]]), np.array([0]), 2)
    with pytest.raises(ValueError):
        Dataset(np.zeros((2, 2)), np.array([0, 2]), 2)
    with pytest.raises(ValueError):
        MlpSpec((2,))


def test_counting_charges_one_epoch_per_call(toy_small, w_small):
    c = CountingObjective(toy_small)
    c.value(w_small)
    c.gradient(w_small)
    c.hvp(w_small, w_small)
    c.hvp_batch(w_small, np.eye(36)[:, :5])
    assert c.epochs == 4.0
    c.batch_gradient(w_small, np.arange(25))
    assert c.epochs == 4.25
    c.metrics(w_small)
    assert c.epochs == 4.25
    c.audit()


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31), st.lists(st.integers(1, 4), min_size=1, max_size=3))
def test_gradient_linearity_of_batches(seed, widths):
    """Full gradient is the sample-weighted mean of mini-batch gradients."""
    rng = np.random.default_rng(seed)
    spec = MlpSpec((2, *widths, 2))
    data = random_data(rng, 12, 2, 2)
    obj = MlpObjective(spec, data)
    w = rng.uniform(-1, 1, spec.n_params)
    halves = obj.batch_gradient(w, np.arange(6)) + obj.batch_gradient(w, np.arange(6, 12))
    np.testing.assert_allclose(obj.gradient(w), 0.5 * halves, atol=1e-13)
    np.testing.assert_allclose(hvp(spec, w, data, w), hvp_batch(spec, w, data, w[:, None])[:, 0], atol=1e-13)
