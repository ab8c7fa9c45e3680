"""Objectives: a dense sigmoid MLP classifier and a strongly convex quadratic.

Parameter layout for the MLP: layers in order, and for each layer the weight
matrix of shape ``(fan_out, fan_in)`` flattened row-major, followed by the
bias vector of length ``fan_out``.

Objectives do not count their own evaluations. Wrap them in
:class:`CountingObjective` to charge epochs.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Protocol

import numpy as np

from .kernels import AsymmetryError, is_symmetric, solve_dense, sym_eig

MAX_DENSE_DIM = 4096


class NumericOverflowError(ArithmeticError):
    """A forward pass produced non-finite values."""

    def __init__(self, sample_index: int):
        super().__init__(f"non-finite forward values at sample {sample_index}")
        self.sample_index = sample_index


class SizeError(ValueError):
    pass


@dataclass(frozen=True)
class MlpSpec:
    """Layer widths from input to output. Hidden layers use a sigmoid,
    the last layer is affine followed by softmax cross-entropy."""

    layer_sizes: tuple[int, ...]

    def __post_init__(self):
        sizes = tuple(int(s) for s in self.layer_sizes)
        if len(sizes) < 2 or min(sizes) < 1:
            raise ValueError(f"invalid layer sizes {self.layer_sizes}")
        object.__setattr__(self, "layer_sizes", sizes)

    @property
    def n_params(self) -> int:
        s = self.layer_sizes
        return sum(s[i + 1] * s[i] + s[i + 1] for i in range(len(s) - 1))

    @property
    def n_classes(self) -> int:
        return self.layer_sizes[-1]

    def unpack(self, w: np.ndarray) -> list[tuple[np.ndarray, np.ndarray]]:
        """Views of ``w`` (or of the leading axes of a stack of vectors) as
        per-layer ``(W, b)``."""
        if w.shape[-1] != self.n_params:
            raise ValueError(f"parameter vector has length {w.shape[-1]}, expected {self.n_params}")
        lead = w.shape[:-1]
        layers = []
        pos = 0
        for fan_in, fan_out in zip(self.layer_sizes[:-1], self.layer_sizes[1:]):
            W = w[..., pos:pos + fan_out * fan_in].reshape(*lead, fan_out, fan_in)
            pos += fan_out * fan_in
            b = w[..., pos:pos + fan_out]
            pos += fan_out
            layers.append((W, b))
        return layers


@dataclass(frozen=True)
class Dataset:
    inputs: np.ndarray
    labels: np.ndarray
    n_classes: int

    def __post_init__(self):
        X = np.asarray(self.inputs, dtype=np.float64)
        y = np.asarray(self.labels, dtype=np.int64)
        if X.ndim != 2 or X.shape[0] < 1:
            raise ValueError("dataset needs at least one sample")
        if y.shape != (X.shape[0],):
            raise ValueError("labels must be one integer per sample")
        if not np.all(np.isfinite(X)):
            raise ValueError("dataset inputs contain non-finite values")
        if y.min() < 0 or y.max() >= self.n_classes:
            raise ValueError(f"labels must lie in [0, {self.n_classes})")
        object.__setattr__(self, "inputs", X)
        object.__setattr__(self, "labels", y)

    @property
    def n(self) -> int:
        return self.inputs.shape[0]

    def subset(self, idx) -> "Dataset":
        return Dataset(self.inputs[idx], self.labels[idx], self.n_classes)


class Objective(Protocol):
    dim: int
    n_samples: int

    def value(self, w: np.ndarray) -> float: ...
    def gradient(self, w: np.ndarray) -> np.ndarray: ...
    def hvp(self, w: np.ndarray, v: np.ndarray) -> np.ndarray: ...
    def hvp_batch(self, w: np.ndarray, S: np.ndarray) -> np.ndarray: ...
    def batch_gradient(self, w: np.ndarray, idx: np.ndarray) -> np.ndarray: ...
    def metrics(self, w: np.ndarray) -> tuple[float, float, float]: ...


def init_params(spec: MlpSpec, seed: int, scale: float = 0.5) -> np.ndarray:
    if scale < 0:
        raise ValueError("scale must be non-negative")
    rng = np.random.default_rng(seed)
    return rng.uniform(-scale, scale, size=spec.n_params) if scale > 0 else np.zeros(spec.n_params)


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def _check_finite(logits: np.ndarray) -> None:
    bad = ~np.all(np.isfinite(logits), axis=-1)
    if np.any(bad):
        raise NumericOverflowError(int(np.flatnonzero(bad)[0]))


def _forward(spec: MlpSpec, w: np.ndarray, X: np.ndarray):
    layers = spec.unpack(w)
    acts = [X]
    # overflow is detected on the logits below and reported with its sample index
    with np.errstate(over="ignore", invalid="ignore"):
        for i, (W, b) in enumerate(layers):
            z = acts[-1] @ W.T + b
            acts.append(z if i == len(layers) - 1 else _sigmoid(z))
    _check_finite(acts[-1])
    return layers, acts


def _softmax(z):
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def _cross_entropy(logits, labels):
    zmax = logits.max(axis=1)
    lse = zmax + np.log(np.exp(logits - zmax[:, None]).sum(axis=1))
    return float(np.mean(lse - logits[np.arange(labels.size), labels]))


def loss_accuracy(spec: MlpSpec, w: np.ndarray, data: Dataset) -> tuple[float, float]:
    _, acts = _forward(spec, w, data.inputs)
    logits = acts[-1]
    acc = float(np.mean(np.argmax(logits, axis=1) == data.labels))
    return _cross_entropy(logits, data.labels), acc


def gradient(spec: MlpSpec, w: np.ndarray, data: Dataset) -> np.ndarray:
    layers, acts = _forward(spec, w, data.inputs)
    n = data.n
    delta = _softmax(acts[-1])
    delta[np.arange(n), data.labels] -= 1.0
    delta /= n
    grads = []
    for li in range(len(layers) - 1, -1, -1):
        W, _ = layers[li]
        a_prev = acts[li]
        grads.append((delta.sum(axis=0), (delta.T @ a_prev).ravel()))
        if li > 0:
            delta = (delta @ W) * a_prev * (1.0 - a_prev)
    out = []
    for gb, gW in reversed(grads):
        out.extend((gW, gb))
    return np.concatenate(out)


def hvp_batch(spec: MlpSpec, w: np.ndarray, data: Dataset, S: np.ndarray) -> np.ndarray:
    """Exact Hessian products for every column of ``S`` (shape ``d x m``).

    Forward-over-reverse: the backprop recursion is differentiated along each
    direction, with all directions carried together on a leading axis.
    """
    S = np.asarray(S, dtype=np.float64)
    if S.ndim == 1:
        S = S[:, None]
    layers, acts = _forward(spec, w, data.inputs)
    dirs = spec.unpack(np.ascontiguousarray(S.T))
    n = data.n
    n_layers = len(layers)

    # forward tangents: r_acts[l] = d(acts[l]) along each direction, shape (m, n, width)
    m = S.shape[1]
    r_acts = [np.zeros((m,) + acts[0].shape)]
    r_pre = []
    for li, ((W, _), (VW, Vb)) in enumerate(zip(layers, dirs)):
        rz = np.einsum("ni,moi->mno", acts[li], VW) + r_acts[-1] @ W.T + Vb[:, None, :]
        r_pre.append(rz)
        if li == n_layers - 1:
            r_acts.append(rz)
        else:
            a = acts[li + 1]
            r_acts.append(rz * (a * (1.0 - a)))

    p = _softmax(acts[-1])
    delta = p.copy()
    delta[np.arange(n), data.labels] -= 1.0
    delta /= n
    rz_out = r_pre[-1]
    r_delta = p * (rz_out - np.sum(p * rz_out, axis=-1, keepdims=True)) / n

    pieces = []
    for li in range(n_layers - 1, -1, -1):
        W, _ = layers[li]
        VW, _ = dirs[li]
        a_prev, ra_prev = acts[li], r_acts[li]
        rgW = np.einsum("mno,ni->moi", r_delta, a_prev) + np.einsum("no,mni->moi", delta, ra_prev)
        pieces.append((r_delta.sum(axis=1), rgW.reshape(m, -1)))
        if li > 0:
            back = delta @ W
            r_back = r_delta @ W + np.einsum("no,moi->mni", delta, VW)
            d1 = a_prev * (1.0 - a_prev)
            d2 = d1 * (1.0 - 2.0 * a_prev)
            r_delta = r_back * d1 + back * d2 * r_pre[li - 1]
            delta = back * d1
    out = []
    for rgb, rgW in reversed(pieces):
        out.extend((rgW, rgb))
    return np.concatenate(out, axis=1).T


def hvp(spec: MlpSpec, w: np.ndarray, data: Dataset, v: np.ndarray) -> np.ndarray:
    return hvp_batch(spec, w, data, np.asarray(v, dtype=np.float64)[:, None])[:, 0]


@dataclass
class MlpObjective:
    spec: MlpSpec
    train: Dataset
    test: Dataset | None = None

    def __post_init__(self):
        if self.train.inputs.shape[1] != self.spec.layer_sizes[0]:
            raise ValueError("input width does not match the network")
        if self.train.n_classes != self.spec.n_classes:
            raise ValueError("class count does not match the network output")

    @property
    def dim(self) -> int:
        return self.spec.n_params

    @property
    def n_samples(self) -> int:
        return self.train.n

    def value(self, w):
        return loss_accuracy(self.spec, w, self.train)[0]

    def gradient(self, w):
        return gradient(self.spec, w, self.train)

    def batch_gradient(self, w, idx):
        return gradient(self.spec, w, self.train.subset(idx))

    def hvp(self, w, v):
        return hvp(self.spec, w, self.train, v)

    def hvp_batch(self, w, S):
        return hvp_batch(self.spec, w, self.train, S)

    def metrics(self, w):
        loss, acc = loss_accuracy(self.spec, w, self.train)
        test_acc = -1.0 if self.test is None else loss_accuracy(self.spec, w, self.test)[1]
        return loss, acc, test_acc


@dataclass
class QuadraticObjective:
    """``F(w) = 0.5 w'Aw - b'w`` with symmetric positive-definite ``A``.

    Treated as a single-sample dataset, so mini-batch gradients are full
    gradients.
    """

    A: np.ndarray
    b: np.ndarray
    n_samples: int = 1

    def __post_init__(self):
        self.A = np.array(self.A, dtype=np.float64)
        self.b = np.array(self.b, dtype=np.float64)
        if not is_symmetric(self.A):
            raise AsymmetryError("quadratic objective needs a symmetric matrix")
        evals, _ = sym_eig(self.A)
        if evals[0] <= 0:
            raise ValueError(f"matrix is not positive definite (min eigenvalue {evals[0]:.3g})")
        self.eigenvalues = evals

    @property
    def dim(self) -> int:
        return self.b.size

    def minimizer(self) -> np.ndarray:
        return solve_dense(self.A, self.b)

    # a diverging run overflows here; callers detect and report the non-finite value
    def value(self, w):
        with np.errstate(over="ignore", invalid="ignore"):
            return float(0.5 * w @ self.A @ w - self.b @ w)

    def gradient(self, w):
        with np.errstate(over="ignore", invalid="ignore"):
            return self.A @ w - self.b

    def batch_gradient(self, w, idx):
        return self.gradient(w)

    def hvp(self, w, v):
        return self.A @ v

    def hvp_batch(self, w, S):
        return self.A @ S

    def metrics(self, w):
        return self.value(w), -1.0, -1.0


def quadratic_objective(A, b) -> QuadraticObjective:
    return QuadraticObjective(A, b)


def random_spd(d: int, cond: float, seed: int) -> np.ndarray:
    """SPD matrix with log-spaced spectrum in ``[1, cond]``."""
    rng = np.random.default_rng(seed)
    Q, _ = np.linalg.qr(rng.standard_normal((d, d)))
    evals = np.logspace(0.0, np.log10(cond), d)
    A = (Q * evals) @ Q.T
    return 0.5 * (A + A.T)


def full_hessian(obj: Objective, w: np.ndarray) -> np.ndarray:
    d = obj.dim
    if d > MAX_DENSE_DIM:
        raise SizeError(f"dimension {d} exceeds the dense limit {MAX_DENSE_DIM}")
    H = obj.hvp_batch(w, np.eye(d))
    scale = np.linalg.norm(H)
    asym = np.linalg.norm(H - H.T)
    if asym > 1e-8 * max(scale, 1e-300):
        raise ArithmeticError(f"Hessian asymmetry {asym:.3g} exceeds tolerance")
    return 0.5 * (H + H.T)


@dataclass
class CountingObjective:
    """Charges epochs for every data-touching call on the wrapped objective.

    ``value``, ``gradient``, ``hvp`` and ``hvp_batch`` each cost one epoch;
    a mini-batch gradient costs ``len(idx) / n``. ``metrics`` is free (it is
    used only for logging).
    """

    inner: Objective
    epochs: float = 0.0
    calls: dict = field(default_factory=lambda: {"value": 0, "gradient": 0, "hvp": 0, "hvp_batch": 0})
    batch_samples: int = 0

    @property
    def dim(self) -> int:
        return self.inner.dim

    @property
    def n_samples(self) -> int:
        return self.inner.n_samples

    def _charge(self, kind: str):
        self.calls[kind] += 1
        self.epochs += 1.0

    def value(self, w):
        self._charge("value")
        return self.inner.value(w)

    def gradient(self, w):
        self._charge("gradient")
        return self.inner.gradient(w)

    def hvp(self, w, v):
        self._charge("hvp")
        return self.inner.hvp(w, v)

    def hvp_batch(self, w, S):
        self._charge("hvp_batch")
        return self.inner.hvp_batch(w, S)

    def batch_gradient(self, w, idx):
        self.batch_samples += len(idx)
        self.epochs += len(idx) / self.inner.n_samples
        return self.inner.batch_gradient(w, idx)

    def metrics(self, w):
        return self.inner.metrics(w)

    def audit(self) -> None:
        expected = sum(self.calls.values()) + self.batch_samples / self.inner.n_samples
        if not np.isclose(expected, self.epochs, rtol=1e-12, atol=1e-9):
            raise AssertionError(f"epoch ledger mismatch: charged {self.epochs}, recomputed {expected}")
