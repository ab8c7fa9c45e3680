"""Fresh curvature pairs sampled around the current iterate."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

OPTION_GRADIENT_DIFF = "I"
OPTION_HESSIAN_PRODUCT = "II"


@dataclass
class CurvaturePairs:
    S: np.ndarray  # d x m displacements
    Y: np.ndarray  # d x m curvature vectors
    option: str
    radius: float
    # Option II only: the same pairs before the joint factor r is applied.
    # Quasi-Newton updates are invariant to scaling a pair (s, y) jointly, so
    # building from these keeps r out of the floating-point path entirely.
    unscaled: tuple | None = field(default=None, repr=False)

    @property
    def m(self) -> int:
        return self.S.shape[1]

    def columns(self):
        """Pairs to build approximations from, one column at a time."""
        S, Y = self.unscaled if self.unscaled is not None else (self.S, self.Y)
        for j in range(self.m):
            yield S[:, j], Y[:, j]


def _rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def sample_pairs(obj, w, m: int, r: float, option: str = OPTION_HESSIAN_PRODUCT, seed=0):
    """Build ``m`` pairs around ``w`` and return ``(pairs, gradient_at_w)``.

    ``seed`` may be an int or a ``numpy.random.Generator`` (consumed in place,
    which is how the runners thread one stream through a whole run).
    Option I costs ``1 + m`` gradient evaluations, Option II one gradient and
    one batched Hessian product.
    """
    if m < 1:
        raise ValueError("m must be at least 1")
    if not r > 0:
        raise ValueError("sampling radius must be positive")
    if option not in (OPTION_GRADIENT_DIFF, OPTION_HESSIAN_PRODUCT):
        raise ValueError(f"unknown sampling option {option!r}")
    rng = _rng(seed)
    w = np.asarray(w, dtype=np.float64)
    d = w.size

    g = obj.gradient(w)
    sigma = rng.standard_normal((m, d))
    for i in range(m):
        if not np.any(sigma[i]):
            sigma[i] = rng.standard_normal(d)
            if not np.any(sigma[i]):
                raise ArithmeticError(f"degenerate sampling direction in column {i}")
    D = np.ascontiguousarray(-sigma.T)
    S = r * D

    if option == OPTION_GRADIENT_DIFF:
        Y = np.empty_like(S)
        for i in range(m):
            try:
                Y[:, i] = g - obj.gradient(w - S[:, i])
            except ArithmeticError as exc:
                raise ArithmeticError(f"gradient evaluation failed for column {i}: {exc}") from exc
        return CurvaturePairs(S, Y, option, float(r)), g
    Z = np.asarray(obj.hvp_batch(w, D), dtype=np.float64)
    return CurvaturePairs(S, r * Z, option, float(r), (D, Z)), g
