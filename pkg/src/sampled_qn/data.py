"""Datasets and the named toy networks."""
from __future__ import annotations

import csv

import numpy as np

from .objective import Dataset, MlpSpec

# Listed structures plus a trailing 2->2 affine output layer; this reproduces
# the published parameter counts 36 / 176 / 908.
TOY_NETWORKS = {
    "small": (2, 2, 2, 2, 2, 2, 2),
    "medium": (2, 4, 8, 8, 4, 2, 2),
    "large": (2, 10, 20, 20, 10, 2, 2),
}


class DatasetError(ValueError):
    pass


def build_network(name: str) -> MlpSpec:
    try:
        return MlpSpec(TOY_NETWORKS[name])
    except KeyError:
        raise ValueError(f"unknown network {name!r}; choose from {sorted(TOY_NETWORKS)}") from None


TOY_GEOMETRIES = ("parabola", "annulus")


def gen_toy_dataset(seed: int = 0, per_class: int = 50, geometry: str = "parabola",
                    margin: float = 0.15) -> Dataset:
    """Two-class points in the plane, ``per_class`` of each.

    ``"parabola"``: uniform in ``[-1, 1]^2`` and labelled by the side of
    ``x2 = 1.5 x1^2 - 0.5``; a vertical band of half-width ``margin`` around
    the curve is left empty.

    ``"annulus"``: class 0 uniform in the disk of radius 0.35, class 1 uniform
    in the annulus ``0.6 <= |x| <= 1``. Width-2 sigmoid layers are
    diffeomorphisms onto their image, so the toy-small network cannot enclose
    one class by the other and tops out well below full accuracy here. The
    parabola is therefore the default.
    """
    rng = np.random.default_rng(seed)
    if geometry == "annulus":
        def ring(r_in, r_out):
            radius = np.sqrt(rng.uniform(r_in**2, r_out**2, per_class))
            theta = rng.uniform(0.0, 2.0 * np.pi, per_class)
            return np.column_stack([radius * np.cos(theta), radius * np.sin(theta)])

        X = np.vstack([ring(0.0, 0.35), ring(0.6, 1.0)])
    elif geometry == "parabola":
        pools = {0: [], 1: []}
        while min(len(v) for v in pools.values()) < per_class:
            for p in rng.uniform(-1.0, 1.0, size=(4 * per_class, 2)):
                h = p[1] - (1.5 * p[0] ** 2 - 0.5)
                if abs(h) >= margin:
                    pools[int(h > 0)].append(p)
        X = np.vstack([np.array(pools[0][:per_class]), np.array(pools[1][:per_class])])
    else:
        raise ValueError(f"unknown geometry {geometry!r}; choose from {TOY_GEOMETRIES}")
    y = np.repeat([0, 1], per_class)
    return Dataset(X, y, 2)


def save_csv_dataset(data: Dataset, path, header: bool = False) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        if header:
            writer.writerow([f"x{i}" for i in range(data.inputs.shape[1])] + ["label"])
        for x, label in zip(data.inputs, data.labels):
            writer.writerow([repr(float(v)) for v in x] + [int(label)])


def load_csv_dataset(path, n_features: int, has_header: bool = False,
                     n_classes: int | None = None) -> Dataset:
    """Rows are ``n_features`` floats followed by an integer label."""
    inputs, labels = [], []
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if has_header and lineno == 1:
                continue
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != n_features + 1:
                raise DatasetError(f"{path}:{lineno}: expected {n_features + 1} fields, got {len(row)}")
            try:
                feats = [float(c) for c in row[:n_features]]
                label = int(row[n_features])
            except ValueError as exc:
                raise DatasetError(f"{path}:{lineno}: cannot parse row ({exc})") from None
            if not np.all(np.isfinite(feats)):
                raise DatasetError(f"{path}:{lineno}: non-finite feature")
            if label < 0 or (n_classes is not None and label >= n_classes):
                raise DatasetError(f"{path}:{lineno}: label {label} out of range")
            inputs.append(feats)
            labels.append(label)
    if not inputs:
        raise DatasetError(f"{path}: dataset is empty")
    k = n_classes if n_classes is not None else max(labels) + 1
    return Dataset(np.array(inputs), np.array(labels), k)
