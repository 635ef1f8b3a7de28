"""Datasets: the in-memory type, CSV ingestion and the synthetic families."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

LABEL_COLUMN = "label"
FAMILIES = ("gauss_blob", "two_clusters", "correlated_gauss", "ring",
            "subspace_outliers", "scaled_blob")


@dataclass
class Dataset:
    """Feature table with optional 0/1 outlier labels (1 = outlier)."""

    features: np.ndarray
    labels: Optional[np.ndarray] = None
    name: str = ""
    columns: list = field(default_factory=list)
    # ingestion notes, e.g. how many cells were imputed per column
    notes: dict = field(default_factory=dict)

    def __post_init__(self):
        x = np.asarray(self.features, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        if x.ndim != 2 or x.shape[0] == 0 or x.shape[1] == 0:
            raise ValueError(f"features must be a non-empty 2-d table, got {x.shape}")
        if not np.all(np.isfinite(x)):
            raise ValueError("features contain NaN or Inf")
        self.features = x
        if self.labels is not None:
            y = np.asarray(self.labels)
            if y.shape != (x.shape[0],):
                raise ValueError(f"{x.shape[0]} rows but {y.size} labels")
            if not np.all(np.isin(y, (0, 1))):
                raise ValueError("labels must be 0/1")
            self.labels = y.astype(int)
        if not self.columns:
            self.columns = [f"x{j}" for j in range(x.shape[1])]
        elif len(self.columns) != x.shape[1]:
            raise ValueError("column names do not match the feature count")

    @property
    def shape(self):
        return self.features.shape


def _parse_cell(text):
    try:
        value = float(text)
    except ValueError:
        return math.nan
    return value if math.isfinite(value) else math.nan


def read_csv(path, label_col: Optional[str] = LABEL_COLUMN, name=None) -> Dataset:
    """Read a CSV with a header row into a :class:`Dataset`.

    ``label_col`` names the 0/1 label column; it is optional in the file.
    Non-numeric, empty and non-finite cells are replaced by their column
    mean (0 when the whole column is missing); counts per column are kept
    in ``Dataset.notes["imputed"]``.
    """
    path = Path(path)
    with path.open(newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValueError(f"{path}: empty file")
    header, body = rows[0], [r for r in rows[1:] if r]
    if not body:
        raise ValueError(f"{path}: no data rows")
    width = len(header)
    if any(len(r) != width for r in body):
        raise ValueError(f"{path}: ragged rows")
    labels = None
    keep = list(range(width))
    if label_col is not None and label_col in header:
        j = header.index(label_col)
        keep.remove(j)
        raw = [_parse_cell(r[j]) for r in body]
        if any(v not in (0.0, 1.0) for v in raw):
            raise ValueError(f"{path}: label column {label_col!r} must be 0/1")
        labels = np.asarray(raw, dtype=int)
    if not keep:
        raise ValueError(f"{path}: no feature columns")
    x = np.array([[_parse_cell(r[j]) for j in keep] for r in body], dtype=float)
    missing = np.isnan(x)
    imputed = {}
    if missing.any():
        counts = missing.sum(axis=0)
        with np.errstate(invalid="ignore"):
            means = np.nanmean(np.where(missing, np.nan, x), axis=0)
        means = np.where(np.isnan(means), 0.0, means)
        x = np.where(missing, means[None, :], x)
        imputed = {header[keep[j]]: int(c) for j, c in enumerate(counts) if c}
    return Dataset(x, labels, name or path.stem, [header[j] for j in keep],
                   {"imputed": imputed})


def write_csv(dataset: Dataset, path) -> None:
    """Write features (17 significant digits) and the label column if any."""
    path = Path(path)
    header = list(dataset.columns)
    if dataset.labels is not None:
        header.append(LABEL_COLUMN)
    with path.open("w", newline="") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(header)
        for i, row in enumerate(dataset.features):
            cells = [f"{v:.17g}" for v in row]
            if dataset.labels is not None:
                cells.append(str(int(dataset.labels[i])))
            out.writerow(cells)


# --- synthetic families ----------------------------------------------------

def _inliers(family, n, d, rng):
    if family == "gauss_blob":
        return rng.normal(size=(n, d))
    if family == "two_clusters":
        shift = np.zeros(d)
        shift[0] = 4.0
        side = np.where(rng.random(n) < 0.5, -1.0, 1.0)
        return rng.normal(size=(n, d)) + side[:, None] * shift
    if family == "correlated_gauss":
        # one dominant shared factor: features strongly correlated
        factor = rng.normal(size=(n, 1))
        return factor + 0.15 * rng.normal(size=(n, d))
    if family == "ring":
        angle = rng.uniform(0.0, 2.0 * np.pi, n)
        radius = 5.0 + 0.3 * rng.normal(size=n)
        x = 0.3 * rng.normal(size=(n, d))
        x[:, 0] = radius * np.cos(angle)
        if d > 1:
            x[:, 1] = radius * np.sin(angle)
        return x
    if family == "subspace_outliers":
        return rng.uniform(-1.0, 1.0, size=(n, d))
    if family == "scaled_blob":
        # scale mixture: tight core plus a wide halo
        scale = np.where(rng.random(n) < 0.8, 0.3, 2.0)
        return rng.normal(size=(n, d)) * scale[:, None]
    raise ValueError(f"unknown family {family!r}; choose from {', '.join(FAMILIES)}")


def generate_synthetic(family: str, n: int, d: int, contamination: float,
                       seed: int) -> Dataset:
    """Labeled synthetic dataset from one of :data:`FAMILIES`.

    ``round(contamination * n)`` outliers are drawn uniformly from a box
    three times as wide as the inliers' range in each feature, centred on
    it. For ``subspace_outliers`` the box is used on a random half of the
    features only; the other features are drawn like inliers, so those
    outliers are visible in a subspace alone. Rows are shuffled.
    """
    if not 0.0 < contamination < 0.5:
        raise ValueError("contamination must lie in (0, 0.5)")
    if n < 2 or d < 1:
        raise ValueError("need n >= 2 and d >= 1")
    if family not in FAMILIES:
        raise ValueError(f"unknown family {family!r}; choose from {', '.join(FAMILIES)}")
    rng = np.random.default_rng(seed)
    n_out = int(round(contamination * n))
    x_in = _inliers(family, n - n_out, d, rng)
    lo, hi = x_in.min(axis=0), x_in.max(axis=0)
    centre, width = 0.5 * (lo + hi), hi - lo
    x_out = centre + width * rng.uniform(-1.5, 1.5, size=(n_out, d))
    if family == "subspace_outliers" and d > 1:
        inlier_like = _inliers(family, n_out, d, rng)
        for i in range(n_out):
            cols = rng.permutation(d)[: d - d // 2]
            x_out[i, cols] = inlier_like[i, cols]
    x = np.vstack([x_in, x_out])
    y = np.r_[np.zeros(n - n_out, dtype=int), np.ones(n_out, dtype=int)]
    order = rng.permutation(n)
    return Dataset(x[order], y[order], f"{family}_s{seed}")
