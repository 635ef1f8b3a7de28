"""Unsupervised outlier detectors. Every score is "higher = more outlying".

None of the detectors sees labels; :func:`fit_score` is the single entry
point used by the meta-trainer, the selector and the evaluation harness.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .transform import standardize

DENSITY_FLOOR = 1e-12
# iforest and loda are seeded; pipelines do not carry a seed of their own
DETECTOR_SEED = 0

SEARCH_SPACE = {
    "knn": {"k": (1, 3, 5, 10, 20, 50, 100), "method": ("largest", "mean", "median")},
    "hbos": {"n_bins": (5, 10, 20, 30, 50, 75, 100)},
    "iforest": {"n_estimators": (10, 30, 50, 100, 150, 200),
                "max_samples": (64, 128, 256, 512)},
    "loda": {"n_projections": (10, 20, 50, 100), "n_bins": (5, 10, 20, 30)},
    "abod": {"k": (3, 5, 10, 15, 20, 60)},
}
DEFAULT_PARAMS = {
    "knn": {"k": 5, "method": "largest"},
    "hbos": {"n_bins": 10},
    "iforest": {"n_estimators": 100, "max_samples": 256},
    "loda": {"n_projections": 100, "n_bins": 10},
    "abod": {"k": 5},
}
DETECTORS = tuple(SEARCH_SPACE)


@dataclass(frozen=True)
class PipelineConfig:
    """A detector name, its hyperparameters and the input-scaling flag."""

    detector: str
    params: dict = field(default_factory=dict)
    standardize_input: bool = False

    def __post_init__(self):
        if self.detector not in SEARCH_SPACE:
            raise ValueError(f"unknown detector {self.detector!r}; "
                             f"choose from {', '.join(DETECTORS)}")
        space = SEARCH_SPACE[self.detector]
        if set(self.params) != set(space):
            raise ValueError(f"{self.detector} takes params {sorted(space)}, "
                             f"got {sorted(self.params)}")
        for name, value in self.params.items():
            if value not in space[name] or isinstance(value, bool):
                raise ValueError(f"{self.detector}.{name}={value!r} is outside "
                                 f"the search space {space[name]}")
        if not isinstance(self.standardize_input, bool):
            raise ValueError("standardize_input must be a bool")

    def __hash__(self):
        return hash(self.to_json())

    @classmethod
    def default(cls, detector: str) -> "PipelineConfig":
        return cls(detector, dict(DEFAULT_PARAMS[detector]))

    def to_dict(self) -> dict:
        return {"detector": self.detector, "params": dict(self.params),
                "standardize_input": self.standardize_input}

    def to_json(self) -> str:
        """Canonical serialization: sorted keys, no whitespace."""
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_dict(cls, d: dict) -> "PipelineConfig":
        extra = set(d) - {"detector", "params", "standardize_input"}
        if extra:
            raise ValueError(f"unexpected pipeline keys {sorted(extra)}")
        return cls(d["detector"], dict(d.get("params", {})),
                   d.get("standardize_input", False))

    @classmethod
    def from_json(cls, text: str) -> "PipelineConfig":
        return cls.from_dict(json.loads(text))


def _as_matrix(x):
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if x.ndim != 2 or x.shape[0] == 0:
        raise ValueError("expected a non-empty 2-d matrix")
    if not np.all(np.isfinite(x)):
        raise ValueError("input contains NaN or Inf")
    return x


# --- knn -------------------------------------------------------------------

def knn_score(x, k: int, method: str = "largest") -> np.ndarray:
    """Distance-to-neighbours score.

    Parameters
    ----------
    x : array (n, d)
    k : int
        Number of neighbours, ``1 <= k < n``; the point itself is excluded.
    method : {"largest", "mean", "median"}
        How the ``k`` distances are aggregated.
    """
    x = _as_matrix(x)
    n = x.shape[0]
    if not 1 <= k < n:
        raise ValueError(f"need 1 <= k < n, got k={k}, n={n}")
    agg = {"largest": lambda d: d[:, -1], "mean": lambda d: d.mean(axis=1),
           "median": lambda d: np.median(d, axis=1)}
    if method not in agg:
        raise ValueError(f"unknown method {method!r}")
    dist, _ = cKDTree(x).query(x, k=k + 1)
    # column 0 is the point itself or an exact duplicate: distance 0 either way
    return agg[method](dist[:, 1:])


# --- histograms (hbos, loda) -----------------------------------------------

def _hist_neg_log_density(v, n_bins):
    """-log of the equal-width histogram density at each value of ``v``.

    A constant ``v`` fills a single full-range bin and contributes 0.
    """
    lo, hi = v.min(), v.max()
    span = hi - lo
    if not span > 1e-12 * max(1.0, abs(lo), abs(hi)):
        return np.zeros_like(v)
    width = span / n_bins
    idx = np.clip(((v - lo) / width).astype(int), 0, n_bins - 1)
    counts = np.bincount(idx, minlength=n_bins)
    density = np.maximum(counts / (v.shape[0] * width), DENSITY_FLOOR)
    return -np.log(density[idx])


def hbos_score(x, n_bins: int = 10) -> np.ndarray:
    """Histogram-based score: sum over features of ``-log density``."""
    x = _as_matrix(x)
    if n_bins < 2:
        raise ValueError("n_bins must be >= 2")
    return sum(_hist_neg_log_density(x[:, j], n_bins) for j in range(x.shape[1]))


def loda_score(x, n_projections: int = 100, n_bins: int = 10,
               seed: int = DETECTOR_SEED) -> np.ndarray:
    """Mean ``-log density`` over random sparse 1-d projections.

    Each projection has ``max(1, round(sqrt(d)))`` nonzero Gaussian weights.
    """
    x = _as_matrix(x)
    if n_projections < 1 or n_bins < 2:
        raise ValueError("need n_projections >= 1 and n_bins >= 2")
    n, d = x.shape
    rng = np.random.default_rng(seed)
    nnz = max(1, int(round(math.sqrt(d))))
    total = np.zeros(n)
    for _ in range(n_projections):
        w = np.zeros(d)
        w[rng.choice(d, nnz, replace=False)] = rng.normal(size=nnz)
        total += _hist_neg_log_density(x @ w, n_bins)
    return total / n_projections


# --- isolation forest --------------------------------------------------------

def average_path_length(size):
    """``c(size)``: mean path length of an unsuccessful BST search."""
    size = np.asarray(size, dtype=float)
    out = np.zeros_like(size)
    big = size > 2
    s = size[big]
    out[big] = 2.0 * (np.log(s - 1.0) + np.euler_gamma) - 2.0 * (s - 1.0) / s
    out[size == 2] = 1.0
    return out


def _grow_tree(x, rng, max_depth):
    """Isolation tree as flat arrays; leaves have ``feature == -1``."""
    feature, threshold, left, right, size = [], [], [], [], []

    def node(rows, depth):
        i = len(feature)
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        size.append(rows.shape[0])
        if depth >= max_depth or rows.shape[0] <= 1:
            return i
        sub = x[rows]
        lo, hi = sub.min(axis=0), sub.max(axis=0)
        free = np.flatnonzero(hi > lo)
        if free.size == 0:
            return i
        j = free[rng.integers(free.size)]
        t = rng.uniform(lo[j], hi[j])
        mask = sub[:, j] < t
        feature[i], threshold[i] = j, t
        left[i] = node(rows[mask], depth + 1)
        right[i] = node(rows[~mask], depth + 1)
        return i

    node(np.arange(x.shape[0]), 0)
    return (np.array(feature), np.array(threshold), np.array(left),
            np.array(right), np.array(size))


def _path_lengths(tree, x):
    feature, threshold, left, right, size = tree
    at = np.zeros(x.shape[0], dtype=int)
    depth = np.zeros(x.shape[0])
    active = feature[at] >= 0
    while active.any():
        rows = np.flatnonzero(active)
        nodes = at[rows]
        go_left = x[rows, feature[nodes]] < threshold[nodes]
        at[rows] = np.where(go_left, left[nodes], right[nodes])
        depth[rows] += 1.0
        active[rows] = feature[at[rows]] >= 0
    return depth + average_path_length(size[at])


def iforest_score(x, n_estimators: int = 100, max_samples: int = 256,
                  seed: int = DETECTOR_SEED) -> np.ndarray:
    """Isolation forest score ``2 ** (-E[h(x)] / c(max_samples))`` in (0, 1].

    Trees are grown on subsamples of ``max_samples`` rows (without
    replacement) up to height ``ceil(log2(max_samples))``.
    """
    x = _as_matrix(x)
    n = x.shape[0]
    if n_estimators < 1:
        raise ValueError("n_estimators must be >= 1")
    if not 2 <= max_samples <= n:
        raise ValueError(f"need 2 <= max_samples <= n, got {max_samples}, n={n}")
    rng = np.random.default_rng(seed)
    max_depth = int(math.ceil(math.log2(max_samples)))
    total = np.zeros(n)
    for _ in range(n_estimators):
        rows = rng.choice(n, max_samples, replace=False)
        total += _path_lengths(_grow_tree(x[rows], rng, max_depth), x)
    norm = float(average_path_length(max_samples))
    return 2.0 ** (-(total / n_estimators) / norm)


# --- abod ------------------------------------------------------------------

def _neighbours(x, k):
    """Indices of the ``k`` nearest other points of every point."""
    n = x.shape[0]
    _, idx = cKDTree(x).query(x, k=k + 1)
    out = np.empty((n, k), dtype=int)
    for i in range(n):
        row = idx[i][idx[i] != i]
        out[i] = row[:k]
    return out


def abod_score(x, k: int = 5) -> np.ndarray:
    """Fast angle-based score over the ``k`` nearest neighbours.

    For point ``p`` and neighbour differences ``u, v`` the angle term is
    ``<u, v> / (|u|^2 |v|^2)``; the score is minus the variance of the
    terms over all neighbour pairs. Pairs with a zero vector are skipped;
    with no valid pair the score is 0.
    """
    x = _as_matrix(x)
    n = x.shape[0]
    if not 2 <= k < n:
        raise ValueError(f"need 2 <= k < n, got k={k}, n={n}")
    nbrs = _neighbours(x, k)
    iu, ju = np.triu_indices(k, 1)
    scores = np.zeros(n)
    for i in range(n):
        u = x[nbrs[i]] - x[i]
        sq = np.einsum("ij,ij->i", u, u)
        gram = u @ u.T
        ok = (sq[iu] > 0) & (sq[ju] > 0)
        if not ok.any():
            continue
        terms = gram[iu[ok], ju[ok]] / (sq[iu[ok]] * sq[ju[ok]])
        scores[i] = -terms.var()
    return scores


# --- dispatch --------------------------------------------------------------

def effective_params(cfg: PipelineConfig, n: int) -> dict:
    """Grid values clipped to what ``n`` rows allow (``k < n``,
    ``max_samples <= n``)."""
    p = dict(cfg.params)
    if cfg.detector in ("knn", "abod"):
        low = 2 if cfg.detector == "abod" else 1
        if n <= low:
            raise ValueError(f"{cfg.detector} needs more than {low} rows")
        p["k"] = min(p["k"], n - 1)
    elif cfg.detector == "iforest":
        if n < 2:
            raise ValueError("iforest needs at least 2 rows")
        p["max_samples"] = min(p["max_samples"], n)
    return p


def fit_score(cfg: PipelineConfig, x) -> np.ndarray:
    """Fit the configured detector on ``x`` (no labels) and score ``x``."""
    x = _as_matrix(x)
    if cfg.standardize_input:
        x = standardize(x)
    p = effective_params(cfg, x.shape[0])
    if cfg.detector == "knn":
        return knn_score(x, p["k"], p["method"])
    if cfg.detector == "hbos":
        return hbos_score(x, p["n_bins"])
    if cfg.detector == "iforest":
        return iforest_score(x, p["n_estimators"], p["max_samples"])
    if cfg.detector == "loda":
        return loda_score(x, p["n_projections"], p["n_bins"])
    if cfg.detector == "abod":
        return abod_score(x, p["k"])
    raise ValueError(f"unknown detector {cfg.detector!r}")  # pragma: no cover
