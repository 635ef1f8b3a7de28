"""The dataset transform: subsample, standardize, then FastICA.

The output of :func:`phi` is the uniform point cloud that the distance
solvers compare. Labels never enter the transform.
"""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import asdict, dataclass

import numpy as np

from .data import Dataset
from .ot import DiscreteMeasure

logger = logging.getLogger(__name__)

EIG_FLOOR = 1e-10


@dataclass(frozen=True)
class TransformConfig:
    max_rows: int = 2000
    ica_max_iter: int = 200
    ica_tol: float = 1e-4
    seed: int = 0

    def __post_init__(self):
        if self.max_rows < 2:
            raise ValueError("max_rows must be >= 2")
        if self.ica_max_iter < 1 or not self.ica_tol > 0:
            raise ValueError("need ica_max_iter >= 1 and ica_tol > 0")

    def fingerprint(self) -> str:
        """Short stable hash, stored next to every meta-entry."""
        blob = json.dumps(asdict(self), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


def standardize(x) -> np.ndarray:
    """Zero mean, unit (population) variance per column.

    Columns that are constant up to rounding map to zeros.
    """
    x = np.asarray(x, dtype=float)
    if x.size == 0:
        raise ValueError("cannot standardize an empty matrix")
    if x.ndim == 1:
        x = x[:, None]
    mean = x.mean(axis=0)
    sd = x.std(axis=0)
    flat = sd <= 1e-12 * np.maximum(1.0, np.abs(mean))
    out = (x - mean) / np.where(flat, 1.0, sd)
    out[:, flat] = 0.0
    return out


def subsample(x, max_rows: int, seed: int) -> np.ndarray:
    """Uniform sample of ``max_rows`` rows without replacement (in input
    order); the input itself when it already fits."""
    x = np.asarray(x)
    if max_rows < 2:
        raise ValueError("max_rows must be >= 2")
    if x.shape[0] <= max_rows:
        return x
    idx = np.random.default_rng(seed).choice(x.shape[0], max_rows, replace=False)
    return x[np.sort(idx)]


def whiten(x):
    """PCA whitening; directions with eigenvalue <= 1e-10 are dropped.

    Returns (z, k) with ``z = (x - mean) @ k`` and ``cov(z) = I``.
    """
    xc = x - x.mean(axis=0)
    cov = xc.T @ xc / x.shape[0]
    vals, vecs = np.linalg.eigh(cov)
    keep = vals > EIG_FLOOR
    if not keep.any():
        # no variance at all: a single zero coordinate
        return np.zeros((x.shape[0], 1)), np.zeros((x.shape[1], 1))
    # largest variance first, with a deterministic sign per direction
    vals, vecs = vals[keep][::-1], vecs[:, keep][:, ::-1]
    vecs = vecs * np.where(vecs[np.argmax(np.abs(vecs), axis=0),
                                np.arange(vecs.shape[1])] < 0, -1.0, 1.0)
    k = vecs / np.sqrt(vals)
    return xc @ k, k


def _sym_decorrelate(w):
    # W <- (W W^T)^{-1/2} W
    vals, vecs = np.linalg.eigh(w @ w.T)
    vals = np.maximum(vals, 1e-300)
    return (vecs / np.sqrt(vals)) @ vecs.T @ w


def fast_ica(x, cfg: TransformConfig = TransformConfig()):
    """Symmetric FastICA with the logcosh contrast.

    Parameters
    ----------
    x : array (n, d)
        Ideally standardized.
    cfg : TransformConfig

    Returns
    -------
    s : array (n, k)
        Estimated sources, ``k`` = number of retained whitened directions.
        When the iteration does not converge this is the whitened data.
    converged : bool
    """
    x = np.asarray(x, dtype=float)
    z, _ = whiten(x)
    n, k = z.shape
    if k == 1:
        return z, True
    rng = np.random.default_rng(cfg.seed)
    w = _sym_decorrelate(rng.normal(size=(k, k)))
    for _ in range(cfg.ica_max_iter):
        wx = z @ w.T
        gx = np.tanh(wx)
        g_prime = 1.0 - gx ** 2
        w_new = _sym_decorrelate(gx.T @ z / n - g_prime.mean(axis=0)[:, None] * w)
        change = np.max(np.abs(np.abs(np.einsum("ij,ij->i", w_new, w)) - 1.0))
        w = w_new
        if change < cfg.ica_tol:
            return z @ w.T, True
    logger.debug("fast_ica: no convergence in %d iterations; using whitened data",
                 cfg.ica_max_iter)
    return z, False


def phi(dataset: Dataset, cfg: TransformConfig = TransformConfig()) -> DiscreteMeasure:
    """Unsupervised transform of a dataset into a uniform point cloud."""
    x = dataset.features
    if x.shape[0] < 2:
        raise ValueError("phi needs at least 2 rows")
    x = subsample(x, cfg.max_rows, cfg.seed)
    s, _ = fast_ica(standardize(x), cfg)
    return DiscreteMeasure.uniform(s)
