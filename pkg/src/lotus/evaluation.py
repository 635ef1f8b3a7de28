"""Benchmark harness: leave-one-out evaluation, score tables, average
ranks and the Bayesian signed-rank test with a region of practical
equivalence (ROPE)."""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.stats import rankdata

from .data import Dataset, generate_synthetic
from .detectors import DETECTORS, PipelineConfig, fit_score
from .meta_store import MetaStore, load_store
from .metrics import roc_auc
from .ot import SolverConfig
from .selector import lotus_select
from .transform import TransformConfig

logger = logging.getLogger(__name__)

__all__ = ["Dataset", "generate_synthetic", "roc_auc", "ScoreTable", "RopeResult",
           "default_baselines", "loo_evaluate", "average_rank", "rope_test",
           "LOTUS_COLUMN"]

LOTUS_COLUMN = "LOTUS"


@dataclass
class ScoreTable:
    """AUC per dataset (rows) and method (columns); NaN marks a missing cell."""

    datasets: list
    methods: list
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float).reshape(
            len(self.datasets), len(self.methods))
        if len(set(self.datasets)) != len(self.datasets):
            raise ValueError("duplicate dataset names")
        if len(set(self.methods)) != len(self.methods):
            raise ValueError("duplicate method names")

    def column(self, method) -> np.ndarray:
        return self.values[:, self.methods.index(method)]

    def complete(self, methods=None):
        """Sub-table of rows with every cell of ``methods`` present, and the
        names of the dropped rows."""
        methods = list(self.methods if methods is None else methods)
        for m in methods:
            if m not in self.methods:
                raise KeyError(f"no column {m!r}")
        cols = [self.methods.index(m) for m in methods]
        keep = ~np.isnan(self.values[:, cols]).any(axis=1)
        dropped = [d for d, k in zip(self.datasets, keep) if not k]
        return (ScoreTable([d for d, k in zip(self.datasets, keep) if k], methods,
                           self.values[np.ix_(keep, cols)]), dropped)

    def to_csv(self, path):
        """First column "dataset", then one column per method, 6 decimals;
        missing cells are empty."""
        with Path(path).open("w", newline="") as fh:
            out = csv.writer(fh, lineterminator="\n")
            out.writerow(["dataset"] + list(self.methods))
            for name, row in zip(self.datasets, self.values):
                out.writerow([name] + ["" if np.isnan(v) else f"{v:.6f}" for v in row])

    @classmethod
    def from_csv(cls, path) -> "ScoreTable":
        with Path(path).open(newline="") as fh:
            rows = [r for r in csv.reader(fh) if r]
        if not rows or rows[0][0] != "dataset" or len(rows[0]) < 2:
            raise ValueError(f"{path}: expected a 'dataset' column and methods")
        methods = rows[0][1:]
        names, values = [], []
        for r in rows[1:]:
            if len(r) != len(rows[0]):
                raise ValueError(f"{path}: ragged row {r[0]!r}")
            names.append(r[0])
            values.append([float(c) if c.strip() else np.nan for c in r[1:]])
        return cls(names, methods, np.array(values, dtype=float).reshape(len(names),
                                                                         len(methods)))


def default_baselines() -> list:
    return [PipelineConfig.default(d) for d in DETECTORS]


def _baseline_names(baselines):
    names = []
    for cfg in baselines:
        name = cfg.detector
        if name in names or sum(c.detector == cfg.detector for c in baselines) > 1:
            name = f"{cfg.detector}:{cfg.to_json()}"
        names.append(name)
    return names


def _safe_auc(cfg, ds):
    try:
        return roc_auc(fit_score(cfg, ds.features), ds.labels)
    except Exception as exc:
        logger.warning("%s on %s failed: %s", cfg.to_json(), ds.name, exc)
        return np.nan


def loo_evaluate(store, tcfg: TransformConfig = TransformConfig(),
                 scfg: SolverConfig = SolverConfig(), baselines=None,
                 threads: int = 1):
    """Leave-one-out evaluation over a meta-store.

    Each stored dataset in turn is the query: it is excluded from the
    store, the selector picks a pipeline from the others, and that pipeline
    is fitted on the query's features and scored with its labels. Each
    baseline pipeline is scored the same way.

    Returns
    -------
    table : ScoreTable
        Column "LOTUS" first, then one column per baseline; failed cells
        are NaN.
    reports : dict
        id -> SelectionReport (None when the selection itself failed).
    """
    if not isinstance(store, MetaStore):
        store = load_store(store)
    if len(store) < 2:
        raise ValueError("leave-one-out needs at least 2 stored datasets")
    baselines = default_baselines() if baselines is None else list(baselines)
    names = _baseline_names(baselines)
    datasets = {i: store.load_dataset(i) for i in store.ids}
    missing = [i for i, d in datasets.items() if d.labels is None]
    if missing:
        raise ValueError(f"unlabeled stored datasets: {missing}")
    cache = {}
    rows, reports = [], {}
    for entry_id in store.ids:
        ds = datasets[entry_id]
        try:
            report = lotus_select(ds, store, tcfg, scfg, exclude=[entry_id],
                                  threads=threads, measure_cache=cache)
            lotus = _safe_auc(report.pipeline, ds)
        except Exception as exc:
            logger.warning("selection for %s failed: %s", entry_id, exc)
            report, lotus = None, np.nan
        reports[entry_id] = report
        rows.append([lotus] + [_safe_auc(cfg, ds) for cfg in baselines])
    return ScoreTable(list(store.ids), [LOTUS_COLUMN] + names, np.array(rows)), reports


def average_rank(table: ScoreTable) -> dict:
    """Mean per-row rank of every method (1 = highest AUC, ties share the
    midrank).

    Raises
    ------
    ValueError
        On missing cells; drop them first with :meth:`ScoreTable.complete`.
    """
    if table.values.size == 0:
        raise ValueError("empty score table")
    if np.isnan(table.values).any():
        raise ValueError("score table has missing cells")
    ranks = np.apply_along_axis(rankdata, 1, -table.values)
    return {m: float(r) for m, r in zip(table.methods, ranks.mean(axis=0))}


@dataclass
class RopeResult:
    """Posterior probabilities that ``a`` is better (``p_left``),
    practically equivalent, or worse (``p_right``)."""

    p_left: float
    p_rope: float
    p_right: float
    rope: float
    n_samples: int
    seed: int
    # per-sample region masses, columns (left, rope, right); only on request
    masses: np.ndarray = field(default=None, repr=False)

    def to_dict(self) -> dict:
        return {"p_left": self.p_left, "p_rope": self.p_rope, "p_right": self.p_right,
                "rope": self.rope, "n_samples": self.n_samples, "seed": self.seed}


def rope_test(a, b, rope: float = 0.01, n_samples: int = 50000, seed: int = 0,
              keep_masses: bool = False, chunk: int = 5000) -> RopeResult:
    """Bayesian signed-rank test of ``a`` against ``b``.

    The differences ``z = a - b`` get one extra observation at 0 (the
    prior). Each Monte Carlo draw puts flat-Dirichlet weights ``w`` on the
    augmented differences and splits the pair mass ``w_i w_j`` (``i <= j``)
    by where ``(z_i + z_j) / 2`` falls: above ``rope`` ("left", ``a``
    better), within ``[-rope, rope]``, or below ``-rope``. The draw is
    assigned to the region with the most mass; ties go to the ROPE, which
    keeps the test exactly antisymmetric under swapping ``a`` and ``b``.
    """
    a = np.asarray(a, dtype=float).ravel()
    b = np.asarray(b, dtype=float).ravel()
    if a.shape != b.shape:
        raise ValueError(f"length mismatch: {a.size} vs {b.size}")
    if a.size < 2:
        raise ValueError("need at least 2 paired scores")
    if not np.all(np.isfinite(a)) or not np.all(np.isfinite(b)):
        raise ValueError("scores contain NaN or Inf; drop incomplete rows first")
    if not rope > 0:
        raise ValueError("rope must be > 0")
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    z = np.r_[0.0, a - b]
    mid = (z[:, None] + z[None, :]) / 2.0
    upper = np.triu(np.ones_like(mid, dtype=bool))
    regions = [upper & (mid > rope), upper & (mid >= -rope) & (mid <= rope),
               upper & (mid < -rope)]
    rng = np.random.default_rng(seed)
    counts = np.zeros(3, dtype=np.int64)
    kept = []
    done = 0
    while done < n_samples:
        size = min(chunk, n_samples - done)
        w = rng.dirichlet(np.ones(z.size), size=size)
        mass = np.column_stack([np.einsum("si,ij,sj->s", w, r, w) for r in regions])
        left, mid_mass, right = mass.T
        pick = np.where((left > mid_mass) & (left > right), 0,
                        np.where((right > mid_mass) & (right > left), 2, 1))
        counts += np.bincount(pick, minlength=3)
        if keep_masses:
            kept.append(mass)
        done += size
    p = counts / n_samples
    return RopeResult(float(p[0]), float(p[1]), float(p[2]), rope, n_samples, seed,
                      np.vstack(kept) if keep_masses else None)
