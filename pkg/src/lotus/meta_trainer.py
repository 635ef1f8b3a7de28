"""Label-aware search for the best detector pipeline on one dataset.

Detectors are fitted without labels; labels only score the result (AUC).
There are no folds: fit and evaluation use the full dataset.
"""

from __future__ import annotations

import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .detectors import DETECTORS, SEARCH_SPACE, PipelineConfig, fit_score
from .metrics import roc_auc

logger = logging.getLogger(__name__)

POPULATION = 12
ELITE = 4
FRESH = 2
FAILED_AUC = 0.0


@dataclass(frozen=True)
class SearchBudget:
    """Evaluation budget; the wall-clock cap (seconds) is optional and
    makes the outcome timing-dependent."""

    max_evaluations: int = 60
    wall_clock_cap_seconds: Optional[float] = None
    seed: int = 0

    def __post_init__(self):
        if self.max_evaluations < 1:
            raise ValueError("max_evaluations must be >= 1")
        cap = self.wall_clock_cap_seconds
        if cap is not None and not cap >= 0:
            raise ValueError("wall_clock_cap_seconds must be >= 0")


@dataclass
class SearchResult:
    best: PipelineConfig
    best_auc: float
    # (config, auc) in evaluation order
    history: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"best": self.best.to_dict(), "best_auc": self.best_auc,
                "history": [{"pipeline": c.to_dict(), "auc": a}
                            for c, a in self.history]}


def _check_labels(y):
    y = np.asarray(y)
    if not np.all(np.isin(y, (0, 1))) or np.unique(y).size != 2:
        raise ValueError("labels must be 0/1 with both classes present")
    return y


def evaluate_config(cfg: PipelineConfig, x, y) -> float:
    """AUC of ``cfg`` on ``(x, y)``; a failing detector scores 0."""
    y = _check_labels(y)
    try:
        scores = fit_score(cfg, x)
        return roc_auc(scores, y)
    except Exception as exc:  # sentinel, keeps the search alive
        logger.warning("evaluation of %s failed: %s", cfg.to_json(), exc)
        return FAILED_AUC


def rank_key(item):
    """Sort key for (config, auc): AUC descending, then serialized config."""
    cfg, auc = item
    return (-auc, cfg.to_json())


def random_config(rng) -> PipelineConfig:
    det = DETECTORS[rng.integers(len(DETECTORS))]
    params = {k: v[rng.integers(len(v))] for k, v in SEARCH_SPACE[det].items()}
    return PipelineConfig(det, _plain(params), bool(rng.integers(2)))


def mutate(cfg: PipelineConfig, rng) -> PipelineConfig:
    """Redraw one parameter (or the scaling flag) uniformly from its grid."""
    names = sorted(SEARCH_SPACE[cfg.detector]) + ["standardize_input"]
    name = names[rng.integers(len(names))]
    if name == "standardize_input":
        return PipelineConfig(cfg.detector, dict(cfg.params), bool(rng.integers(2)))
    grid = SEARCH_SPACE[cfg.detector][name]
    params = dict(cfg.params)
    params[name] = grid[rng.integers(len(grid))]
    return PipelineConfig(cfg.detector, _plain(params), cfg.standardize_input)


def _plain(params):
    # numpy scalars would leak into the JSON otherwise
    return {k: (v.item() if hasattr(v, "item") else v) for k, v in params.items()}


def search(x, y, budget: SearchBudget = SearchBudget(), threads: int = 1) -> SearchResult:
    """Evolutionary search over detectors and their grids.

    A population of 12 random pipelines; each generation keeps the best 4
    and refills with 6 single-parameter mutants of them plus 2 fresh random
    pipelines. A pipeline is evaluated at most once, and only new
    evaluations count against ``budget.max_evaluations``. Evaluations of a
    generation may run on ``threads`` workers; results are reduced in a
    fixed order, so without a wall-clock cap the result is deterministic.

    Raises
    ------
    RuntimeError
        If the budget ends before a single evaluation.
    """
    x = np.asarray(x, dtype=float)
    y = _check_labels(y)
    rng = np.random.default_rng(budget.seed)
    cap = budget.wall_clock_cap_seconds
    start = time.monotonic()
    scored = {}
    history = []
    population = [random_config(rng) for _ in range(POPULATION)]
    # a generous guard in case the reachable space runs out of new configs
    for _ in range(100 * budget.max_evaluations):
        todo = []
        for cfg in population:
            if cfg not in scored and cfg not in todo:
                todo.append(cfg)
        todo = todo[: budget.max_evaluations - len(history)]
        if cap is not None and time.monotonic() - start >= cap:
            break
        if threads > 1 and len(todo) > 1:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                aucs = list(pool.map(lambda c: evaluate_config(c, x, y), todo))
        else:
            aucs = [evaluate_config(c, x, y) for c in todo]
        for cfg, auc in zip(todo, aucs):
            scored[cfg] = auc
            history.append((cfg, auc))
        if len(history) >= budget.max_evaluations:
            break
        ranked = sorted(((c, scored[c]) for c in set(population)), key=rank_key)
        elite = [c for c, _ in ranked[:ELITE]]
        children = [mutate(elite[rng.integers(len(elite))], rng)
                    for _ in range(POPULATION - ELITE - FRESH)]
        population = elite + children + [random_config(rng) for _ in range(FRESH)]
    if not history:
        raise RuntimeError("search budget exhausted before any evaluation completed")
    best, best_auc = min(history, key=rank_key)
    return SearchResult(best, best_auc, history)
