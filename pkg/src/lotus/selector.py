"""Zero-shot pipeline recommendation: reuse the pipeline tuned on the
stored dataset nearest to the new one under low-rank GW."""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

from .data import Dataset
from .detectors import PipelineConfig
from .meta_store import MetaStore, get_pipeline, load_store
from .ot import SolverConfig, gw_lowrank
from .transform import TransformConfig, phi

logger = logging.getLogger(__name__)


class SelectionError(Exception):
    pass


@dataclass
class SelectionReport:
    """Outcome of one selection, with everything needed to audit it.

    ``distances`` holds the finite distances; entries whose distance could
    not be computed are listed in ``failed`` (id -> message) and count as
    infinitely far.
    """

    chosen_id: str
    pipeline: PipelineConfig
    distances: dict
    excluded: list
    transform_config: TransformConfig
    solver_config: SolverConfig
    failed: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"chosen_id": self.chosen_id, "pipeline": self.pipeline.to_dict(),
                "distances": dict(self.distances), "excluded": list(self.excluded),
                "failed": dict(self.failed),
                "configs": {"transform": asdict(self.transform_config),
                            "solver": asdict(self.solver_config)}}


def argmin_id(distances: dict) -> str:
    """Id with the smallest distance; ties go to the lexicographically
    smallest id."""
    return min(distances, key=lambda k: (distances[k], k))


def lotus_select(d_new: Dataset, store, tcfg: TransformConfig = TransformConfig(),
                 scfg: SolverConfig = SolverConfig(), exclude=(), threads: int = 1,
                 measure_cache=None) -> SelectionReport:
    """Recommend the pipeline of the stored dataset closest to ``d_new``.

    Parameters
    ----------
    d_new : Dataset
        Labels, if any, are ignored.
    store : MetaStore or path
    tcfg, scfg : transform and solver settings, used for every distance.
    exclude : ids left out of the search (each must exist in the store).
    threads : workers for the per-entry distances.
    measure_cache : dict, optional
        id -> transformed stored dataset, filled on demand; lets repeated
        selections against one store skip the transform.

    Raises
    ------
    SelectionError
        Nothing left after exclusion, or every distance failed.
    """
    if not isinstance(store, MetaStore):
        store = load_store(Path(store))
    excluded = list(dict.fromkeys(exclude))
    unknown = [i for i in excluded if i not in store.ids]
    if unknown:
        raise SelectionError(f"cannot exclude unknown ids {unknown}")
    candidates = [i for i in store.ids if i not in excluded]
    if not candidates:
        raise SelectionError("empty effective store")
    query = phi(d_new, tcfg)
    cache = measure_cache if measure_cache is not None else {}

    def distance(entry_id):
        try:
            if entry_id not in cache:
                cache[entry_id] = phi(store.load_dataset(entry_id), tcfg)
            cost = gw_lowrank(query, cache[entry_id], scfg).cost
            if not math.isfinite(cost):
                raise FloatingPointError(f"non-finite distance {cost}")
            return entry_id, cost, None
        except Exception as exc:  # one bad entry must not stop the selection
            logger.warning("distance to %s failed: %s", entry_id, exc)
            return entry_id, math.inf, f"{type(exc).__name__}: {exc}"

    if threads > 1 and len(candidates) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(distance, candidates))
    else:
        results = [distance(i) for i in candidates]
    distances = {i: d for i, d, err in results if err is None}
    failed = {i: err for i, _, err in results if err is not None}
    if not distances:
        raise SelectionError("every distance computation failed: "
                             + "; ".join(f"{k}: {v}" for k, v in failed.items()))
    chosen = argmin_id(distances)
    return SelectionReport(chosen, get_pipeline(store, chosen), distances, excluded,
                           tcfg, scfg, failed)
