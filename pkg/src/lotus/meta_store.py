"""On-disk registry of meta-datasets and the pipelines tuned on them.

Layout::

    store_dir/
        index.json            {"version": 1, "entries": [...]}
        datasets/<id>.csv     raw features plus the "label" column
        pipelines/<id>.json   canonical pipeline JSON

Every file is written to a temporary name and renamed into place, and the
index is replaced last, so an interrupted add never leaves the index
pointing at missing files.
"""

from __future__ import annotations

import json
import os
import re
import tempfile
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

from .data import Dataset, read_csv, write_csv
from .detectors import PipelineConfig
from .transform import TransformConfig

INDEX = "index.json"
VERSION = 1
ID_PATTERN = re.compile(r"^[A-Za-z0-9][A-Za-z0-9._-]{0,127}$")


class StoreError(Exception):
    """Missing, corrupt or inconsistent store content."""


@dataclass(frozen=True)
class MetaEntry:
    id: str
    dataset_path: str
    pipeline_path: str
    pipeline: PipelineConfig
    meta_auc: float
    created_at: str
    transform_fingerprint: str

    def index_record(self) -> dict:
        return {"id": self.id, "dataset_path": self.dataset_path,
                "pipeline_path": self.pipeline_path, "meta_auc": self.meta_auc,
                "created_at": self.created_at,
                "transform_fingerprint": self.transform_fingerprint}


@dataclass
class MetaStore:
    root: Path
    entries: list = field(default_factory=list)

    @property
    def ids(self) -> list:
        return [e.id for e in self.entries]

    def entry(self, entry_id: str) -> MetaEntry:
        for e in self.entries:
            if e.id == entry_id:
                return e
        raise KeyError(f"no entry {entry_id!r} in store {self.root}")

    def load_dataset(self, entry_id: str) -> Dataset:
        e = self.entry(entry_id)
        return read_csv(self.root / e.dataset_path, name=e.id)

    def __len__(self):
        return len(self.entries)


def _atomic_write(path: Path, text: str):
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _atomic_csv(path: Path, dataset: Dataset):
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    os.close(fd)
    try:
        write_csv(dataset, tmp)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _read_index(root: Path) -> dict:
    path = root / INDEX
    if not path.is_file():
        raise StoreError(f"{path}: missing index")
    try:
        index = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise StoreError(f"{path}: unreadable index ({exc})") from exc
    if not isinstance(index, dict) or index.get("version") != VERSION \
            or not isinstance(index.get("entries"), list):
        raise StoreError(f"{path}: expected {{'version': {VERSION}, 'entries': [...]}}")
    return index


def _write_index(root: Path, records: list):
    _atomic_write(root / INDEX, json.dumps({"version": VERSION, "entries": records},
                                           indent=2, sort_keys=True) + "\n")


def init_store(store_dir) -> Path:
    """Create an empty store (no-op on an existing one)."""
    root = Path(store_dir)
    (root / "datasets").mkdir(parents=True, exist_ok=True)
    (root / "pipelines").mkdir(parents=True, exist_ok=True)
    if not (root / INDEX).exists():
        _write_index(root, [])
    return root


def add_entry(store_dir, dataset: Dataset, pipeline: PipelineConfig, meta_auc: float,
              entry_id: str, transform_fingerprint: str = None) -> MetaEntry:
    """Persist one (dataset, tuned pipeline, AUC) triple under ``entry_id``.

    Raises
    ------
    ValueError
        Bad id, duplicate id, AUC outside [0, 1] or an unlabeled dataset.
    """
    if not isinstance(entry_id, str) or not ID_PATTERN.match(entry_id):
        raise ValueError(f"invalid id {entry_id!r}: use letters, digits, '.', '_', '-'")
    if not 0.0 <= meta_auc <= 1.0:
        raise ValueError(f"meta_auc must lie in [0, 1], got {meta_auc}")
    if dataset.labels is None:
        raise ValueError("meta-datasets must carry labels")
    root = init_store(store_dir)
    index = _read_index(root)
    if any(r.get("id") == entry_id for r in index["entries"]):
        raise ValueError(f"duplicate id {entry_id!r} in store {root}")
    if transform_fingerprint is None:
        transform_fingerprint = TransformConfig().fingerprint()
    entry = MetaEntry(
        id=entry_id,
        dataset_path=f"datasets/{entry_id}.csv",
        pipeline_path=f"pipelines/{entry_id}.json",
        pipeline=pipeline,
        meta_auc=float(meta_auc),
        created_at=datetime.now(timezone.utc).isoformat(timespec="seconds"),
        transform_fingerprint=transform_fingerprint,
    )
    # data files first, index last: a crash leaves at most unreferenced files
    _atomic_csv(root / entry.dataset_path, dataset)
    _atomic_write(root / entry.pipeline_path, pipeline.to_json())
    _write_index(root, index["entries"] + [entry.index_record()])
    return entry


def _load_entry(root: Path, rec) -> MetaEntry:
    keys = ("id", "dataset_path", "pipeline_path", "meta_auc", "created_at",
            "transform_fingerprint")
    if not isinstance(rec, dict) or any(k not in rec for k in keys):
        raise StoreError(f"malformed index record {rec!r}")
    if not ID_PATTERN.match(str(rec["id"])):
        raise StoreError(f"invalid id {rec['id']!r}")
    auc = rec["meta_auc"]
    if not isinstance(auc, (int, float)) or not 0.0 <= auc <= 1.0:
        raise StoreError(f"{rec['id']}: meta_auc {auc!r} outside [0, 1]")
    data_file = root / rec["dataset_path"]
    pipe_file = root / rec["pipeline_path"]
    for f in (data_file, pipe_file):
        if not f.is_file():
            raise StoreError(f"{rec['id']}: missing file {f}")
    try:
        pipeline = PipelineConfig.from_json(pipe_file.read_text())
    except (ValueError, KeyError, TypeError) as exc:
        raise StoreError(f"{rec['id']}: bad pipeline ({exc})") from exc
    try:
        read_csv(data_file)
    except ValueError as exc:
        raise StoreError(f"{rec['id']}: bad dataset ({exc})") from exc
    return MetaEntry(rec["id"], rec["dataset_path"], rec["pipeline_path"], pipeline,
                     float(auc), rec["created_at"], rec["transform_fingerprint"])


def load_store(store_dir) -> MetaStore:
    """Load and validate a store; entries keep their index order.

    Raises
    ------
    StoreError
        Missing or corrupt index, or invalid entries (all of them are
        reported in one message).
    """
    root = Path(store_dir)
    index = _read_index(root)
    entries, problems, seen = [], [], set()
    for rec in index["entries"]:
        try:
            e = _load_entry(root, rec)
        except StoreError as exc:
            problems.append(str(exc))
            continue
        if e.id in seen:
            problems.append(f"{e.id}: duplicate id")
            continue
        seen.add(e.id)
        entries.append(e)
    if problems:
        raise StoreError(f"{root}: " + "; ".join(problems))
    return MetaStore(root, entries)


def get_pipeline(store: MetaStore, entry_id: str) -> PipelineConfig:
    """The pipeline stored under ``entry_id`` (KeyError when unknown)."""
    return store.entry(entry_id).pipeline
