"""Archive of per-dataset best pipelines and nearest-neighbor retrieval."""
from __future__ import annotations

import json
import math
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .space import Pipeline


class ArchiveError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class ArchiveEntry:
    id: str
    meta: tuple[float, ...]
    pipeline: Pipeline
    reward: float

    def __eq__(self, other):
        if not isinstance(other, ArchiveEntry):
            return NotImplemented
        return (self.id, self.meta, self.pipeline, self.reward) == (
            other.id, other.meta, other.pipeline, other.reward)

    def __hash__(self):
        return hash((self.id, self.meta, self.reward))


@dataclass(frozen=True, eq=False)
class Archive:
    feature_names: tuple[str, ...]
    entries: tuple[ArchiveEntry, ...] = ()
    _stats: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        d = len(self.feature_names)
        if len(set(self.feature_names)) != d:
            raise ArchiveError("feature names must be unique")
        seen = set()
        for e in self.entries:
            if len(e.meta) != d:
                raise ArchiveError(f"entry {e.id!r}: {len(e.meta)} meta-features, expected {d}")
            if not all(math.isfinite(v) for v in e.meta):
                raise ArchiveError(f"entry {e.id!r}: meta-features must be finite")
            if e.id in seen:
                raise ArchiveError(f"duplicate entry id {e.id!r}")
            seen.add(e.id)

    def __eq__(self, other):
        if not isinstance(other, Archive):
            return NotImplemented
        return self.feature_names == other.feature_names and self.entries == other.entries

    def __len__(self):
        return len(self.entries)

    def standardization(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Per-feature mean, population std and the mask of features with nonzero spread."""
        if "std" not in self._stats:
            M = np.array([e.meta for e in self.entries], dtype=np.float64).reshape(len(self), -1)
            mean = M.mean(axis=0) if len(self) else np.zeros(len(self.feature_names))
            std = M.std(axis=0) if len(self) else np.zeros(len(self.feature_names))
            self._stats["std"] = (mean, std, std > 0)
        return self._stats["std"]

    def without(self, dataset_id: str) -> "Archive":
        """Leave-one-out view: the archive minus ``dataset_id``."""
        return Archive(self.feature_names, tuple(e for e in self.entries if e.id != dataset_id))


def nearest_datasets(archive: Archive, z, k: int) -> list[ArchiveEntry]:
    """The ``k`` entries closest to ``z`` in standardized Euclidean distance (ties by id)."""
    if not len(archive):
        raise ArchiveError("archive is empty")
    if k < 1:
        raise ValueError("k must be >= 1")
    z = np.asarray(z, dtype=np.float64)
    if z.shape != (len(archive.feature_names),):
        raise ValueError(f"expected {len(archive.feature_names)} meta-features, got shape {z.shape}")
    mean, std, keep = archive.standardization()
    M = np.array([e.meta for e in archive.entries], dtype=np.float64)
    zs = (z[keep] - mean[keep]) / std[keep]
    Ms = (M[:, keep] - mean[keep]) / std[keep]
    dist = np.sqrt(((Ms - zs) ** 2).sum(axis=1))
    order = sorted(range(len(archive)), key=lambda i: (dist[i], archive.entries[i].id))
    return [archive.entries[i] for i in order[:k]]


def distances(archive: Archive, z) -> dict[str, float]:
    mean, std, keep = archive.standardization()
    z = np.asarray(z, dtype=np.float64)
    zs = (z[keep] - mean[keep]) / std[keep]
    return {e.id: float(np.linalg.norm((np.asarray(e.meta)[keep] - mean[keep]) / std[keep] - zs))
            for e in archive.entries}


def archive_to_dict(archive: Archive) -> dict:
    return {
        "feature_names": list(archive.feature_names),
        "entries": [{"id": e.id, "meta": list(e.meta), "pipeline": e.pipeline.to_dict(),
                     "reward": e.reward} for e in archive.entries],
    }


def archive_from_dict(doc) -> Archive:
    if not isinstance(doc, dict):
        raise ArchiveError("archive document must be a JSON object")
    extra = set(doc) - {"feature_names", "entries"}
    if extra:
        raise ArchiveError(f"unknown archive fields: {sorted(extra)}")
    names = doc.get("feature_names")
    if not isinstance(names, list) or not all(isinstance(n, str) for n in names):
        raise ArchiveError("feature_names: expected a list of strings")
    raw = doc.get("entries", [])
    if not isinstance(raw, list):
        raise ArchiveError("entries: expected a list")
    entries = []
    for i, item in enumerate(raw):
        where = f"entries[{i}]"
        if not isinstance(item, dict):
            raise ArchiveError(f"{where}: expected an object")
        missing = {"id", "meta", "pipeline", "reward"} - set(item)
        if missing:
            raise ArchiveError(f"{where}: missing fields {sorted(missing)}")
        extra = set(item) - {"id", "meta", "pipeline", "reward"}
        if extra:
            raise ArchiveError(f"{where}: unknown fields {sorted(extra)}")
        meta = item["meta"]
        if not isinstance(meta, list) or len(meta) != len(names):
            raise ArchiveError(f"{where}.meta: expected {len(names)} numbers")
        vals = []
        for j, v in enumerate(meta):
            if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
                raise ArchiveError(f"{where}.meta[{j}] ({names[j]}): not a finite number: {v!r}")
            vals.append(float(v))
        reward = item["reward"]
        if isinstance(reward, bool) or not isinstance(reward, (int, float)) or not math.isfinite(reward):
            raise ArchiveError(f"{where}.reward: not a finite number: {reward!r}")
        try:
            pipeline = Pipeline.from_dict(item["pipeline"])
        except (TypeError, ValueError, KeyError) as exc:
            raise ArchiveError(f"{where}.pipeline: {exc}") from None
        entries.append(ArchiveEntry(str(item["id"]), tuple(vals), pipeline, float(reward)))
    return Archive(tuple(names), tuple(entries))


def load_archive(path) -> Archive:
    text = Path(path).read_text()
    try:
        doc = json.loads(text)  # NaN/Infinity literals are caught per field below
    except json.JSONDecodeError as exc:
        raise ArchiveError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    try:
        return archive_from_dict(doc)
    except ArchiveError as exc:
        raise ArchiveError(f"{path}: {exc}") from None


def save_archive(archive: Archive, path) -> None:
    write_atomic(path, json.dumps(archive_to_dict(archive), indent=1, allow_nan=False) + "\n")


def write_atomic(path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        os.unlink(tmp)
        raise
