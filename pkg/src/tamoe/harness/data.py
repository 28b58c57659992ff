"""Feature files and dataset manifests."""

from __future__ import annotations

import json
import os
import struct
from dataclasses import asdict, dataclass, field

import numpy as np

FEATURE_MAGIC = b"TAMF"
SPLITS = ("train", "val", "seen-test", "unseen-test")


class DataError(ValueError):
    """Malformed or inconsistent dataset input."""


def write_features(path, features):
    """``TAMF`` | u32 m | u32 d_f | m*d_f float32 LE, row-major."""
    arr = np.ascontiguousarray(features, dtype="<f4")
    if arr.ndim != 2:
        raise DataError(f"features must be 2-D, got shape {arr.shape}")
    with open(path, "wb") as f:
        f.write(FEATURE_MAGIC + struct.pack("<II", *arr.shape) + arr.tobytes())


def read_features(path) -> np.ndarray:
    with open(path, "rb") as f:
        data = f.read()
    if data[:4] != FEATURE_MAGIC:
        raise DataError(f"{path}: bad magic {data[:4]!r}")
    if len(data) < 12:
        raise DataError(f"{path}: truncated header")
    m, d = struct.unpack_from("<II", data, 4)
    if len(data) - 4 != 8 + 4 * m * d:
        raise DataError(f"{path}: payload is {len(data) - 12} bytes, expected {4 * m * d}")
    return np.frombuffer(data, dtype="<f4", offset=12).reshape(m, d).astype(np.float64)


def subsample_features(features, max_count: int):
    """Uniform-stride selection of at most ``max_count`` rows, order preserved."""
    m = features.shape[0]
    if m <= max_count:
        return features
    idx = (np.arange(max_count) * m) // max_count
    return features[idx]


@dataclass
class Record:
    video_id: str
    activity_label: str
    captions: list
    feature_path: str
    split: str = ""


@dataclass
class DatasetManifest:
    records: list = field(default_factory=list)
    root: str = "."

    def by_split(self, split):
        return [r for r in self.records if r.split == split]

    def labels(self, split):
        return sorted({r.activity_label for r in self.records if r.split == split})

    def feature_path(self, rec: Record):
        return rec.feature_path if os.path.isabs(rec.feature_path) else os.path.join(self.root, rec.feature_path)

    def validate(self, check_files: bool = True):
        """Check split disjointness and feature files; raises :class:`DataError`."""
        from .split import SplitError

        tr, va, un = (set(self.labels(s)) for s in ("train", "val", "unseen-test"))
        for a, b, name in ((tr, va, "train/val"), (tr, un, "train/unseen-test"),
                           (va, un, "val/unseen-test")):
            if a & b:
                raise SplitError(f"{name} share labels: {sorted(a & b)}")
        seen = set(self.labels("seen-test"))
        if not seen <= tr:
            raise SplitError(f"seen-test labels outside training: {sorted(seen - tr)}")
        for r in self.records:
            if r.split not in SPLITS:
                raise DataError(f"{r.video_id}: unknown split {r.split!r}")
            if not r.captions:
                raise DataError(f"{r.video_id}: no reference captions")
            if check_files:
                path = self.feature_path(r)
                if not os.path.isfile(path):
                    raise DataError(f"{r.video_id}: missing feature file {path}")
                read_features(path)

    @classmethod
    def read(cls, path):
        recs = []
        with open(path, encoding="utf-8") as f:
            for lineno, line in enumerate(f, 1):
                if not line.strip():
                    continue
                try:
                    recs.append(Record(**json.loads(line)))
                except (TypeError, json.JSONDecodeError) as exc:
                    raise DataError(f"{path}:{lineno}: {exc}") from None
        return cls(recs, os.path.dirname(os.path.abspath(path)))

    def write(self, path):
        with open(path, "w", encoding="utf-8") as f:
            for r in self.records:
                f.write(json.dumps(asdict(r)) + "\n")
