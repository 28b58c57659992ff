"""Activity-disjoint train / val / seen-test / unseen-test splits."""

from __future__ import annotations

import logging

import numpy as np

from .data import DatasetManifest, Record

log = logging.getLogger(__name__)


class SplitError(ValueError):
    """A split would share activity labels across partitions."""


def build_split(manifest: DatasetManifest, train_labels, val_labels, unseen_labels,
                seen_ratio: float = 0.1, seed: int = 0) -> DatasetManifest:
    """Tag every record by its label's partition.

    A seeded ``seen_ratio`` of each training label's videos becomes the
    seen-test set. Records with labels in no list are an error.
    """
    tr, va, un = set(train_labels), set(val_labels), set(unseen_labels)
    for a, b, name in ((tr, va, "train/val"), (tr, un, "train/unseen"), (va, un, "val/unseen")):
        if a & b:
            raise SplitError(f"{name} label lists overlap: {sorted(a & b)}")
    present = {r.activity_label for r in manifest.records}
    for lab in sorted((tr | va | un) - present):
        log.warning("label %r has no videos", lab)
    stray = sorted(present - (tr | va | un))
    if stray:
        raise SplitError(f"labels not assigned to any split: {stray}")
    rng = np.random.default_rng(seed)
    out = []
    by_label = {}
    for r in manifest.records:
        by_label.setdefault(r.activity_label, []).append(r)
    for lab in sorted(by_label):
        recs = by_label[lab]
        if lab in tr:
            n_seen = int(round(seen_ratio * len(recs)))
            seen_idx = set(rng.permutation(len(recs))[:n_seen].tolist())
            tags = ["seen-test" if i in seen_idx else "train" for i in range(len(recs))]
        else:
            tags = ["val" if lab in va else "unseen-test"] * len(recs)
        for r, tag in zip(recs, tags):
            out.append(Record(r.video_id, r.activity_label, list(r.captions), r.feature_path, tag))
    order = {r.video_id: i for i, r in enumerate(manifest.records)}
    out.sort(key=lambda r: order[r.video_id])
    result = DatasetManifest(out, manifest.root)
    result.validate(check_files=False)
    return result
