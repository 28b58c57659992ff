# TF-IDF topic embeddings on a generated dataset: which words each activity's
# documents single out, and how close held-out topics sit to training ones.
import tempfile

import numpy as np

from tamoe.harness.acceptance import DESK_SPEC
from tamoe.harness.experiment import ExperimentConfig, prepare, topic_report
from tamoe.harness.synthetic import SyntheticSpec, gen_synthetic

root = tempfile.mkdtemp()
gen_synthetic(SyntheticSpec(seed=0, **DESK_SPEC), root)
data = prepare(ExperimentConfig(dataset=root, output=root + "/out"))

for label, words in topic_report(data, k=5).items():
    print(f"{label:28s} {' '.join(words)}")

train = sorted({s.label for s in data.splits["train"]})
unseen = sorted({s.label for s in data.splits["unseen-test"]})
T = np.array([data.topics[y] for y in train])
for y in unseen:
    u = data.topics[y]
    sims = T @ u / (np.linalg.norm(T, axis=1) * np.linalg.norm(u))
    i = int(sims.argmax())
    print(f"held-out {y!r}: nearest training topic {train[i]!r} (cos {sims[i]:.3f})")
