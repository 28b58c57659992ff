# Base vs Topic vs TAMoE on held-out synthetic topics.
# The full run (5 seeds, 150 epochs) takes ~12 minutes on one core;
# pass a seed count and epoch count to shorten it, e.g. `python 05_zero_shot.py 1 60`.
import sys

from tamoe.harness.acceptance import dump, zero_shot_comparison

n_seeds = int(sys.argv[1]) if len(sys.argv) > 1 else 5
epochs = int(sys.argv[2]) if len(sys.argv) > 2 else 150
res = zero_shot_comparison(seeds=tuple(range(n_seeds)), max_epochs=epochs)
for fam in ("base", "topic", "tamoe"):
    r = res[fam]
    print(f"{fam:6s} unseen CIDEr-D {r['mean']:.3f} +- {r['stdev']:.3f}   per seed "
          + " ".join(f"{c:.2f}" for c in r["cider"]))
gain = (res["tamoe"]["mean"] - res["base"]["mean"]) / res["base"]["mean"]
print(f"TAMoE vs Base {100 * gain:+.1f}%   ({res['seconds'] / 60:.1f} min)")
dump(res, "zero_shot.json")
