# Feature ablation (video / label embedding / TF-IDF embedding) and the
# expert count vs expert width grid, on one synthetic dataset.
from tamoe.harness.acceptance import ablation_runs, dump

res = ablation_runs(seed=0, log_path="ablation.jsonl")
print("features")
for name, r in res["features"].items():
    print(f"  {name:20s} {r['mean']:.3f}")
print("experts (widths divided by 8)")
for name, r in res["experts"].items():
    print(f"  {name:20s} {r['mean']:.3f}")
dump(res, "ablation.json")
