# Can the Base model fit ten captions? A quick sanity run of the whole
# training loop: full-batch Adadelta, no dropout.
from tamoe.harness.acceptance import memorization_run

res = memorization_run(epochs=300)
print(f"per-token loss {res['first_loss']:.3f} -> {res['final_loss']:.4f} "
      f"in {res['steps']} steps ({res['seconds']:.1f}s)")
print(f"greedy reproduces {res['reproduced']}/{res['n']} captions")
