"""
Training the three PatchTST variants on one grid cell
=====================================================

Windows of P=20 past values predict the next H=8 values of the clean sine.
The first 80% of windows train the model and the rest are held out.
"""

import time

from compactformer import bench, models
from compactformer.signals import benchmark_series, window

series = benchmark_series("sine", noisy=False, seed=0).values
train_ds, test_ds = bench.split(window(series, 20, 8))
print(f"{train_ds.N} training windows, {test_ds.N} held-out windows")

for variant in models.VARIANTS:
    model = models.build(models.ModelConfig("patchtst", variant, 20, 8), seed=0)
    t0 = time.perf_counter()
    run = bench.train(model, train_ds, epochs=300, lr=1e-3, batch_size=32, seed=0)
    rmse, mae = bench.evaluate(model, test_ds)
    print(f"{variant:8s} {model.num_parameters():6d} params  "
          f"train loss {run.loss_curve[0]:.4f} -> {run.loss_curve[-1]:.6f}  "
          f"held-out RMSE {rmse:.4f}  MAE {mae:.4f}  ({time.perf_counter() - t0:.1f}s)")
