"""Train the full network on a small synthetic dataset and plot the curves.

Uses a reduced epoch budget so the demo finishes in about a minute; the
acceptance suite runs the longer desk-scale configuration.  Output lands in
demos/out/run/.
"""

from pathlib import Path

import tongueage.data as D
import tongueage.trainer as T
from tongueage.viz import export_curves

out_dir = Path(__file__).parent / "out" / "run"

recs = D.synth_generate(120, seed=21, age_range=(5.0, 13.0))
samples = [D.Sample(r.frames[0], r.age_years, r.speaker_id) for r in recs]
dataset = D.split_dataset(samples, 0.8, seed=0)
baseline = D.mean_age_baseline(dataset.train, dataset.val)
print(f"{len(dataset.train)} train / {len(dataset.val)} val; "
      f"mean-age baseline MSE {baseline:.3f}")

config = T.TrainConfig(epochs=8, batch_size=32, seed=5)
model = T.build_model_for(config)
_, history = T.train(model, dataset, config, out_dir=out_dir)

for m in history:
    print(f"epoch {m.epoch:2d}: train MSE {m.train_mse:7.3f}  "
          f"val MSE {m.val_mse:7.3f}  val MAE {m.val_mae:5.2f}  "
          f"({m.wall_seconds:.1f}s)")

img, csv_path = export_curves(history, out_dir)
best = min(history, key=lambda m: m.val_mse)
print(f"best val MSE {best.val_mse:.3f} at epoch {best.epoch} "
      f"(baseline {baseline:.3f})")
print(f"curves: {img}\nmetrics: {csv_path}\ncheckpoints: {out_dir}/best.ckpt")
