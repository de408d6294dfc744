"""Export per-channel activation images for a frame pushed through a model.

Grayscale PGMs show raw feature maps; PPM heatmaps use the dark -> yellow
-> dark red colormap (lowest activations dark, highest dark red).  Reuses
the checkpoint from demo 05 when present, otherwise a fresh model.
Output lands in demos/out/activations/.
"""

from pathlib import Path

import tongueage.data as D
from tongueage.model import build_paper_model, load_checkpoint
from tongueage.viz import export_activation_images, extract_activations

out_dir = Path(__file__).parent / "out" / "activations"
ckpt = Path(__file__).parent / "out" / "run" / "best.ckpt"

if ckpt.is_file():
    model, manifest = load_checkpoint(ckpt)
    print(f"loaded {ckpt} (epoch {manifest['epoch']})")
else:
    model = build_paper_model(seed=0)
    print("no trained checkpoint found; using a fresh seeded model "
          "(run demo 05 first for trained features)")

frame = D.synth_generate(1, seed=33)[0].frames[0]
acts = extract_activations(model, frame, ["conv1", "conv2", "pool1", "pool2"])
for a in acts.activations:
    print(f"{a.name}: shape {a.values.shape}, range [{a.vmin:+.3f}, {a.vmax:+.3f}]")

files = export_activation_images(acts, out_dir)
print(f"wrote {len(files)} images to {out_dir}")
