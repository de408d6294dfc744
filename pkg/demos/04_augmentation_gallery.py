"""Export a grid of augmented variants of one synthetic frame.

Shows the two training-time augmentations (random rotation, additive
Gaussian noise) at the parameter values used by the ablation table.
Output lands in demos/out/augmented/.
"""

from pathlib import Path

import numpy as np

import tongueage.data as D
from tongueage.augment import AugmentConfig, random_augment, rotate
from tongueage.viz import to_grayscale, write_pgm

out_dir = Path(__file__).parent / "out" / "augmented"
out_dir.mkdir(parents=True, exist_ok=True)

frame = D.synth_generate(1, seed=8)[0].frames[0]
write_pgm(out_dir / "original.pgm", to_grayscale(frame[:, :, 0]))

for deg in (5, 10, 15, 20):
    rot = rotate(frame, float(deg))
    write_pgm(out_dir / f"rotated_{deg}deg.pgm", to_grayscale(rot[:, :, 0]))

rng = np.random.default_rng(1)
for sigma in (0.01, 0.1, 0.2, 0.5):
    noisy = random_augment(frame, AugmentConfig("gaussian_noise", sigma=sigma), rng)
    write_pgm(out_dir / f"noise_{sigma}.pgm", to_grayscale(noisy[:, :, 0]))

back = rotate(rotate(frame, 5.0), -5.0)
interior = np.abs(back - frame)[24:-24, 24:-24, :]
print(f"rotate(+5) then rotate(-5): max interior deviation {interior.max():.4f}")
print(f"wrote {len(list(out_dir.glob('*.pgm')))} images to {out_dir}")
