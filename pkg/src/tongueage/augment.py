"""On-the-fly training augmentation: random rotation and Gaussian noise.

Rotation happens on the raw scanline grid (the network consumes raw frames,
not fan-shape reconstructions), about the frame center, with bilinear
interpolation and zero fill outside the source frame.  Angles are drawn
uniformly from [-max_degrees, +max_degrees].

Noise is additive i.i.d. Gaussian per pixel in normalized [0, 1] units,
clamped back to [0, 1]; samples come from the seeded generator's
``normal`` (numpy's ziggurat), so fixed seeds reproduce batches exactly.

Both modes are bit-exact identities at their zero setting (angle 0, sigma
0), and outputs always stay inside [0, 1].  Augmentation never touches
validation data; the trainer enforces that.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError

AUGMENT_MODES = ("none", "rotation", "gaussian_noise")


@dataclass(frozen=True)
class AugmentConfig:
    mode: str = "none"
    max_degrees: float = 5.0
    sigma: float = 0.1

    def __post_init__(self):
        if self.mode not in AUGMENT_MODES:
            raise ConfigError(f"mode must be one of {AUGMENT_MODES}, got {self.mode!r}")
        if self.max_degrees < 0:
            raise ConfigError(f"max_degrees must be >= 0, got {self.max_degrees}")
        if self.sigma < 0:
            raise ConfigError(f"sigma must be >= 0, got {self.sigma}")

    def describe(self) -> str:
        if self.mode == "rotation":
            return f"rotation(max_degrees={self.max_degrees:g})"
        if self.mode == "gaussian_noise":
            return f"gaussian_noise(sigma={self.sigma:g})"
        return "none"


def rotate(frame: np.ndarray, angle_degrees: float) -> np.ndarray:
    """Rotate a frame about its center; same shape out, zero fill outside.

    Positive angles rotate the content counter-clockwise (with the row axis
    pointing down).  Angle 0 is a bit-exact identity.
    """
    if not math.isfinite(angle_degrees):
        raise ConfigError(f"angle must be finite, got {angle_degrees}")
    if angle_degrees == 0.0:
        return frame.copy()
    if frame.ndim == 2:
        return rotate(frame[:, :, None], angle_degrees)[:, :, 0]
    h, w, _ = frame.shape
    cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
    theta = math.radians(angle_degrees)
    c, s = math.cos(theta), math.sin(theta)
    yy, xx = np.meshgrid(
        np.arange(h, dtype=np.float64) - cy,
        np.arange(w, dtype=np.float64) - cx,
        indexing="ij",
    )
    # inverse map: where each output pixel samples the source
    src_y = c * yy - s * xx + cy
    src_x = s * yy + c * xx + cx

    y0 = np.floor(src_y).astype(np.int64)
    x0 = np.floor(src_x).astype(np.int64)
    fy = (src_y - y0)[:, :, None]
    fx = (src_x - x0)[:, :, None]

    def tap(ys, xs):
        inside = (ys >= 0) & (ys < h) & (xs >= 0) & (xs < w)
        vals = frame[np.clip(ys, 0, h - 1), np.clip(xs, 0, w - 1), :]
        return vals * inside[:, :, None]

    out = (
        tap(y0, x0) * (1 - fy) * (1 - fx)
        + tap(y0, x0 + 1) * (1 - fy) * fx
        + tap(y0 + 1, x0) * fy * (1 - fx)
        + tap(y0 + 1, x0 + 1) * fy * fx
    )
    return out.astype(frame.dtype)


def random_augment(
    frame: np.ndarray, config: AugmentConfig, rng: np.random.Generator
) -> np.ndarray:
    """Apply one randomly parameterized augmentation to a training frame."""
    if config.mode == "rotation":
        if config.max_degrees == 0.0:
            return frame
        angle = rng.uniform(-config.max_degrees, config.max_degrees)
        return np.clip(rotate(frame, angle), 0.0, 1.0)
    if config.mode == "gaussian_noise":
        if config.sigma == 0.0:
            return frame
        noisy = frame + rng.normal(0.0, config.sigma, size=frame.shape)
        return np.clip(noisy, 0.0, 1.0).astype(frame.dtype)
    return frame
