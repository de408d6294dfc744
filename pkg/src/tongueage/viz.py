"""Activation extraction and portable image export.

Images use headerless-simple binary formats so nothing beyond numpy is
needed: PGM (P5) for grayscale activations, PPM (P6) for heatmaps and the
training-curve plot.  Files are written deterministically: identical inputs
produce byte-identical images.

The heatmap colormap is a fixed 256-entry table interpolating
dark (0,0,0) -> yellow (255,255,0) -> dark red (139,0,0), i.e. the lowest
activations render dark, mid-range yellow, and the highest dark red.
Activations are min-max normalized per channel; a constant channel maps to
the lowest color.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from .errors import ConfigError
from .model import Model
from .trainer import EpochMetrics, write_metrics_csv

_YELLOW = np.array([255.0, 255.0, 0.0])
_DARK_RED = np.array([139.0, 0.0, 0.0])


def _build_colormap() -> np.ndarray:
    t = np.linspace(0.0, 1.0, 256)[:, None]
    low = (t / 0.5) * _YELLOW
    u = (t - 0.5) / 0.5
    high = (1.0 - u) * _YELLOW + u * _DARK_RED
    table = np.where(t <= 0.5, low, high)
    return np.round(table).astype(np.uint8)


HEAT_COLORMAP = _build_colormap()

TRAIN_COLOR = (200, 60, 50)
VAL_COLOR = (50, 80, 200)


@dataclass(frozen=True)
class Activation:
    name: str
    values: np.ndarray
    vmin: float
    vmax: float


@dataclass
class ActivationSet:
    activations: List[Activation]

    def names(self) -> List[str]:
        return [a.name for a in self.activations]

    def get(self, name: str) -> Activation:
        for a in self.activations:
            if a.name == name:
                return a
        raise LookupError(f"no activation named {name!r}; have {self.names()}")


def extract_activations(
    model: Model, frame: np.ndarray, layer_selector: Union[str, Sequence[str]] = "all"
) -> ActivationSet:
    """Inference-mode activations of the selected layers for one frame.

    ``layer_selector`` is "all", a comma-separated string, or a sequence of
    layer names.  The model is left untouched.
    """
    valid = model.layer_names()
    if layer_selector == "all":
        wanted = list(valid)
    elif isinstance(layer_selector, str):
        wanted = [s.strip() for s in layer_selector.split(",") if s.strip()]
    else:
        wanted = list(layer_selector)
    unknown = [w for w in wanted if w not in valid]
    if unknown:
        raise LookupError(f"unknown layer(s) {unknown}; valid names: {valid}")
    traced = model.forward_trace(frame, capture=wanted)
    acts = []
    for name in valid:  # preserve model order
        if name in traced:
            vals = traced[name]
            acts.append(
                Activation(name, vals, float(vals.min()), float(vals.max()))
            )
    return ActivationSet(acts)


# ---------------------------------------------------------------------------
# Image encoding
# ---------------------------------------------------------------------------

def render_heatmap(activation: np.ndarray) -> np.ndarray:
    """Min-max normalize one H x W channel and map through the heat table."""
    a = np.asarray(activation, dtype=np.float64)
    if a.ndim != 2:
        raise ValueError(f"heatmap input must be 2-D, got shape {a.shape}")
    if not np.isfinite(a).all():
        raise ValueError("heatmap input contains non-finite values")
    vmin, vmax = a.min(), a.max()
    if vmax > vmin:
        idx = np.round((a - vmin) / (vmax - vmin) * 255.0).astype(np.intp)
    else:
        idx = np.zeros(a.shape, dtype=np.intp)
    return HEAT_COLORMAP[idx]


def to_grayscale(activation: np.ndarray) -> np.ndarray:
    """Min-max normalize one H x W channel to uint8."""
    a = np.asarray(activation, dtype=np.float64)
    vmin, vmax = a.min(), a.max()
    if vmax > vmin:
        return np.round((a - vmin) / (vmax - vmin) * 255.0).astype(np.uint8)
    return np.zeros(a.shape, dtype=np.uint8)


def write_pgm(path, gray: np.ndarray) -> None:
    if gray.ndim != 2 or gray.dtype != np.uint8:
        raise ValueError(f"PGM wants a 2-D uint8 array, got {gray.dtype} {gray.shape}")
    h, w = gray.shape
    with open(path, "wb") as f:
        f.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        f.write(gray.tobytes())


def write_ppm(path, rgb: np.ndarray) -> None:
    if rgb.ndim != 3 or rgb.shape[2] != 3 or rgb.dtype != np.uint8:
        raise ValueError(f"PPM wants an HxWx3 uint8 array, got {rgb.dtype} {rgb.shape}")
    h, w, _ = rgb.shape
    with open(path, "wb") as f:
        f.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        f.write(rgb.tobytes())


def _read_netpbm(path, magic: bytes) -> np.ndarray:
    data = Path(path).read_bytes()
    fields: List[bytes] = []
    pos = 0
    while len(fields) < 4:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if data[pos : pos + 1] == b"#":
            while pos < len(data) and data[pos] != 0x0A:
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        fields.append(data[start:pos])
    if fields[0] != magic:
        raise ValueError(f"expected {magic!r} file, got {fields[0]!r}")
    w, h = int(fields[1]), int(fields[2])
    pos += 1  # single whitespace after maxval
    body = np.frombuffer(data, dtype=np.uint8, offset=pos)
    if magic == b"P5":
        return body[: w * h].reshape(h, w)
    return body[: w * h * 3].reshape(h, w, 3)


def read_pgm(path) -> np.ndarray:
    return _read_netpbm(path, b"P5")


def read_ppm(path) -> np.ndarray:
    return _read_netpbm(path, b"P6")


def export_activation_images(acts: ActivationSet, out_dir) -> List[Path]:
    """Write per-channel grayscale PGM + heatmap PPM for map-shaped layers.

    Flat (dense) activations have no spatial layout and are skipped.
    Filenames are ``<layer>_<channel>.pgm`` / ``.ppm``.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for act in acts.activations:
        if act.values.ndim != 3:
            continue
        for c in range(act.values.shape[2]):
            channel = act.values[:, :, c]
            pgm = out_dir / f"{act.name}_{c}.pgm"
            ppm = out_dir / f"{act.name}_{c}.ppm"
            write_pgm(pgm, to_grayscale(channel))
            write_ppm(ppm, render_heatmap(channel))
            written.extend([pgm, ppm])
    return written


# ---------------------------------------------------------------------------
# Training curves
# ---------------------------------------------------------------------------

_CANVAS_W, _CANVAS_H = 640, 480
_MARGIN_L, _MARGIN_R, _MARGIN_T, _MARGIN_B = 70, 20, 20, 50


def _draw_segment(canvas: np.ndarray, p0, q0, color) -> None:
    (y0, x0), (y1, x1) = p0, q0
    steps = int(max(abs(y1 - y0), abs(x1 - x0))) + 1
    ys = np.round(np.linspace(y0, y1, steps)).astype(int)
    xs = np.round(np.linspace(x0, x1, steps)).astype(int)
    canvas[ys, xs] = color


def export_curves(history: Sequence[EpochMetrics], out_dir) -> Tuple[Path, Path]:
    """Plot train/val MSE vs epoch as curves.ppm and rewrite the CSV.

    The plot area maps the series maximum to its top row and the minimum to
    its bottom row exactly.  Returns (image path, csv path).
    """
    if not history:
        raise ConfigError("export_curves needs a non-empty metrics history")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    csv_path = out_dir / "metrics.csv"
    write_metrics_csv(history, csv_path)

    canvas = np.full((_CANVAS_H, _CANVAS_W, 3), 255, dtype=np.uint8)
    x0, x1 = _MARGIN_L, _CANVAS_W - _MARGIN_R - 1
    y_top, y_bot = _MARGIN_T, _CANVAS_H - _MARGIN_B - 1
    canvas[y_top : y_bot + 1, [x0, x1]] = 0
    canvas[[y_top, y_bot], x0 : x1 + 1] = 0

    epochs = [m.epoch for m in history]
    series = {
        "train": ([m.train_mse for m in history], TRAIN_COLOR),
        "val": ([m.val_mse for m in history], VAL_COLOR),
    }
    values = [v for vals, _ in series.values() for v in vals]
    vmin, vmax = min(values), max(values)
    e_lo, e_hi = min(epochs), max(epochs)

    def to_px(epoch: int, value: float) -> Tuple[int, int]:
        if e_hi > e_lo:
            x = x0 + (epoch - e_lo) / (e_hi - e_lo) * (x1 - x0)
        else:
            x = (x0 + x1) / 2.0
        if vmax > vmin:
            y = y_bot - (value - vmin) / (vmax - vmin) * (y_bot - y_top)
        else:
            y = (y_top + y_bot) / 2.0
        return int(round(y)), int(round(x))

    for vals, color in series.values():
        pts = [to_px(e, v) for e, v in zip(epochs, vals)]
        for p, q in zip(pts, pts[1:]):
            _draw_segment(canvas, p, q, color)
        for y, x in pts:  # point markers survive single-epoch histories
            canvas[max(0, y - 1) : y + 2, max(0, x - 1) : x + 2] = color

    img_path = out_dir / "curves.ppm"
    write_ppm(img_path, canvas)
    return img_path, csv_path
