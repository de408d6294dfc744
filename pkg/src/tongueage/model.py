"""Network assembly, execution, and checkpoint serialization.

The production architecture takes one 63 x 412 x 1 frame and regresses a
single age value:

    conv 3x3x8 same -> relu -> conv 3x3x8 valid -> relu -> maxpool
    -> conv 3x3x8 same -> relu -> conv 3x3x4 valid -> relu -> maxpool
    -> flatten -> dense 512 -> relu -> dropout 0.5 -> dense 1 (linear)

for a total of 2,898,437 trainable parameters.  Weights are Glorot-uniform
initialized from a seeded generator, biases start at zero, and the output
layer has no activation (plain regression head).

Checkpoint format (little-endian): magic ``TGAGE1``, uint32 manifest byte
length, UTF-8 JSON manifest, then per-layer parameter buffers in layer
order, weights before bias, raw float32.  Round trips are bit-exact.
"""

from __future__ import annotations

import copy
import hashlib
import json
import struct
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import layers as L
from .errors import FormatError, ShapeError
from .optim import mse_loss

CHECKPOINT_MAGIC = b"TGAGE1"
CHECKPOINT_VERSION = 1

INPUT_SHAPE = (63, 412, 1)

# Layer sequence of the production model, in execution order.
PAPER_ARCHITECTURE: Tuple[Tuple[str, L.LayerSpec], ...] = (
    ("conv1", L.Conv2D(8, "same")),
    ("relu1", L.ReLU()),
    ("conv2", L.Conv2D(8, "valid")),
    ("relu2", L.ReLU()),
    ("pool1", L.MaxPool2D()),
    ("conv3", L.Conv2D(8, "same")),
    ("relu3", L.ReLU()),
    ("conv4", L.Conv2D(4, "valid")),
    ("relu4", L.ReLU()),
    ("pool2", L.MaxPool2D()),
    ("flatten", L.Flatten()),
    ("dense1", L.Dense(512)),
    ("relu5", L.ReLU()),
    ("dropout1", L.Dropout(0.5)),
    ("output", L.Dense(1)),
)

PAPER_PARAM_TOTAL = 2_898_437


@dataclass
class Layer:
    name: str
    spec: L.LayerSpec
    params: Optional[L.LayerParams] = None


def infer_shapes(
    specs: Sequence[L.LayerSpec], input_shape: Tuple[int, ...]
) -> List[Tuple[int, ...]]:
    """Per-layer output shapes (without batch axis) for a spec sequence."""
    shape = tuple(input_shape)
    out = []
    for spec in specs:
        if isinstance(spec, L.Conv2D):
            if len(shape) != 3:
                raise ShapeError(f"conv needs an HxWxC input, got {shape}")
            h, w, _ = shape
            kh, kw = spec.kernel
            if spec.padding == "valid":
                h, w = h - kh + 1, w - kw + 1
            if h < 1 or w < 1:
                raise ShapeError(f"conv output collapsed to {h}x{w}")
            shape = (h, w, spec.out_channels)
        elif isinstance(spec, L.MaxPool2D):
            h, w, c = shape
            if h < 2 or w < 2:
                raise ShapeError(f"pool needs at least 2x2 input, got {h}x{w}")
            shape = (h // 2, w // 2, c)
        elif isinstance(spec, L.Flatten):
            shape = (int(np.prod(shape)),)
        elif isinstance(spec, L.Dense):
            if len(shape) != 1:
                raise ShapeError(f"dense needs a flat input, got {shape}")
            shape = (spec.out_units,)
        elif isinstance(spec, (L.ReLU, L.Dropout)):
            pass
        else:
            raise ShapeError(f"unknown layer spec {spec!r}")
        out.append(shape)
    return out


class Model:
    """Ordered layer stack with parameters; built once, trained in place."""

    def __init__(
        self,
        entries: List[Layer],
        input_shape: Tuple[int, ...],
        seed: int,
        dtype=np.float32,
    ):
        self.entries = entries
        self.input_shape = tuple(input_shape)
        self.seed = int(seed)
        self.dtype = np.dtype(dtype)

    # -- bookkeeping --------------------------------------------------------

    def parameters(self) -> List[np.ndarray]:
        """Flat parameter list: weights then bias per layer, layer order."""
        out = []
        for e in self.entries:
            if e.params is not None:
                out.append(e.params.weights)
                out.append(e.params.bias)
        return out

    def param_count(self) -> int:
        return sum(p.size for p in self.parameters())

    def param_digest(self) -> str:
        """SHA-256 over the raw parameter bytes, for mutation checks."""
        h = hashlib.sha256()
        for p in self.parameters():
            h.update(np.ascontiguousarray(p).tobytes())
        return h.hexdigest()

    def layer_names(self) -> List[str]:
        return [e.name for e in self.entries]

    def output_shapes(self) -> List[Tuple[int, ...]]:
        return infer_shapes([e.spec for e in self.entries], self.input_shape)

    def architecture_rows(self) -> List[Tuple[str, str, Tuple[int, ...], int]]:
        """(name, kind, output_shape, params) for conv/pool/dense layers.

        These are the shape-changing rows of the architecture summary;
        activation/dropout/flatten layers are pass-through and omitted.
        """
        rows = []
        for e, shape in zip(self.entries, self.output_shapes()):
            if isinstance(e.spec, (L.Conv2D, L.MaxPool2D, L.Dense)):
                n = e.params.count if e.params is not None else 0
                rows.append((e.name, e.spec.kind, shape, n))
        return rows

    def copy(self) -> "Model":
        return copy.deepcopy(self)

    # -- execution ----------------------------------------------------------

    def _check_batch(self, batch: np.ndarray) -> Tuple[np.ndarray, bool]:
        x = np.asarray(batch, dtype=self.dtype)
        if x.shape == self.input_shape:
            return x[None], True
        if x.ndim == len(self.input_shape) + 1 and x.shape[1:] == self.input_shape:
            return x, False
        raise ShapeError(
            f"batch shape {np.shape(batch)} does not match input shape "
            f"{self.input_shape}"
        )

    def _run(
        self,
        xb: np.ndarray,
        training: bool,
        rng: Optional[np.random.Generator],
        keep_cache: bool,
        capture: Optional[List[str]] = None,
    ):
        caches = []
        captured = {}
        x = xb
        for e in self.entries:
            spec = e.spec
            if isinstance(spec, L.Conv2D):
                cache = x
                x = L.conv2d_forward(x, e.params, spec.padding)
            elif isinstance(spec, L.ReLU):
                cache = x
                x = L.relu(x)
            elif isinstance(spec, L.MaxPool2D):
                x, cache = L.maxpool2d_forward(x)
            elif isinstance(spec, L.Flatten):
                cache = x.shape
                x = L.flatten(x)
            elif isinstance(spec, L.Dense):
                cache = x
                x = L.dense_forward(x, e.params)
            elif isinstance(spec, L.Dropout):
                x, cache = L.dropout(x, spec.rate, rng, training)
            if keep_cache:
                caches.append(cache)
            if capture is not None and e.name in capture:
                captured[e.name] = x
        return x, caches, captured

    def forward(
        self,
        batch: np.ndarray,
        training: bool = False,
        rng: Optional[np.random.Generator] = None,
    ) -> np.ndarray:
        """Predictions for a batch (B x 1) or single frame (1-vector)."""
        xb, squeeze = self._check_batch(batch)
        out, _, _ = self._run(xb, training, rng, keep_cache=False)
        return out[0] if squeeze else out

    def forward_trace(self, frame: np.ndarray, capture: List[str]) -> Dict[str, np.ndarray]:
        """Inference forward pass collecting outputs of the named layers."""
        xb, _ = self._check_batch(frame)
        _, _, captured = self._run(xb, False, None, keep_cache=False, capture=capture)
        return {name: act[0] for name, act in captured.items()}

    def backward(
        self,
        batch: np.ndarray,
        targets: np.ndarray,
        rng: Optional[np.random.Generator] = None,
    ) -> Tuple[float, List[np.ndarray]]:
        """Training-mode loss and gradients aligned with :meth:`parameters`.

        The loss is the MSE of the forward pass run here, so dropout masks
        are shared between the loss value and the gradients.
        """
        xb, _ = self._check_batch(batch)
        y = np.asarray(targets, dtype=self.dtype)
        pred, caches, _ = self._run(xb, True, rng, keep_cache=True)
        if y.shape != pred.shape:
            raise ShapeError(f"target shape {y.shape} != prediction shape {pred.shape}")
        loss, grad = mse_loss(pred, y)

        grads_rev: List[np.ndarray] = []
        for e, cache in zip(reversed(self.entries), reversed(caches)):
            spec = e.spec
            if isinstance(spec, L.Conv2D):
                grad, gw, gb = L.conv2d_backward(cache, e.params, grad, spec.padding)
                grads_rev.extend([gb, gw])
            elif isinstance(spec, L.ReLU):
                grad = L.relu_backward(cache, grad)
            elif isinstance(spec, L.MaxPool2D):
                grad = L.maxpool2d_backward(cache, grad)
            elif isinstance(spec, L.Flatten):
                grad = L.flatten_backward(grad, cache)
            elif isinstance(spec, L.Dense):
                grad, gw, gb = L.dense_backward(cache, e.params, grad)
                grads_rev.extend([gb, gw])
            elif isinstance(spec, L.Dropout):
                grad = L.dropout_backward(cache, grad)
        return loss, grads_rev[::-1]


# ---------------------------------------------------------------------------
# Construction
# ---------------------------------------------------------------------------

def _glorot_limit(fan_in: int, fan_out: int) -> float:
    return float(np.sqrt(6.0 / (fan_in + fan_out)))


def build_model(
    architecture: Sequence[Tuple[str, L.LayerSpec]],
    input_shape: Tuple[int, ...],
    seed: int,
    dtype=np.float32,
) -> Model:
    """Build and Glorot-initialize a model from (name, spec) pairs."""
    dtype = np.dtype(dtype)
    rng = np.random.default_rng(seed)
    specs = [spec for _, spec in architecture]
    shapes = infer_shapes(specs, input_shape)
    entries = []
    in_shape = tuple(input_shape)
    for (name, spec), out_shape in zip(architecture, shapes):
        params = None
        if isinstance(spec, L.Conv2D):
            kh, kw = spec.kernel
            c_in = in_shape[-1]
            fan_in = kh * kw * c_in
            fan_out = kh * kw * spec.out_channels
            lim = _glorot_limit(fan_in, fan_out)
            w = rng.uniform(-lim, lim, (kh, kw, c_in, spec.out_channels))
            params = L.LayerParams(
                w.astype(dtype), np.zeros(spec.out_channels, dtype=dtype)
            )
        elif isinstance(spec, L.Dense):
            in_units = in_shape[0]
            lim = _glorot_limit(in_units, spec.out_units)
            w = rng.uniform(-lim, lim, (in_units, spec.out_units))
            params = L.LayerParams(
                w.astype(dtype), np.zeros(spec.out_units, dtype=dtype)
            )
        entries.append(Layer(name, spec, params))
        in_shape = out_shape
    return Model(entries, input_shape, seed, dtype)


def build_paper_model(seed: int, dtype=np.float32) -> Model:
    """The production 2,898,437-parameter age-regression network."""
    return build_model(PAPER_ARCHITECTURE, INPUT_SHAPE, seed, dtype)


# Spec-level operation aliases: the module-level call surface mirrors the
# method names so callers can stay functional if they prefer.

def forward(
    model: Model,
    batch: np.ndarray,
    training: bool = False,
    rng: Optional[np.random.Generator] = None,
) -> np.ndarray:
    return model.forward(batch, training, rng)


def backward(
    model: Model,
    batch: np.ndarray,
    targets: np.ndarray,
    rng: Optional[np.random.Generator] = None,
) -> Tuple[float, List[np.ndarray]]:
    return model.backward(batch, targets, rng)


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------

_SPEC_FIELDS = {
    "conv2d": lambda s: {"out_channels": s.out_channels, "padding": s.padding,
                         "kernel": list(s.kernel)},
    "maxpool2d": lambda s: {},
    "flatten": lambda s: {},
    "dense": lambda s: {"out_units": s.out_units},
    "relu": lambda s: {},
    "dropout": lambda s: {"rate": s.rate},
}


def _spec_to_dict(name: str, spec: L.LayerSpec) -> dict:
    d = {"name": name, "kind": spec.kind}
    d.update(_SPEC_FIELDS[spec.kind](spec))
    return d


def _spec_from_dict(d: dict) -> Tuple[str, L.LayerSpec]:
    try:
        name = d["name"]
        kind = d["kind"]
        if kind == "conv2d":
            spec = L.Conv2D(int(d["out_channels"]), d["padding"],
                            tuple(d.get("kernel", (3, 3))))
        elif kind == "maxpool2d":
            spec = L.MaxPool2D()
        elif kind == "flatten":
            spec = L.Flatten()
        elif kind == "dense":
            spec = L.Dense(int(d["out_units"]))
        elif kind == "relu":
            spec = L.ReLU()
        elif kind == "dropout":
            spec = L.Dropout(float(d["rate"]))
        else:
            raise FormatError(f"unknown layer kind {kind!r} in manifest")
    except KeyError as exc:
        raise FormatError(f"manifest layer entry missing field {exc}") from exc
    return name, spec


def save_checkpoint(
    model: Model,
    path,
    epoch: int = 0,
    train_config_digest: Optional[str] = None,
    optimizer: Optional[dict] = None,
) -> None:
    """Write the model to ``path`` in the TGAGE1 binary format."""
    manifest = {
        "version": CHECKPOINT_VERSION,
        "input_shape": list(model.input_shape),
        "seed": model.seed,
        "epoch": int(epoch),
        "train_config_digest": train_config_digest,
        "optimizer": optimizer,
        "param_count": model.param_count(),
        "layers": [_spec_to_dict(e.name, e.spec) for e in model.entries],
    }
    mbytes = json.dumps(manifest, sort_keys=True, indent=1).encode("utf-8")
    with open(path, "wb") as f:
        f.write(CHECKPOINT_MAGIC)
        f.write(struct.pack("<I", len(mbytes)))
        f.write(mbytes)
        for e in model.entries:
            if e.params is not None:
                f.write(np.ascontiguousarray(e.params.weights, dtype="<f4").tobytes())
                f.write(np.ascontiguousarray(e.params.bias, dtype="<f4").tobytes())


def load_checkpoint(path) -> Tuple[Model, dict]:
    """Read a TGAGE1 checkpoint; returns the model and its manifest."""
    with open(path, "rb") as f:
        data = f.read()
    if len(data) < len(CHECKPOINT_MAGIC) + 4:
        raise FormatError("checkpoint truncated before the manifest header")
    if data[: len(CHECKPOINT_MAGIC)] != CHECKPOINT_MAGIC:
        raise FormatError(
            f"bad magic {data[:len(CHECKPOINT_MAGIC)]!r}, expected {CHECKPOINT_MAGIC!r}"
        )
    off = len(CHECKPOINT_MAGIC)
    (mlen,) = struct.unpack_from("<I", data, off)
    off += 4
    if off + mlen > len(data):
        raise FormatError("checkpoint truncated inside the manifest")
    try:
        manifest = json.loads(data[off : off + mlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"manifest is not valid UTF-8 JSON: {exc}") from exc
    off += mlen

    if manifest.get("version") != CHECKPOINT_VERSION:
        raise FormatError(f"unsupported checkpoint version {manifest.get('version')!r}")
    try:
        input_shape = tuple(int(v) for v in manifest["input_shape"])
        seed = int(manifest["seed"])
        declared = int(manifest["param_count"])
        layer_dicts = manifest["layers"]
    except KeyError as exc:
        raise FormatError(f"manifest missing field {exc}") from exc

    architecture = [_spec_from_dict(d) for d in layer_dicts]
    model = build_model(architecture, input_shape, seed, np.float32)
    if model.param_count() != declared:
        raise FormatError(
            f"manifest param_count {declared} does not match architecture "
            f"({model.param_count()} parameters)"
        )
    expected_bytes = declared * 4
    if len(data) - off != expected_bytes:
        raise FormatError(
            f"parameter buffer holds {len(data) - off} bytes, expected "
            f"{expected_bytes}"
        )
    for e in model.entries:
        if e.params is None:
            continue
        for attr in ("weights", "bias"):
            arr = getattr(e.params, attr)
            nbytes = arr.size * 4
            buf = np.frombuffer(data, dtype="<f4", count=arr.size, offset=off)
            setattr(e.params, attr, buf.reshape(arr.shape).astype(np.float32))
            off += nbytes
    return model, manifest
