"""Forward and backward passes for the six layer kinds used by the network.

Conventions
-----------
- Tensors are C-contiguous numpy arrays, layout height x width x channels,
  with an optional leading batch axis.  Single-frame (3-D) inputs are
  accepted wherever batched (4-D) inputs are; the result drops the batch
  axis again.
- Weight layout: Conv2D ``(kh, kw, in_channels, out_channels)``, Dense
  ``(in_units, out_units)``.  Biases are 1-D of length out_channels /
  out_units.
- Convolution is cross-correlation (no kernel flip).  ``"same"`` padding is
  a symmetric zero border of (k-1)//2 per side (odd kernels), ``"valid"``
  is no padding at all.  Stride is 1.
- Max pooling uses a 2x2 window with stride 2; a trailing odd row/column is
  discarded.  Ties go to the first maximum in row-major window order so the
  backward routing is deterministic.
- Dropout is inverted: survivors are scaled by 1/(1-rate) at train time and
  inference is the identity.
- All functions are pure.  Randomness comes in as an explicit
  ``numpy.random.Generator``; nothing here keeps state between calls.

Operations preserve the floating dtype of their inputs, so the same code
runs the float32 training path and the float64 gradient-check harness.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Optional, Tuple, Union

import numpy as np

from .errors import ConfigError, ShapeError

# Batch chunking bound for the convolution scratch buffer (bytes).  The
# im2col expansion of a 63x412 frame is ~7 MB, so this keeps temporaries
# small without hurting GEMM efficiency.
_COL_BUFFER_BYTES = 256 * 1024 * 1024


# ---------------------------------------------------------------------------
# Layer specifications and parameters
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Conv2D:
    """3x3 convolution producing ``out_channels`` feature maps."""

    out_channels: int
    padding: str = "same"
    kernel: Tuple[int, int] = (3, 3)

    kind = "conv2d"

    def __post_init__(self):
        if self.out_channels < 1:
            raise ConfigError(f"out_channels must be >= 1, got {self.out_channels}")
        if self.padding not in ("same", "valid"):
            raise ConfigError(f"padding must be 'same' or 'valid', got {self.padding!r}")
        if any(k < 1 or k % 2 == 0 for k in self.kernel):
            raise ConfigError(f"kernel dims must be odd and >= 1, got {self.kernel}")


@dataclass(frozen=True)
class MaxPool2D:
    """2x2 max pooling with stride 2."""

    kind = "maxpool2d"


@dataclass(frozen=True)
class Flatten:
    """Row-major linearization of H x W x C into a flat vector."""

    kind = "flatten"


@dataclass(frozen=True)
class Dense:
    """Fully connected layer with ``out_units`` outputs."""

    out_units: int

    kind = "dense"

    def __post_init__(self):
        if self.out_units < 1:
            raise ConfigError(f"out_units must be >= 1, got {self.out_units}")


@dataclass(frozen=True)
class ReLU:
    kind = "relu"


@dataclass(frozen=True)
class Dropout:
    rate: float = 0.5

    kind = "dropout"

    def __post_init__(self):
        if not 0.0 <= self.rate < 1.0:
            raise ConfigError(f"dropout rate must be in [0, 1), got {self.rate}")


LayerSpec = Union[Conv2D, MaxPool2D, Flatten, Dense, ReLU, Dropout]


@dataclass
class LayerParams:
    """Trainable tensors of one layer: weights plus bias."""

    weights: np.ndarray
    bias: np.ndarray

    @property
    def count(self) -> int:
        return self.weights.size + self.bias.size


class PoolMask(NamedTuple):
    """Routing record from a pooling forward pass.

    ``indices`` holds, per output position, the row-major index (0..3) of
    the winning element inside its 2x2 window.  The input height/width are
    kept so the backward pass can restore discarded odd rows/columns.
    """

    indices: np.ndarray
    in_height: int
    in_width: int


def _as_batched(x: np.ndarray, ndim: int) -> Tuple[np.ndarray, bool]:
    """Promote an unbatched tensor to batch size 1; report whether we did."""
    if x.ndim == ndim:
        return x[None], True
    if x.ndim == ndim + 1:
        return x, False
    raise ShapeError(f"expected a {ndim}-D or {ndim + 1}-D tensor, got shape {x.shape}")


# ---------------------------------------------------------------------------
# Convolution
# ---------------------------------------------------------------------------

def _conv_geometry(x: np.ndarray, params: LayerParams, padding: str):
    kh, kw, c_in, c_out = params.weights.shape
    if padding not in ("same", "valid"):
        raise ConfigError(f"padding must be 'same' or 'valid', got {padding!r}")
    if x.shape[-1] != c_in:
        raise ShapeError(
            f"input has {x.shape[-1]} channels but weights expect {c_in}"
        )
    pad = ((kh - 1) // 2, (kw - 1) // 2) if padding == "same" else (0, 0)
    h, w = x.shape[-3], x.shape[-2]
    out_h = h + 2 * pad[0] - kh + 1
    out_w = w + 2 * pad[1] - kw + 1
    if out_h < 1 or out_w < 1:
        raise ShapeError(
            f"conv output would be {out_h}x{out_w} for input {h}x{w} "
            f"with kernel {kh}x{kw} and {padding} padding"
        )
    return kh, kw, c_in, c_out, pad, out_h, out_w


def _conv_chunk(batch: int, per_frame_bytes: int) -> int:
    return max(1, min(batch, _COL_BUFFER_BYTES // max(1, per_frame_bytes)))


def conv2d_forward(x: np.ndarray, params: LayerParams, padding: str = "same") -> np.ndarray:
    """Cross-correlate ``x`` with the layer's kernels and add the bias.

    Output spatial size is H x W for same padding and (H-kh+1) x (W-kw+1)
    for valid padding.  Implemented as one shifted-slice GEMM per kernel
    tap, accumulating into the output; scratch buffers are reused across
    taps so large batches stay memory-friendly.
    """
    xb, squeeze = _as_batched(x, 3)
    kh, kw, c_in, c_out, pad, out_h, out_w = _conv_geometry(xb, params, padding)
    b = xb.shape[0]
    w = params.weights
    out = np.zeros((b, out_h, out_w, c_out), dtype=xb.dtype)
    per_frame = out_h * out_w * max(c_in, c_out) * xb.itemsize
    step = _conv_chunk(b, per_frame)
    for lo in range(0, b, step):
        hi = min(b, lo + step)
        x_pad = np.pad(xb[lo:hi], ((0, 0), pad[:1] * 2, pad[1:] * 2, (0, 0)))
        n = (hi - lo) * out_h * out_w
        acc = out[lo:hi].reshape(n, c_out)
        if c_in == 1:
            # single-channel input: gather the taps and do one GEMM
            cols = np.empty((kh * kw, hi - lo, out_h, out_w), dtype=xb.dtype)
            for u in range(kh):
                for v in range(kw):
                    np.copyto(cols[u * kw + v], x_pad[:, u:u + out_h, v:v + out_w, 0])
            np.matmul(cols.reshape(kh * kw, n).T, w.reshape(kh * kw, c_out), out=acc)
            continue
        src = np.empty((hi - lo, out_h, out_w, c_in), dtype=xb.dtype)
        tmp = np.empty((n, c_out), dtype=xb.dtype)
        for u in range(kh):
            for v in range(kw):
                np.copyto(src, x_pad[:, u:u + out_h, v:v + out_w, :])
                np.matmul(src.reshape(n, c_in), w[u, v], out=tmp)
                acc += tmp
    out += params.bias
    return out[0] if squeeze else out


def conv2d_backward(
    x: np.ndarray,
    params: LayerParams,
    grad_out: np.ndarray,
    padding: str = "same",
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Exact gradients of :func:`conv2d_forward` w.r.t. input, weights, bias."""
    xb, squeeze = _as_batched(x, 3)
    gb_, _ = _as_batched(grad_out, 3)
    kh, kw, c_in, c_out, pad, out_h, out_w = _conv_geometry(xb, params, padding)
    if gb_.shape != (xb.shape[0], out_h, out_w, c_out):
        raise ShapeError(
            f"grad_out shape {grad_out.shape} does not match conv output "
            f"({xb.shape[0]}, {out_h}, {out_w}, {c_out})"
        )
    b, h, w_in = xb.shape[0], xb.shape[1], xb.shape[2]
    w = params.weights

    grad_bias = gb_.sum(axis=(0, 1, 2), dtype=gb_.dtype)
    grad_weights = np.zeros_like(w)
    grad_x = np.zeros_like(xb)

    per_frame = out_h * out_w * max(c_in, c_out) * xb.itemsize
    step = _conv_chunk(b, per_frame)
    padded = pad != (0, 0)
    for lo in range(0, b, step):
        hi = min(b, lo + step)
        x_pad = np.pad(xb[lo:hi], ((0, 0), pad[:1] * 2, pad[1:] * 2, (0, 0)))
        gx_pad = np.zeros_like(x_pad) if padded else grad_x[lo:hi]
        n = (hi - lo) * out_h * out_w
        gm = gb_[lo:hi].reshape(n, c_out)
        src = np.empty((hi - lo, out_h, out_w, c_in), dtype=xb.dtype)
        tmp = np.empty((n, c_in), dtype=xb.dtype)
        for u in range(kh):
            for v in range(kw):
                np.copyto(src, x_pad[:, u:u + out_h, v:v + out_w, :])
                grad_weights[u, v] += src.reshape(n, c_in).T @ gm
                np.matmul(gm, w[u, v].T, out=tmp)
                gx_pad[:, u:u + out_h, v:v + out_w, :] += tmp.reshape(
                    hi - lo, out_h, out_w, c_in
                )
        if padded:
            grad_x[lo:hi] = gx_pad[:, pad[0]:pad[0] + h, pad[1]:pad[1] + w_in, :]

    return (grad_x[0] if squeeze else grad_x), grad_weights, grad_bias


# ---------------------------------------------------------------------------
# Max pooling
# ---------------------------------------------------------------------------

# Window taps in row-major order; index k in the mask means tap _TAPS[k] won.
_TAPS = ((0, 0), (0, 1), (1, 0), (1, 1))


def maxpool2d_forward(x: np.ndarray) -> Tuple[np.ndarray, PoolMask]:
    """2x2/stride-2 max pool; returns the output and the routing mask."""
    xb, squeeze = _as_batched(x, 3)
    b, h, w, c = xb.shape
    if h < 2 or w < 2:
        raise ShapeError(f"pooling needs at least 2x2 input, got {h}x{w}")
    oh, ow = h // 2, w // 2
    taps = [xb[:, sy : oh * 2 : 2, sx : ow * 2 : 2, :] for sy, sx in _TAPS]
    out = np.maximum(np.maximum(taps[0], taps[1]), np.maximum(taps[2], taps[3]))
    # first tap equal to the max wins, giving the row-major tie-break
    idx = np.where(
        taps[0] == out, 0, np.where(taps[1] == out, 1, np.where(taps[2] == out, 2, 3))
    ).astype(np.int8)
    if squeeze:
        return out[0], PoolMask(idx[0], h, w)
    return out, PoolMask(idx, h, w)


def maxpool2d_backward(mask: PoolMask, grad_out: np.ndarray) -> np.ndarray:
    """Route each upstream gradient to its recorded argmax position."""
    gb, squeeze = _as_batched(grad_out, 3)
    idx, _ = _as_batched(mask.indices, 3)
    if gb.shape != idx.shape:
        raise ShapeError(
            f"grad_out shape {grad_out.shape} does not match pool mask "
            f"shape {mask.indices.shape}"
        )
    b, oh, ow, c = gb.shape
    grad_x = np.zeros((b, mask.in_height, mask.in_width, c), dtype=gb.dtype)
    for k, (sy, sx) in enumerate(_TAPS):
        grad_x[:, sy : oh * 2 : 2, sx : ow * 2 : 2, :] += gb * (idx == k)
    return grad_x[0] if squeeze else grad_x


# ---------------------------------------------------------------------------
# Dense
# ---------------------------------------------------------------------------

def dense_forward(x: np.ndarray, params: LayerParams) -> np.ndarray:
    """Affine map ``x @ W + b`` on flat vectors (optionally batched)."""
    in_units, _ = params.weights.shape
    if x.shape[-1] != in_units:
        raise ShapeError(
            f"input has {x.shape[-1]} units but weights expect {in_units}"
        )
    return x @ params.weights + params.bias


def dense_backward(
    x: np.ndarray, params: LayerParams, grad_out: np.ndarray
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    in_units, out_units = params.weights.shape
    if x.shape[-1] != in_units or grad_out.shape[-1] != out_units:
        raise ShapeError(
            f"dense backward shapes {x.shape} / {grad_out.shape} do not match "
            f"weights {params.weights.shape}"
        )
    if x.ndim == 1:
        grad_w = np.outer(x, grad_out)
        grad_b = grad_out.copy()
    else:
        grad_w = x.T @ grad_out
        grad_b = grad_out.sum(axis=0)
    grad_x = grad_out @ params.weights.T
    return grad_x, grad_w, grad_b


# ---------------------------------------------------------------------------
# Elementwise layers
# ---------------------------------------------------------------------------

def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0)


def relu_backward(x: np.ndarray, grad_out: np.ndarray) -> np.ndarray:
    """Pass gradient where the input was strictly positive (0 at x == 0)."""
    if x.shape != grad_out.shape:
        raise ShapeError(f"relu backward shapes differ: {x.shape} vs {grad_out.shape}")
    return grad_out * (x > 0)


def dropout(
    x: np.ndarray,
    rate: float,
    rng: Optional[np.random.Generator] = None,
    training: bool = True,
) -> Tuple[np.ndarray, Optional[np.ndarray]]:
    """Inverted dropout.

    In training mode each element is zeroed independently with probability
    ``rate`` and survivors are scaled by 1/(1-rate); the returned mask
    already includes that scale.  In inference mode (or at rate 0) the
    input passes through untouched and the mask is None.
    """
    if not 0.0 <= rate < 1.0:
        raise ConfigError(f"dropout rate must be in [0, 1), got {rate}")
    if not training or rate == 0.0:
        return x, None
    if rng is None:
        raise ConfigError("training-mode dropout needs an rng")
    keep = rng.random(x.shape) >= rate
    mask = keep.astype(x.dtype) / x.dtype.type(1.0 - rate)
    return x * mask, mask


def dropout_backward(mask: Optional[np.ndarray], grad_out: np.ndarray) -> np.ndarray:
    if mask is None:
        return grad_out
    if mask.shape != grad_out.shape:
        raise ShapeError(
            f"dropout backward shapes differ: {mask.shape} vs {grad_out.shape}"
        )
    return grad_out * mask


def flatten(x: np.ndarray) -> np.ndarray:
    """Row-major linearization; batched input flattens per sample."""
    xb, squeeze = _as_batched(x, 3)
    out = xb.reshape(xb.shape[0], -1)
    return out[0] if squeeze else out


def flatten_backward(grad_out: np.ndarray, input_shape: Tuple[int, ...]) -> np.ndarray:
    return grad_out.reshape(input_shape)
