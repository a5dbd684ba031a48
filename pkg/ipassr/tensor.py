"""Dense tensor kernels used by every part of the engine.

Tensors are plain float32 numpy arrays of rank 1 to 4, read contextually as
H×W, H×W×C or H×W1×W2. Every kernel is a pure function returning a freshly
allocated array; reductions accumulate in float64 and store float32.
"""

import numpy as np
import numpy.typing as npt

from .const import LEAKY_SLOPE
from .exceptions import ShapeMismatchError, ValueRangeError

__all__ = [
    "Tensor",
    "as_tensor",
    "conv2d",
    "batch_matmul",
    "softmax_lastdim",
    "transpose_last2",
    "pixel_shuffle",
    "pixel_unshuffle",
    "leaky_rectify",
    "concat_channels",
    "elementwise_add",
    "elementwise_mul",
    "global_mean_hw",
    "sigmoid",
    "batch_norm",
    "clamp",
]

Tensor = npt.NDArray[np.float32]


def as_tensor(values: npt.ArrayLike) -> Tensor:
    """Return a float32 tensor after checking rank, extents and finiteness."""
    t = np.asarray(values, dtype=np.float32)
    if not 1 <= t.ndim <= 4:
        raise ShapeMismatchError(f"Tensor rank must be between 1 and 4, got {t.ndim}")
    if min(t.shape) < 1:
        raise ShapeMismatchError(f"Tensor extents must be positive, got {t.shape}")
    if not np.all(np.isfinite(t)):
        raise ValueRangeError("Tensor contains non-finite values")
    return t


def _require_rank(t: npt.NDArray[np.generic], rank: int, what: str) -> None:
    if t.ndim != rank:
        raise ShapeMismatchError(f"{what} must have rank {rank}, got shape {t.shape}")


def conv2d(
    x: Tensor,
    kernel: Tensor,
    bias: Tensor,
    padding: int | None = None,
    groups: int = 1,
) -> Tensor:
    """Same-size, stride 1 cross-correlation of an H×W×Cin input.

    The kernel is laid out k×k×(Cin/groups)×Cout. Output block g only reads
    input block g when groups > 1.
    """
    _require_rank(x, 3, "conv2d input")
    _require_rank(kernel, 4, "conv2d kernel")
    kh, kw, group_in, c_out = kernel.shape
    if kh != kw or kh % 2 == 0:
        raise ShapeMismatchError(f"Kernel must be square with odd size, got {kh}x{kw}")
    if padding is None:
        padding = (kh - 1) // 2
    if padding != (kh - 1) // 2:
        raise ShapeMismatchError(f"Padding {padding} does not keep a {kh}x{kh} output same-size")
    height, width, c_in = x.shape
    if groups < 1 or c_in % groups or c_out % groups:
        raise ShapeMismatchError(f"Channels {c_in}->{c_out} not divisible into {groups} groups")
    if group_in * groups != c_in:
        raise ShapeMismatchError(
            f"Input has {c_in} channels but kernel expects {group_in * groups}"
        )
    if bias.shape != (c_out,):
        raise ShapeMismatchError(f"Bias shape {bias.shape} does not match {c_out} outputs")

    padded = np.pad(
        x.astype(np.float64), ((padding, padding), (padding, padding), (0, 0))
    )
    # (H, W, C, kh, kw) -> (H, W, kh, kw, C) to line up with the kernel layout.
    windows = np.lib.stride_tricks.sliding_window_view(padded, (kh, kw), axis=(0, 1))
    windows = windows.transpose(0, 1, 3, 4, 2)
    group_out = c_out // groups
    out = np.empty((height, width, c_out), dtype=np.float64)
    for g in range(groups):
        cols = windows[..., g * group_in : (g + 1) * group_in].reshape(
            height * width, kh * kw * group_in
        )
        weights = kernel[..., g * group_out : (g + 1) * group_out].astype(np.float64)
        out[..., g * group_out : (g + 1) * group_out] = (
            cols @ weights.reshape(kh * kw * group_in, group_out)
        ).reshape(height, width, group_out)
    out += bias.astype(np.float64)
    return out.astype(np.float32)


def batch_matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product per index of the leading (height) dimension."""
    _require_rank(a, 3, "batch_matmul left operand")
    _require_rank(b, 3, "batch_matmul right operand")
    if a.shape[0] != b.shape[0] or a.shape[2] != b.shape[1]:
        raise ShapeMismatchError(f"Cannot batch multiply {a.shape} by {b.shape}")
    return np.matmul(a.astype(np.float64), b.astype(np.float64)).astype(np.float32)


def softmax_lastdim(t: Tensor) -> Tensor:
    """Softmax along the last dimension, stabilized by max subtraction."""
    if t.ndim < 1:
        raise ShapeMismatchError("softmax needs at least one dimension")
    shifted = t.astype(np.float64) - np.max(t, axis=-1, keepdims=True)
    e = np.exp(shifted)
    return (e / np.sum(e, axis=-1, keepdims=True)).astype(np.float32)


def transpose_last2(t: Tensor) -> Tensor:
    """Swap the last two dimensions of every batch slice."""
    _require_rank(t, 3, "transpose_last2 input")
    return np.ascontiguousarray(np.swapaxes(t, 1, 2))


def pixel_shuffle(t: Tensor, r: int) -> Tensor:
    """Rearrange H×W×(r²·C) channel blocks into an (rH)×(rW)×C image.

    output(r·h + dy, r·w + dx, c) = input(h, w, c·r² + dy·r + dx)
    """
    _require_rank(t, 3, "pixel_shuffle input")
    height, width, channels = t.shape
    if r < 1 or channels % (r * r):
        raise ShapeMismatchError(f"{channels} channels not divisible by {r}^2")
    c = channels // (r * r)
    blocks = t.reshape(height, width, c, r, r)
    return np.ascontiguousarray(
        blocks.transpose(0, 3, 1, 4, 2).reshape(height * r, width * r, c)
    )


def pixel_unshuffle(t: Tensor, r: int) -> Tensor:
    """Inverse of `pixel_shuffle`."""
    _require_rank(t, 3, "pixel_unshuffle input")
    height, width, c = t.shape
    if r < 1 or height % r or width % r:
        raise ShapeMismatchError(f"Spatial dims {height}x{width} not divisible by {r}")
    blocks = t.reshape(height // r, r, width // r, r, c)
    return np.ascontiguousarray(
        blocks.transpose(0, 2, 4, 1, 3).reshape(height // r, width // r, c * r * r)
    )


def leaky_rectify(t: Tensor, slope: float = LEAKY_SLOPE) -> Tensor:
    """Elementwise x if x >= 0 else slope * x."""
    return np.where(t >= 0, t, t * np.float32(slope)).astype(np.float32)


def concat_channels(*tensors: Tensor) -> Tensor:
    """Join H×W×C tensors along the channel extent."""
    if not tensors:
        raise ShapeMismatchError("Nothing to concatenate")
    spatial = {t.shape[:2] for t in tensors}
    if len(spatial) != 1 or any(t.ndim != 3 for t in tensors):
        raise ShapeMismatchError(
            f"Cannot concatenate shapes {[t.shape for t in tensors]}"
        )
    return np.concatenate(tensors, axis=2)


def _require_same_shape(a: Tensor, b: Tensor) -> None:
    if a.shape != b.shape:
        raise ShapeMismatchError(f"Shape mismatch {a.shape} vs {b.shape}")


def elementwise_add(a: Tensor, b: Tensor) -> Tensor:
    _require_same_shape(a, b)
    return (a + b).astype(np.float32)


def elementwise_mul(a: Tensor, b: Tensor) -> Tensor:
    _require_same_shape(a, b)
    return (a * b).astype(np.float32)


def global_mean_hw(t: Tensor) -> Tensor:
    """Reduce H×W×C to 1×1×C by averaging over both spatial extents."""
    _require_rank(t, 3, "global_mean_hw input")
    return np.mean(t, axis=(0, 1), dtype=np.float64, keepdims=True).astype(np.float32)


def sigmoid(t: Tensor) -> Tensor:
    # 0.5 * (1 + tanh(x / 2)) == 1 / (1 + exp(-x))
    return (0.5 * (1.0 + np.tanh(0.5 * t.astype(np.float64)))).astype(np.float32)


def batch_norm(
    t: Tensor,
    scale: Tensor,
    shift: Tensor,
    mean: Tensor,
    var: Tensor,
    eps: float,
) -> Tensor:
    """Inference-mode batch normalization over the channel extent."""
    channels = t.shape[-1]
    for name, stat in (("scale", scale), ("shift", shift), ("mean", mean), ("var", var)):
        if stat.shape != (channels,):
            raise ShapeMismatchError(
                f"Batch norm {name} has shape {stat.shape}, expected ({channels},)"
            )
    inv_std = 1.0 / np.sqrt(var.astype(np.float64) + eps)
    out = (t.astype(np.float64) - mean) * (inv_std * scale) + shift
    return out.astype(np.float32)


def clamp(t: Tensor, lo: float = 0.0, hi: float = 1.0) -> Tensor:
    return np.clip(t, lo, hi).astype(np.float32)
