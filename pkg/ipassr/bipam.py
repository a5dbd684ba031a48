"""Bi-directional parallax attention between the two views of a stereo pair.

Both views go through the same normalization, transition block and 1×1
projections. Each view yields a query feature U and a key feature V; the score
map pairs the left query with the right key and the left key with the right
query, so exchanging the views transposes the score map exactly:

```python
out = bipam_forward(feats_l, feats_r, f_l, f_r, weights)
swapped = bipam_forward(feats_r, feats_l, f_r, f_l, weights)
# swapped.fused_l == out.fused_r and swapped.maps.m_rl == out.maps.m_lr
```
"""

import logging
from dataclasses import dataclass

import numpy as np

from .const import BN_EPSILON, FEATURE_CHANNELS, RDB_COUNT, TRANSITION_GROUPS
from .exceptions import ShapeMismatchError, ValueRangeError
from .model import AttentionMaps, ValidMask
from .occlusion import detect_occlusions
from .tensor import (
    Tensor,
    batch_matmul,
    batch_norm,
    conv2d,
    leaky_rectify,
    softmax_lastdim,
    transpose_last2,
)

__all__ = [
    "BipamWeights",
    "BipamOutput",
    "whiten",
    "score_map",
    "attention_from_scores",
    "convert_features",
    "fuse_with_mask",
    "bipam_forward",
    "is_row_stochastic",
    "attention_profile",
]

_LOGGER = logging.getLogger(__name__)

_MASK_TOLERANCE = 1e-6


@dataclass(frozen=True, eq=False)
class BipamWeights:
    """Parameters of the attention module for a 256-channel hierarchical input."""

    bn_scale: Tensor
    bn_shift: Tensor
    bn_mean: Tensor
    bn_var: Tensor
    resb_conv1_weight: Tensor
    """3×3 grouped kernel of the transition residual block."""

    resb_conv1_bias: Tensor
    resb_conv2_weight: Tensor
    resb_conv2_bias: Tensor
    query_weight: Tensor
    """1×1 grouped kernel producing the query features U."""

    query_bias: Tensor
    key_weight: Tensor
    """1×1 grouped kernel producing the key features V."""

    key_bias: Tensor

    def __post_init__(self) -> None:
        channels = RDB_COUNT * FEATURE_CHANNELS
        for stat in (self.bn_scale, self.bn_shift, self.bn_mean, self.bn_var):
            if stat.shape != (channels,):
                raise ShapeMismatchError(
                    f"Batch norm statistics must have {channels} entries, got {stat.shape}"
                )
        if np.any(self.bn_var <= 0):
            raise ValueRangeError("Batch norm variances must be positive")
        group_in = channels // TRANSITION_GROUPS
        for kernel, expected in (
            (self.resb_conv1_weight, (3, 3, group_in, channels)),
            (self.resb_conv2_weight, (3, 3, group_in, channels)),
            (self.query_weight, (1, 1, group_in, FEATURE_CHANNELS)),
            (self.key_weight, (1, 1, group_in, FEATURE_CHANNELS)),
        ):
            if kernel.shape != expected:
                raise ShapeMismatchError(
                    f"Attention kernel has shape {kernel.shape}, expected {expected}"
                )


@dataclass(frozen=True, eq=False)
class BipamOutput:
    """Fused features, attention maps and valid masks of both views."""

    fused_l: Tensor
    """Right features converted to the left view, occlusions filled from the left."""

    fused_r: Tensor
    maps: AttentionMaps
    v_l: ValidMask
    v_r: ValidMask


def whiten(f: Tensor) -> Tensor:
    """Subtract the mean along the width from every (row, channel) line."""
    if f.ndim != 3:
        raise ShapeMismatchError(f"whiten needs H×W×C, got {f.shape}")
    wide = f.astype(np.float64)
    return (wide - wide.mean(axis=1, keepdims=True)).astype(np.float32)


def score_map(fu: Tensor, fv: Tensor) -> Tensor:
    """Correlate every left position with every right position of the same row."""
    if fu.shape != fv.shape or fu.ndim != 3:
        raise ShapeMismatchError(f"Score map operands differ: {fu.shape} vs {fv.shape}")
    return batch_matmul(fu, transpose_last2(fv))


def attention_from_scores(s: Tensor) -> AttentionMaps:
    """Softmax of S and of its transpose along the last dimension."""
    if s.ndim != 3 or s.shape[1] != s.shape[2]:
        raise ShapeMismatchError(f"Score map must be H×W×W, got {s.shape}")
    return AttentionMaps(
        m_rl=softmax_lastdim(s), m_lr=softmax_lastdim(transpose_last2(s))
    )


def convert_features(m: Tensor, f: Tensor) -> Tensor:
    """Move features of one view to the other along each epipolar row."""
    if m.ndim != 3 or f.ndim != 3 or m.shape[:2] != f.shape[:2] or m.shape[2] != f.shape[1]:
        raise ShapeMismatchError(f"Cannot convert {f.shape} features with {m.shape} map")
    return batch_matmul(m, f)


def fuse_with_mask(converted: Tensor, target: Tensor, v: Tensor) -> Tensor:
    """v * converted + (1 - v) * target, with v broadcast over channels."""
    if converted.shape != target.shape or v.shape != converted.shape[:2]:
        raise ShapeMismatchError(
            f"Cannot fuse {converted.shape} and {target.shape} with mask {v.shape}"
        )
    if v.size and (v.min() < -_MASK_TOLERANCE or v.max() > 1 + _MASK_TOLERANCE):
        raise ValueRangeError("Fusion mask values must lie in [0, 1]")
    weight = v.astype(np.float64)[..., None]
    fused = weight * converted + (1.0 - weight) * target
    return fused.astype(np.float32)


def is_row_stochastic(m: Tensor, tol: float = 1e-6) -> bool:
    """Whether every last-dimension row is nonnegative and sums to one."""
    sums = m.astype(np.float64).sum(axis=-1)
    return bool(np.all(m >= 0) and np.all(np.abs(sums - 1.0) <= tol))


def attention_profile(maps: AttentionMaps, row: int) -> Tensor:
    """One row of the right-to-left map as a W×W image scaled to its maximum."""
    if not 0 <= row < maps.height:
        raise ValueRangeError(f"Profile row {row} outside 0..{maps.height - 1}")
    profile = maps.m_rl[row].astype(np.float64)
    peak = profile.max()
    if peak > 0:
        profile = profile / peak
    return profile.astype(np.float32)


def _project(feats: Tensor, w: BipamWeights) -> tuple[Tensor, Tensor]:
    """Query and key features of one view, whitened along the width."""
    x = batch_norm(feats, w.bn_scale, w.bn_shift, w.bn_mean, w.bn_var, BN_EPSILON)
    body = conv2d(x, w.resb_conv1_weight, w.resb_conv1_bias, groups=TRANSITION_GROUPS)
    body = conv2d(
        leaky_rectify(body), w.resb_conv2_weight, w.resb_conv2_bias, groups=TRANSITION_GROUPS
    )
    x = x + body
    u = conv2d(x, w.query_weight, w.query_bias, groups=TRANSITION_GROUPS)
    v = conv2d(x, w.key_weight, w.key_bias, groups=TRANSITION_GROUPS)
    return whiten(u), whiten(v)


def bipam_forward(
    feats_l: Tensor,
    feats_r: Tensor,
    f_l: Tensor,
    f_r: Tensor,
    w: BipamWeights,
) -> BipamOutput:
    """Cross-view interaction of one stereo pair."""
    if feats_l.shape != feats_r.shape or f_l.shape != f_r.shape:
        raise ShapeMismatchError("Left and right features must have identical shapes")
    if feats_l.shape[:2] != f_l.shape[:2]:
        raise ShapeMismatchError(
            f"Hierarchical features {feats_l.shape} and view features {f_l.shape} differ"
        )
    u_l, v_l = _project(feats_l, w)
    u_r, v_r = _project(feats_r, w)
    scores = (0.5 * (score_map(u_l, v_r).astype(np.float64) + score_map(v_l, u_r))).astype(
        np.float32
    )
    maps = attention_from_scores(scores)
    mask_l, mask_r = detect_occlusions(maps)
    _LOGGER.debug(
        "Attention over %dx%d, mean valid mask %.4f / %.4f",
        maps.height,
        maps.width,
        float(mask_l.values.mean()),
        float(mask_r.values.mean()),
    )
    return BipamOutput(
        fused_l=fuse_with_mask(convert_features(maps.m_rl, f_r), f_l, mask_l.values),
        fused_r=fuse_with_mask(convert_features(maps.m_lr, f_l), f_r, mask_r.values),
        maps=maps,
        v_l=mask_l,
        v_r=mask_r,
    )
