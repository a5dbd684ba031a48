"""Loss terms of the overall objective, evaluated as plain functionals.

Every L1 norm is reduced with a mean over the elements of one view (or one
map) and the per-view results are summed, so magnitudes do not depend on the
image size.
"""

import logging

import numpy as np
import numpy.typing as npt

from .const import LOSS_WEIGHT
from .exceptions import ShapeMismatchError, ValueRangeError
from .imaging import consistency_residual, residual_image
from .model import AttentionMaps, LossReport, StereoPair, ValidMask
from .tensor import Tensor

__all__ = [
    "sr_loss",
    "photometric_residual_loss",
    "cycle_residual_loss",
    "smoothness_loss",
    "consistency_residual_loss",
    "total_loss",
    "evaluate_losses",
]

_LOGGER = logging.getLogger(__name__)


def _wide(t: Tensor) -> npt.NDArray[np.float64]:
    return t.astype(np.float64)


def _check_operands(
    a: Tensor, b: Tensor, maps: AttentionMaps, v_l: ValidMask, v_r: ValidMask
) -> None:
    if a.shape != b.shape or a.ndim != 3:
        raise ShapeMismatchError(f"Residual images differ: {a.shape} vs {b.shape}")
    if a.shape[:2] != (maps.height, maps.width):
        raise ShapeMismatchError(
            f"Residual images {a.shape} do not match {maps.height}x{maps.width} maps"
        )
    if v_l.values.shape != a.shape[:2] or v_r.values.shape != a.shape[:2]:
        raise ShapeMismatchError("Valid masks do not match the residual images")


def _masked_l1(v: ValidMask, diff: npt.NDArray[np.float64]) -> float:
    return float(np.mean(np.abs(_wide(v.values)[..., None] * diff)))


def _warp(m: Tensor, x: npt.NDArray[np.float64]) -> npt.NDArray[np.float64]:
    return np.matmul(_wide(m), x)


def sr_loss(sr_pair: StereoPair, hr_pair: StereoPair) -> float:
    """Mean absolute error of each view, summed over the two views."""
    total = 0.0
    for sr, hr in ((sr_pair.left, hr_pair.left), (sr_pair.right, hr_pair.right)):
        if sr.planes.shape != hr.planes.shape:
            raise ShapeMismatchError(
                f"SR view {sr.planes.shape} does not match HR view {hr.planes.shape}"
            )
        total += float(np.mean(np.abs(_wide(sr.planes) - hr.planes)))
    return total


def _bilateral_warp_loss(
    a_l: Tensor, a_r: Tensor, maps: AttentionMaps, v_l: ValidMask, v_r: ValidMask
) -> float:
    _check_operands(a_l, a_r, maps, v_l, v_r)
    left, right = _wide(a_l), _wide(a_r)
    return _masked_l1(v_l, left - _warp(maps.m_rl, right)) + _masked_l1(
        v_r, right - _warp(maps.m_lr, left)
    )


def photometric_residual_loss(
    x_l: Tensor, x_r: Tensor, maps: AttentionMaps, v_l: ValidMask, v_r: ValidMask
) -> float:
    """Masked difference between each residual image and the other one warped onto it."""
    return _bilateral_warp_loss(x_l, x_r, maps, v_l, v_r)


def cycle_residual_loss(
    x_l: Tensor, x_r: Tensor, maps: AttentionMaps, v_l: ValidMask, v_r: ValidMask
) -> float:
    """Masked difference between each residual image and its round-trip projection."""
    _check_operands(x_l, x_r, maps, v_l, v_r)
    left, right = _wide(x_l), _wide(x_r)
    round_l = _warp(maps.m_rl, _warp(maps.m_lr, left))
    round_r = _warp(maps.m_lr, _warp(maps.m_rl, right))
    return _masked_l1(v_l, left - round_l) + _masked_l1(v_r, right - round_r)


def smoothness_loss(maps: AttentionMaps) -> float:
    """Vertical and diagonal total variation of both attention maps."""
    total = 0.0
    for m in (maps.m_rl, maps.m_lr):
        wide = _wide(m)
        if m.shape[0] > 1:
            total += float(np.mean(np.abs(wide[:-1] - wide[1:])))
        if m.shape[1] > 1:
            total += float(np.mean(np.abs(wide[:, :-1, :-1] - wide[:, 1:, 1:])))
    return total


def consistency_residual_loss(
    y_l: Tensor, y_r: Tensor, maps: AttentionMaps, v_l: ValidMask, v_r: ValidMask
) -> float:
    """Stereo consistency of the LR residuals between super-resolved and true views."""
    return _bilateral_warp_loss(y_l, y_r, maps, v_l, v_r)


def total_loss(
    sr: float,
    photo_res: float,
    cycle_res: float,
    smooth: float,
    cons_res: float,
    weight: float = LOSS_WEIGHT,
) -> LossReport:
    """Combine the terms as sr + weight * (sum of the regularizers)."""
    parts = (sr, photo_res, cycle_res, smooth, cons_res)
    if any(not np.isfinite(p) or p < 0 for p in parts):
        raise ValueRangeError(f"Loss terms must be finite and nonnegative, got {parts}")
    return LossReport(
        sr=sr,
        photo_res=photo_res,
        cycle_res=cycle_res,
        smooth=smooth,
        cons_res=cons_res,
        total=sr + weight * (photo_res + cycle_res + smooth + cons_res),
        weight=weight,
    )


def evaluate_losses(
    sr_pair: StereoPair,
    hr_pair: StereoPair,
    lr_pair: StereoPair,
    maps: AttentionMaps,
    v_l: ValidMask,
    v_r: ValidMask,
    scale: int,
    weight: float = LOSS_WEIGHT,
) -> LossReport:
    """Every loss term for one super-resolved pair."""
    x_l = residual_image(hr_pair.left, lr_pair.left, scale)
    x_r = residual_image(hr_pair.right, lr_pair.right, scale)
    y_l = consistency_residual(hr_pair.left, sr_pair.left, scale)
    y_r = consistency_residual(hr_pair.right, sr_pair.right, scale)
    report = total_loss(
        sr=sr_loss(sr_pair, hr_pair),
        photo_res=photometric_residual_loss(x_l, x_r, maps, v_l, v_r),
        cycle_res=cycle_residual_loss(x_l, x_r, maps, v_l, v_r),
        smooth=smoothness_loss(maps),
        cons_res=consistency_residual_loss(y_l, y_r, maps, v_l, v_r),
        weight=weight,
    )
    _LOGGER.debug("Loss report: %s", report)
    return report
