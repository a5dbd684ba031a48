"""Image I/O, bicubic resampling, residual images and quality metrics."""

import logging
import math
from fractions import Fraction
from pathlib import Path

import numpy as np
import numpy.typing as npt
from PIL import Image
from skimage.metrics import structural_similarity

from .const import (
    BICUBIC_A,
    CROP_LEFT_PIXELS,
    PSNR_SENTINEL_DB,
    RESIZE_SCALES,
    SSIM_K1,
    SSIM_K2,
    SSIM_SIGMA,
    SSIM_WINDOW,
)
from .exceptions import ImageFormatError, ShapeMismatchError, ValueRangeError
from .model import MetricReport, Protocol, RgbImage, StereoPair
from .tensor import Tensor

__all__ = [
    "load_png",
    "save_png",
    "save_gray_png",
    "resize_tensor",
    "bicubic_resize",
    "bicubic_upscale_pair",
    "residual_image",
    "consistency_residual",
    "psnr",
    "ssim",
    "evaluate_pair",
]

_LOGGER = logging.getLogger(__name__)

ScaleLike = Fraction | int


def load_png(path: Path) -> RgbImage:
    """Read an 8-bit RGB PNG file into an image with values v / 255."""
    try:
        with Image.open(path) as img:
            if img.format != "PNG":
                raise ImageFormatError(f"unsupported format: {img.format} ({path})")
            if img.mode != "RGB":
                raise ImageFormatError(f"unsupported format: mode {img.mode} ({path})")
            data = np.asarray(img, dtype=np.uint8)
    except OSError as err:
        raise ImageFormatError(f"Unable to read image {path}: {err}") from err
    _LOGGER.debug("Loaded %s (%dx%d)", path, data.shape[1], data.shape[0])
    return RgbImage(data.astype(np.float32) / np.float32(255.0))


def _quantize(values: npt.NDArray[np.floating]) -> npt.NDArray[np.uint8]:
    return np.clip(np.round(values.astype(np.float64) * 255.0), 0, 255).astype(np.uint8)


def save_png(img: RgbImage, path: Path) -> None:
    """Write an image as an 8-bit RGB PNG."""
    try:
        Image.fromarray(_quantize(img.planes)).save(path, format="PNG")
    except OSError as err:
        raise ImageFormatError(f"Unable to write image {path}: {err}") from err


def save_gray_png(values: Tensor, path: Path) -> None:
    """Write an H×W map with values in [0, 1] as an 8-bit grayscale PNG."""
    if values.ndim != 2:
        raise ShapeMismatchError(f"Grayscale export needs H×W, got {values.shape}")
    try:
        Image.fromarray(_quantize(values)).save(path, format="PNG")
    except OSError as err:
        raise ImageFormatError(f"Unable to write image {path}: {err}") from err


def _cubic(x: npt.NDArray[np.float64]) -> npt.NDArray[np.float64]:
    a = BICUBIC_A
    ax = np.abs(x)
    ax2 = ax * ax
    ax3 = ax2 * ax
    near = (a + 2) * ax3 - (a + 3) * ax2 + 1
    far = a * ax3 - 5 * a * ax2 + 8 * a * ax - 4 * a
    return np.where(ax <= 1, near, np.where(ax < 2, far, 0.0))


def _contributions(
    in_len: int, out_len: int, scale: Fraction, antialias: bool
) -> npt.NDArray[np.float64]:
    """Dense out_len×in_len resampling matrix along one axis."""
    s = float(scale)
    kernel_scale = s if antialias and s < 1 else 1.0
    support = 2.0 / kernel_scale
    taps = math.ceil(2 * support) + 2
    centers = (np.arange(out_len) + 0.5) / s - 0.5
    first = np.floor(centers - support).astype(np.int64) + 1
    offsets = first[:, None] + np.arange(taps)[None, :]
    weights = kernel_scale * _cubic(kernel_scale * (centers[:, None] - offsets))
    weights /= weights.sum(axis=1, keepdims=True)
    matrix = np.zeros((out_len, in_len), dtype=np.float64)
    rows = np.broadcast_to(np.arange(out_len)[:, None], offsets.shape)
    # Border samples are replicated by clamping the tap coordinates.
    np.add.at(matrix, (rows, np.clip(offsets, 0, in_len - 1)), weights)
    return matrix


def _check_scale(scale: ScaleLike) -> Fraction:
    fraction = Fraction(scale)
    if fraction not in RESIZE_SCALES:
        raise ValueRangeError(f"Unsupported resize scale {fraction}")
    return fraction


def resize_tensor(t: Tensor, scale: ScaleLike, antialias: bool = True) -> Tensor:
    """Bicubic resampling of an H×W×C tensor without clamping."""
    fraction = _check_scale(scale)
    if t.ndim != 3:
        raise ShapeMismatchError(f"Resize needs H×W×C, got {t.shape}")
    height, width, _ = t.shape
    if height % fraction.denominator or width % fraction.denominator:
        raise ShapeMismatchError(
            f"{height}x{width} is not divisible by {fraction.denominator} for downscaling"
        )
    out_h = height * fraction.numerator // fraction.denominator
    out_w = width * fraction.numerator // fraction.denominator
    rows = _contributions(height, out_h, fraction, antialias)
    cols = _contributions(width, out_w, fraction, antialias)
    out = np.einsum("oh,hwc->owc", rows, t.astype(np.float64))
    out = np.einsum("pw,owc->opc", cols, out)
    return out.astype(np.float32)


def bicubic_resize(img: RgbImage, scale: ScaleLike, antialias: bool = True) -> RgbImage:
    """Bicubic resampling with a = -0.5, widened support when downscaling."""
    return RgbImage.from_tensor(resize_tensor(img.planes, scale, antialias))


def bicubic_upscale_pair(pair: StereoPair, scale: int) -> StereoPair:
    """Bicubic baseline super-resolution of both views."""
    return StereoPair(
        bicubic_resize(pair.left, scale), bicubic_resize(pair.right, scale)
    )


def _require_scaled(hr: RgbImage, lr: RgbImage, scale: int) -> None:
    if (hr.height, hr.width) != (lr.height * scale, lr.width * scale):
        raise ShapeMismatchError(
            f"HR image {hr.height}x{hr.width} is not {scale}x the LR image "
            f"{lr.height}x{lr.width}"
        )


def residual_image(hr: RgbImage, lr: RgbImage, scale: int) -> Tensor:
    """|hr - bicubic_up(lr)| brought back to LR dims by bicubic downsampling."""
    _require_scaled(hr, lr, scale)
    upsampled = bicubic_resize(lr, scale)
    diff = RgbImage(np.abs(hr.planes - upsampled.planes))
    return bicubic_resize(diff, Fraction(1, scale)).planes


def consistency_residual(hr: RgbImage, sr: RgbImage, scale: int) -> Tensor:
    """|hr - sr| brought to LR dims by bicubic downsampling."""
    if hr.planes.shape != sr.planes.shape:
        raise ShapeMismatchError(
            f"SR image {sr.planes.shape} does not match HR image {hr.planes.shape}"
        )
    diff = RgbImage(np.abs(hr.planes - sr.planes))
    return bicubic_resize(diff, Fraction(1, scale)).planes


def _require_same_dims(a: RgbImage, b: RgbImage) -> None:
    if a.planes.shape != b.planes.shape:
        raise ShapeMismatchError(f"Image dims differ: {a.planes.shape} vs {b.planes.shape}")


def psnr(a: RgbImage, b: RgbImage) -> float:
    """PSNR over all RGB samples in [0, 1]; identical images give the sentinel."""
    _require_same_dims(a, b)
    mse = float(np.mean((a.planes.astype(np.float64) - b.planes) ** 2))
    if mse == 0.0:
        return PSNR_SENTINEL_DB
    return min(10.0 * math.log10(1.0 / mse), PSNR_SENTINEL_DB)


def ssim(a: RgbImage, b: RgbImage) -> float:
    """Mean SSIM with an 11×11 Gaussian window (σ = 1.5), averaged over channels."""
    _require_same_dims(a, b)
    if a.height < SSIM_WINDOW or a.width < SSIM_WINDOW:
        raise ShapeMismatchError(
            f"SSIM needs at least {SSIM_WINDOW}x{SSIM_WINDOW} pixels, got {a.height}x{a.width}"
        )
    return float(
        structural_similarity(
            a.planes.astype(np.float64),
            b.planes.astype(np.float64),
            gaussian_weights=True,
            sigma=SSIM_SIGMA,
            use_sample_covariance=False,
            data_range=1.0,
            channel_axis=2,
            K1=SSIM_K1,
            K2=SSIM_K2,
        )
    )


def _crop_left(img: RgbImage) -> RgbImage:
    return RgbImage(np.ascontiguousarray(img.planes[:, CROP_LEFT_PIXELS:]))


def evaluate_pair(sr: StereoPair, gt: StereoPair, protocol: Protocol) -> MetricReport:
    """Score a super-resolved pair under one of the evaluation protocols."""
    _require_same_dims(sr.left, gt.left)
    _require_same_dims(sr.right, gt.right)
    if protocol == Protocol.CROPPED_LEFT:
        if sr.width <= CROP_LEFT_PIXELS:
            raise ShapeMismatchError(
                f"Width {sr.width} leaves nothing after cropping {CROP_LEFT_PIXELS} columns"
            )
        left_sr, left_gt = _crop_left(sr.left), _crop_left(gt.left)
        return MetricReport(
            psnr_db=psnr(left_sr, left_gt),
            ssim=ssim(left_sr, left_gt),
            protocol=protocol,
        )
    return MetricReport(
        psnr_db=(psnr(sr.left, gt.left) + psnr(sr.right, gt.right)) / 2,
        ssim=(ssim(sr.left, gt.left) + ssim(sr.right, gt.right)) / 2,
        protocol=protocol,
    )
