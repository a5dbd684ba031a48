"""Tests for image I/O, resampling and quality metrics."""

from fractions import Fraction
from pathlib import Path

import numpy as np
import pytest
from PIL import Image

from ipassr.exceptions import ImageFormatError, ShapeMismatchError, ValueRangeError
from ipassr.imaging import (
    bicubic_resize,
    bicubic_upscale_pair,
    consistency_residual,
    evaluate_pair,
    load_png,
    psnr,
    resize_tensor,
    residual_image,
    save_gray_png,
    save_png,
    ssim,
)
from ipassr.model import Protocol, RgbImage, StereoPair

from .conftest import random_image, random_pair


def constant_image(height: int, width: int, value: float) -> RgbImage:
    return RgbImage(np.full((height, width, 3), value, dtype=np.float32))


def test_png_round_trip(tmp_path: Path, rng: np.random.Generator) -> None:
    """Test 8-bit samples survive a save and load unchanged."""
    codes = rng.integers(0, 256, (6, 9, 3), dtype=np.uint8)
    img = RgbImage(codes.astype(np.float32) / np.float32(255.0))
    path = tmp_path / "img.png"

    save_png(img, path)
    loaded = load_png(path)

    np.testing.assert_array_equal(loaded.planes, img.planes)
    assert loaded.planes.dtype == np.float32


def test_save_png_clamps(tmp_path: Path) -> None:
    """Test samples outside [0, 1] are clamped when written."""
    planes = np.array([[[-0.5, 0.5, 1.5]]], dtype=np.float32)
    path = tmp_path / "img.png"

    save_png(RgbImage(planes), path)

    with Image.open(path) as img:
        assert img.getpixel((0, 0)) == (0, 128, 255)


def test_rgb_image_clamps() -> None:
    """Test images keep their samples in [0, 1] as float32 whatever they are built from."""
    img = RgbImage(np.array([[[-0.5, 0.25, 1.5]]], dtype=np.float64))

    assert img.planes.dtype == np.float32
    np.testing.assert_array_equal(img.planes, [[[0.0, 0.25, 1.0]]])
    with pytest.raises(ShapeMismatchError):
        RgbImage(np.zeros((2, 2), dtype=np.float32))
    with pytest.raises(ValueRangeError):
        RgbImage.from_tensor(np.full((1, 1, 3), np.nan, dtype=np.float32))


def test_save_gray_png(tmp_path: Path) -> None:
    """Test masks are written as 8-bit grayscale."""
    path = tmp_path / "mask.png"

    save_gray_png(np.array([[0.0, 1.0]], dtype=np.float32), path)

    with Image.open(path) as img:
        assert img.mode == "L"
        assert list(img.getdata()) == [0, 255]
    with pytest.raises(ShapeMismatchError):
        save_gray_png(np.zeros((2, 2, 1), dtype=np.float32), path)


def test_load_grayscale_png(tmp_path: Path) -> None:
    """Test non RGB images are rejected."""
    path = tmp_path / "gray.png"
    Image.fromarray(np.zeros((4, 4), dtype=np.uint8)).save(path)

    with pytest.raises(ImageFormatError, match="unsupported format"):
        load_png(path)


def test_load_jpeg(tmp_path: Path) -> None:
    """Test formats other than PNG are rejected."""
    path = tmp_path / "img.png"
    Image.fromarray(np.zeros((4, 4, 3), dtype=np.uint8)).save(path, format="JPEG")

    with pytest.raises(ImageFormatError, match="unsupported format: JPEG"):
        load_png(path)


@pytest.mark.parametrize(
    ("name", "contents"),
    [("missing.png", None), ("garbage.png", b"not an image")],
    ids=["missing", "garbage"],
)
def test_load_unreadable(tmp_path: Path, name: str, contents: bytes | None) -> None:
    """Test unreadable files raise an image format error."""
    path = tmp_path / name
    if contents is not None:
        path.write_bytes(contents)

    with pytest.raises(ImageFormatError, match="Unable to read image"):
        load_png(path)


@pytest.mark.parametrize(
    "scale",
    [Fraction(1, 4), Fraction(1, 2), 2, 4],
    ids=["quarter", "half", "double", "quadruple"],
)
def test_resize_constant(scale: Fraction | int) -> None:
    """Test resampling a constant image keeps the constant."""
    img = constant_image(8, 12, 0.25)

    out = bicubic_resize(img, scale)

    assert out.height == 8 * Fraction(scale)
    assert out.width == 12 * Fraction(scale)
    np.testing.assert_allclose(out.planes, 0.25, atol=1e-6)


def test_resize_reproduces_ramp() -> None:
    """Test upscaling interpolates a linear ramp exactly away from the border."""
    ramp = np.broadcast_to(np.arange(16, dtype=np.float32)[None, :, None], (4, 16, 3))

    out = resize_tensor(np.ascontiguousarray(ramp), 2)

    columns = np.arange(6, 26)
    np.testing.assert_allclose(
        out[:, 6:26, 0], np.broadcast_to(columns / 2 - 0.25, (8, 20)), atol=1e-5
    )


def test_resize_errors() -> None:
    """Test unsupported factors and indivisible dims are rejected."""
    img = constant_image(6, 10, 0.5)

    with pytest.raises(ValueRangeError):
        bicubic_resize(img, 3)
    with pytest.raises(ShapeMismatchError):
        bicubic_resize(img, Fraction(1, 4))
    with pytest.raises(ShapeMismatchError):
        resize_tensor(np.zeros((4, 4), dtype=np.float32), 2)


def test_bicubic_upscale_pair(rng: np.random.Generator) -> None:
    """Test both views are upscaled to the same dims."""
    pair = random_pair(rng, 5, 7)

    out = bicubic_upscale_pair(pair, 4)

    assert (out.height, out.width) == (20, 28)
    assert float(out.left.planes.min()) >= 0.0
    assert float(out.right.planes.max()) <= 1.0


def test_residual_image_of_bicubic(rng: np.random.Generator) -> None:
    """Test an HR image equal to the bicubic upscale has no residual."""
    lr = random_image(rng, 6, 8)
    hr = bicubic_resize(lr, 2)

    residual = residual_image(hr, lr, 2)

    assert residual.shape == (6, 8, 3)
    np.testing.assert_array_equal(residual, 0.0)
    with pytest.raises(ShapeMismatchError):
        residual_image(hr, lr, 4)


def test_consistency_residual(rng: np.random.Generator) -> None:
    """Test the HR/SR residual is taken at LR dims."""
    hr = random_image(rng, 8, 8)

    np.testing.assert_array_equal(consistency_residual(hr, hr, 2), 0.0)
    out = consistency_residual(hr, constant_image(8, 8, 0.0), 4)
    assert out.shape == (2, 2, 3)
    assert float(out.mean()) > 0.1
    with pytest.raises(ShapeMismatchError):
        consistency_residual(hr, constant_image(8, 4, 0.0), 2)


def test_psnr() -> None:
    """Test identical images give the sentinel and a 0.1 offset gives 20 dB."""
    a = constant_image(4, 4, 0.5)

    assert psnr(a, a) == 99.0
    assert psnr(a, constant_image(4, 4, 0.4)) == pytest.approx(20.0, abs=1e-4)
    with pytest.raises(ShapeMismatchError):
        psnr(a, constant_image(4, 5, 0.5))


def test_psnr_random_images(rng: np.random.Generator) -> None:
    """Test PSNR is symmetric and follows the mean squared error."""
    a = random_image(rng, 12, 20)
    b = random_image(rng, 12, 20)

    mse = np.mean((a.planes.astype(np.float64) - b.planes.astype(np.float64)) ** 2)
    assert psnr(a, b) == pytest.approx(10.0 * np.log10(1.0 / mse), abs=1e-9)
    assert psnr(a, b) == psnr(b, a)


def test_ssim(rng: np.random.Generator) -> None:
    """Test SSIM is one for identical images and lower otherwise."""
    a = random_image(rng, 16, 16)
    b = random_image(rng, 16, 16)

    assert ssim(a, a) == pytest.approx(1.0, abs=1e-9)
    assert ssim(a, b) < 0.5
    assert ssim(a, b) == pytest.approx(ssim(b, a), abs=1e-12)
    with pytest.raises(ShapeMismatchError):
        ssim(constant_image(8, 16, 0.5), constant_image(8, 16, 0.5))


def test_ssim_negative_image(rng: np.random.Generator) -> None:
    """Test an image and its negative are anti-correlated."""
    a = random_image(rng, 16, 16)

    assert ssim(a, RgbImage(1.0 - a.planes)) < 0.0


def test_ssim_constant_images() -> None:
    """Test flat images reduce to the luminance term."""
    c1 = 0.01**2
    expected = (2 * 0.2 * 0.7 + c1) / (0.2**2 + 0.7**2 + c1)

    actual = ssim(constant_image(16, 16, 0.2), constant_image(16, 16, 0.7))

    assert actual == pytest.approx(expected, abs=1e-6)
    assert actual == pytest.approx(0.52839, abs=1e-5)


def test_evaluate_cropped_left(rng: np.random.Generator) -> None:
    """Test the left protocol ignores the leftmost 64 columns and the right view."""
    gt = random_pair(rng, 16, 80)
    planes = gt.left.planes.copy()
    planes[:, :64] = 0.0
    sr = StereoPair(RgbImage(planes), constant_image(16, 80, 0.0))

    report = evaluate_pair(sr, gt, Protocol.CROPPED_LEFT)

    assert report.protocol == Protocol.CROPPED_LEFT
    assert report.psnr_db == 99.0
    assert report.psnr_infinite
    assert report.ssim == pytest.approx(1.0, abs=1e-9)


def test_evaluate_stereo_average() -> None:
    """Test the stereo protocol averages the two views."""
    gt = StereoPair(constant_image(16, 16, 0.5), constant_image(16, 16, 0.5))
    sr = StereoPair(constant_image(16, 16, 0.5), constant_image(16, 16, 0.4))

    report = evaluate_pair(sr, gt, Protocol.STEREO_AVERAGE)

    assert report.psnr_db == pytest.approx((99.0 + 20.0) / 2, abs=1e-4)
    assert not report.psnr_infinite
    assert report.to_dict()["protocol"] == "stereo-average"


def test_evaluate_too_narrow_for_crop() -> None:
    """Test the left protocol needs columns beyond the crop."""
    pair = StereoPair(constant_image(16, 64, 0.5), constant_image(16, 64, 0.5))

    with pytest.raises(ShapeMismatchError):
        evaluate_pair(pair, pair, Protocol.CROPPED_LEFT)
