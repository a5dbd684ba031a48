"""Libraries used in tests."""

from pathlib import Path

import numpy as np
import pytest

from ipassr.archive import WeightArchive, mirror_symmetric, random_archive
from ipassr.imaging import save_png
from ipassr.model import AttentionMaps, RgbImage, StereoPair, ValidMask
from ipassr.synthetic import ToyScene, default_scene_spec, render_scene
from ipassr.tensor import Tensor


def random_image(rng: np.random.Generator, height: int, width: int) -> RgbImage:
    """Uniform random RGB image."""
    return RgbImage(rng.uniform(0, 1, (height, width, 3)).astype(np.float32))


def random_pair(rng: np.random.Generator, height: int, width: int) -> StereoPair:
    """Stereo pair of two unrelated random views."""
    return StereoPair(random_image(rng, height, width), random_image(rng, height, width))


def random_maps(rng: np.random.Generator, height: int, width: int) -> AttentionMaps:
    """Row-stochastic maps with random positive entries."""
    m_rl = rng.uniform(0.1, 1, (height, width, width))
    m_lr = rng.uniform(0.1, 1, (height, width, width))
    return AttentionMaps(
        m_rl=(m_rl / m_rl.sum(axis=-1, keepdims=True)).astype(np.float32),
        m_lr=(m_lr / m_lr.sum(axis=-1, keepdims=True)).astype(np.float32),
    )


def identity_maps(height: int, width: int) -> AttentionMaps:
    """Maps of a pair with zero disparity everywhere."""
    eye = np.broadcast_to(np.eye(width, dtype=np.float32), (height, width, width))
    return AttentionMaps(m_rl=eye.copy(), m_lr=eye.copy())


def circulant_maps(height: int, width: int, disparity: int) -> AttentionMaps:
    """One-hot maps of a constant disparity with wraparound at the border."""
    shift = np.roll(np.eye(width, dtype=np.float32), -disparity, axis=1)
    m_rl = np.broadcast_to(shift, (height, width, width)).copy()
    return AttentionMaps(m_rl=m_rl, m_lr=np.ascontiguousarray(np.swapaxes(m_rl, 1, 2)))


def full_mask(height: int, width: int, value: float = 1.0) -> ValidMask:
    """Mask with the same confidence everywhere."""
    return ValidMask(np.full((height, width), value, dtype=np.float32))


def write_png(path: Path, planes: Tensor) -> Path:
    """Save planes as a PNG file and return its path."""
    save_png(RgbImage(planes), path)
    return path


@pytest.fixture(name="rng")
def mock_rng() -> np.random.Generator:
    """Fixture for a seeded random generator."""
    return np.random.default_rng(1234)


@pytest.fixture(name="archive")
def mock_archive() -> WeightArchive:
    """Fixture for a seeded 2x weight archive."""
    return random_archive(2, seed=7)


@pytest.fixture(name="symmetric_archive")
def mock_symmetric_archive(archive: WeightArchive) -> WeightArchive:
    """Fixture for a 2x archive whose network commutes with mirroring."""
    return mirror_symmetric(archive)


@pytest.fixture(name="default_scene")
def mock_default_scene() -> ToyScene:
    """Fixture for the rendered default scene."""
    return render_scene(default_scene_spec())
