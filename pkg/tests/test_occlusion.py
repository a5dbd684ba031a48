"""Tests for cycle-consistency occlusion detection."""

import numpy as np
import pytest

from ipassr.exceptions import ValueRangeError
from ipassr.model import AttentionMaps, ValidMask
from ipassr.occlusion import (
    cycle_probability,
    detect_occlusions,
    occlusion_from_mask,
    relaxed_cycle_probability,
    valid_mask,
)
from ipassr.selftest import (
    reference_cycle_probability,
    reference_relaxed_cycle_probability,
)
from ipassr.synthetic import (
    ToyScene,
    analytic_attention,
    default_scene_spec,
    mirror_spec,
    render_scene,
)

from .conftest import identity_maps, random_maps


def uniform_maps(height: int, width: int) -> AttentionMaps:
    m = np.full((height, width, width), 1.0 / width, dtype=np.float32)
    return AttentionMaps(m_rl=m, m_lr=m.copy())


def test_identity_maps() -> None:
    """Test a zero-disparity pair returns to itself with certainty."""
    maps = identity_maps(3, 7)

    np.testing.assert_allclose(cycle_probability(maps), 1.0, atol=1e-7)
    np.testing.assert_allclose(relaxed_cycle_probability(maps), 1.0, atol=1e-7)
    v_l, v_r = detect_occlusions(maps)
    np.testing.assert_allclose(v_l.values, np.tanh(5.0), atol=1e-6)
    np.testing.assert_allclose(v_r.values, np.tanh(5.0), atol=1e-6)


def test_uniform_maps() -> None:
    """Test uniform maps give 1 / W per offset that stays inside the image."""
    maps = uniform_maps(2, 10)

    np.testing.assert_allclose(cycle_probability(maps), 0.1, atol=1e-7)
    relaxed = relaxed_cycle_probability(maps)
    np.testing.assert_allclose(relaxed[:, 2:8], 0.5, atol=1e-6)
    np.testing.assert_allclose(relaxed[:, [0, 9]], 0.3, atol=1e-6)
    np.testing.assert_allclose(relaxed[:, [1, 8]], 0.4, atol=1e-6)


def test_relaxed_without_offsets(rng: np.random.Generator) -> None:
    """Test no relaxation reproduces the plain cycle probability exactly."""
    maps = random_maps(rng, 4, 9)

    np.testing.assert_array_equal(
        relaxed_cycle_probability(maps, delta_max=0), cycle_probability(maps)
    )


@pytest.mark.parametrize("delta_max", [0, 1, 2, 3], ids=["d0", "d1", "d2", "d3"])
def test_relaxed_matches_reference(rng: np.random.Generator, delta_max: int) -> None:
    """Test the vectorized relaxation against the loop oracle."""
    maps = random_maps(rng, 3, 8)

    relaxed = relaxed_cycle_probability(maps, delta_max)
    exact = cycle_probability(maps)

    np.testing.assert_allclose(
        relaxed, reference_relaxed_cycle_probability(maps, delta_max), atol=1e-6
    )
    np.testing.assert_allclose(exact, reference_cycle_probability(maps), atol=1e-6)
    assert np.all(relaxed >= exact - 1e-7)
    assert np.all(relaxed <= 2 * delta_max + 1 + 1e-6)


def test_relaxation_wider_than_image() -> None:
    """Test offsets beyond the width contribute nothing."""
    maps = uniform_maps(1, 3)

    np.testing.assert_allclose(relaxed_cycle_probability(maps, delta_max=5), 1.0, atol=1e-6)
    with pytest.raises(ValueRangeError):
        relaxed_cycle_probability(maps, delta_max=-1)


def test_constant_disparity() -> None:
    """Test the left border uncovered by a shift of 3 keeps only stray mass."""
    disparity = np.full((1, 8), 3.0, dtype=np.float32)
    occ_l = np.arange(8)[None, :] < 3
    maps = analytic_attention(disparity, occ_l)

    p = cycle_probability(maps)

    np.testing.assert_allclose(p[0, :3], 3 / 64, atol=1e-7)
    np.testing.assert_allclose(p[0, 3:], 1.0, atol=1e-7)
    assert np.all(occlusion_from_mask(valid_mask(p)) == occ_l)


def test_valid_mask() -> None:
    """Test the mask is tanh(5 p') and rejects negative probabilities."""
    p = np.array([[0.0, 0.1, 1.0]], dtype=np.float32)

    v = valid_mask(p)

    np.testing.assert_allclose(v.values, np.tanh(5 * p.astype(np.float64)), atol=1e-7)
    np.testing.assert_allclose(valid_mask(p, tau=1.0).values, np.tanh(p), atol=1e-7)
    with pytest.raises(ValueRangeError):
        valid_mask(np.array([[-0.1]], dtype=np.float32))


def test_occlusion_from_mask() -> None:
    """Test thresholding of confidences."""
    v = ValidMask(np.array([[0.1, 0.5, 0.9]], dtype=np.float32))

    assert occlusion_from_mask(v).tolist() == [[True, False, False]]
    assert occlusion_from_mask(v, threshold=0.6).tolist() == [[True, True, False]]


def test_default_scene_masks(default_scene: ToyScene) -> None:
    """Test the analytic maps of the default scene separate occluded pixels."""
    maps = analytic_attention(default_scene.disparity_l, default_scene.occ_l)

    v_l, v_r = detect_occlusions(maps)

    assert default_scene.occ_l.any()
    assert float(v_l.values[default_scene.occ_l].max()) < 0.2
    assert float(v_l.values[~default_scene.occ_l].min()) > 0.95
    assert float(v_r.values[default_scene.occ_r].max()) < 0.2
    assert float(v_r.values[~default_scene.occ_r].min()) > 0.95


def test_mirror_commutes(default_scene: ToyScene) -> None:
    """Test mirroring the scene exchanges and mirrors the two masks."""
    mirrored = render_scene(mirror_spec(default_scene_spec()))
    maps = analytic_attention(default_scene.disparity_l, default_scene.occ_l)
    mirrored_maps = analytic_attention(mirrored.disparity_l, mirrored.occ_l)

    v_l, v_r = detect_occlusions(maps)
    mirrored_l, mirrored_r = detect_occlusions(mirrored_maps)

    np.testing.assert_array_equal(mirrored.occ_l, default_scene.occ_r[:, ::-1])
    np.testing.assert_allclose(mirrored_l.values, v_r.values[:, ::-1], atol=1e-6)
    np.testing.assert_allclose(mirrored_r.values, v_l.values[:, ::-1], atol=1e-6)
