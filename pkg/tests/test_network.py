"""Tests for the network forward pass."""

from collections import Counter
from unittest.mock import patch

import numpy as np
import pytest

from ipassr.archive import WeightArchive, architecture_slots, random_archive
from ipassr.exceptions import ArchiveError, ShapeMismatchError
from ipassr.model import RgbImage, StereoPair
from ipassr.network import (
    CaLayerWeights,
    ConvWeights,
    NetworkWeights,
    RdbWeights,
    calayer_forward,
    extract_features,
    ipassr_attention,
    ipassr_forward,
    rdb_forward,
    reconstruct,
)
from ipassr.selftest import reference_conv2d
from ipassr.tensor import Tensor, leaky_rectify, sigmoid

from .conftest import random_image, random_pair


class CountingArchive(WeightArchive):
    """Archive recording every slot lookup."""

    def __init__(self, archive: WeightArchive) -> None:
        super().__init__(archive.scale, dict(archive.items()))
        self.reads: Counter[str] = Counter()

    def tensor(self, name: str) -> Tensor:
        self.reads[name] += 1
        return super().tensor(name)


def conv(rng: np.random.Generator | None, k: int, c_in: int, c_out: int) -> ConvWeights:
    if rng is None:
        return ConvWeights(
            np.zeros((k, k, c_in, c_out), dtype=np.float32),
            np.zeros(c_out, dtype=np.float32),
        )
    return ConvWeights(
        rng.normal(0, 0.3, (k, k, c_in, c_out)).astype(np.float32),
        rng.normal(0, 0.1, c_out).astype(np.float32),
    )


def rdb(rng: np.random.Generator | None, channels: int, growth: int) -> RdbWeights:
    return RdbWeights(
        convs=tuple(conv(rng, 3, channels + layer * growth, growth) for layer in range(4)),
        fusion=conv(rng, 1, channels + 4 * growth, channels),
    )


def test_zero_rdb_is_identity(rng: np.random.Generator) -> None:
    """Test the residual connection passes the input through zero weights."""
    x = rng.normal(size=(4, 5, 6)).astype(np.float32)

    out = rdb_forward(x, rdb(None, 6, 3))

    np.testing.assert_array_equal(out, x)


def test_rdb_matches_reference(rng: np.random.Generator) -> None:
    """Test the dense connectivity against a direct loop evaluation."""
    x = rng.normal(size=(3, 4, 2)).astype(np.float32)
    weights = rdb(rng, 2, 2)

    out = rdb_forward(x, weights)

    features = x.astype(np.float64)
    for layer in weights.convs:
        grown = reference_conv2d(features.astype(np.float32), layer.weight, layer.bias)
        grown = np.where(grown >= 0, grown, 0.1 * grown)
        features = np.concatenate([features, grown], axis=2)
    fused = reference_conv2d(
        features.astype(np.float32), weights.fusion.weight, weights.fusion.bias
    )
    np.testing.assert_allclose(out, fused + x, atol=1e-5)


def test_rdb_validation(rng: np.random.Generator) -> None:
    """Test inconsistent block parameters are rejected."""
    weights = rdb(rng, 4, 2)

    with pytest.raises(ShapeMismatchError):
        RdbWeights(convs=weights.convs[:3], fusion=weights.fusion)
    with pytest.raises(ShapeMismatchError):
        RdbWeights(convs=weights.convs, fusion=conv(rng, 1, 12, 3))
    with pytest.raises(ShapeMismatchError):
        rdb_forward(np.zeros((3, 3, 5), dtype=np.float32), weights)


def test_calayer_zero_weights(rng: np.random.Generator) -> None:
    """Test a zero gate input halves every feature."""
    x = rng.normal(size=(3, 4, 32)).astype(np.float32)
    weights = CaLayerWeights(squeeze=conv(None, 1, 32, 2), excite=conv(None, 1, 2, 32))

    np.testing.assert_array_equal(calayer_forward(x, weights), 0.5 * x)


def test_calayer_gate(rng: np.random.Generator) -> None:
    """Test the gate is computed from the spatial mean of each channel."""
    x = rng.normal(size=(3, 4, 32)).astype(np.float32)
    weights = CaLayerWeights(squeeze=conv(rng, 1, 32, 2), excite=conv(rng, 1, 2, 32))

    out = calayer_forward(x, weights)

    mean = x.astype(np.float64).mean(axis=(0, 1))
    hidden = mean @ weights.squeeze.weight[0, 0] + weights.squeeze.bias
    hidden = leaky_rectify(hidden.astype(np.float32))
    logits = hidden @ weights.excite.weight[0, 0] + weights.excite.bias
    gate = sigmoid(logits.astype(np.float32))
    np.testing.assert_allclose(out, x * gate, atol=1e-5)
    with pytest.raises(ShapeMismatchError):
        calayer_forward(x[..., :16], weights)


def test_extract_features(rng: np.random.Generator, archive: WeightArchive) -> None:
    """Test the hierarchical features of one view."""
    weights = NetworkWeights.from_archive(archive)

    bundle = extract_features(random_image(rng, 5, 6), weights)

    assert bundle.initial.shape == (5, 6, 64)
    assert len(bundle.blocks) == 4
    assert bundle.concat.shape == (5, 6, 256)
    assert bundle.conv1f.shape == (5, 6, 64)
    np.testing.assert_array_equal(bundle.concat[..., 192:], bundle.blocks[3])


def test_reconstruct_shape_errors(archive: WeightArchive) -> None:
    """Test reconstruction needs two matching 64-channel inputs."""
    weights = NetworkWeights.from_archive(archive)
    features = np.zeros((4, 4, 64), dtype=np.float32)

    assert reconstruct(features, features, weights).planes.shape == (8, 8, 3)
    with pytest.raises(ShapeMismatchError):
        reconstruct(features, features[:, :3], weights)
    with pytest.raises(ShapeMismatchError):
        reconstruct(features[..., :32], features[..., :32], weights)


def test_forward_shapes(rng: np.random.Generator, archive: WeightArchive) -> None:
    """Test output dims, map shapes and value ranges of a 2x pass."""
    pair = random_pair(rng, 8, 12)

    result = ipassr_forward(pair, archive)

    assert (result.sr.height, result.sr.width) == (16, 24)
    assert result.maps.m_rl.shape == (8, 12, 12)
    assert result.v_l.values.shape == (8, 12)
    for view in (result.sr.left, result.sr.right):
        assert float(view.planes.min()) >= 0.0
        assert float(view.planes.max()) <= 1.0
    np.testing.assert_allclose(result.maps.m_rl.sum(axis=-1), 1.0, atol=1e-6)


def test_forward_4x(rng: np.random.Generator) -> None:
    """Test a 4x archive quadruples both dims."""
    result = ipassr_forward(random_pair(rng, 8, 8), random_archive(4, seed=1))

    assert (result.sr.height, result.sr.width) == (32, 32)


def test_forward_is_deterministic(
    rng: np.random.Generator, archive: WeightArchive
) -> None:
    """Test two passes give bit-identical outputs."""
    pair = random_pair(rng, 8, 10)

    first = ipassr_forward(pair, archive)
    second = ipassr_forward(pair, archive)

    np.testing.assert_array_equal(first.sr.left.planes, second.sr.left.planes)
    np.testing.assert_array_equal(first.sr.right.planes, second.sr.right.planes)
    np.testing.assert_array_equal(first.maps.m_lr, second.maps.m_lr)


def test_reads_every_slot_once(rng: np.random.Generator, archive: WeightArchive) -> None:
    """Test both branches share one read of the weights."""
    counting = CountingArchive(archive)

    ipassr_forward(random_pair(rng, 8, 8), counting)

    assert set(counting.reads) == set(architecture_slots(2))
    assert set(counting.reads.values()) == {1}


def test_zero_weights_closed_form(rng: np.random.Generator, archive: WeightArchive) -> None:
    """Test all-zero weights reduce the network to the upsampler bias."""
    tensors = {name: np.zeros_like(t) for name, t in archive.items()}
    tensors["bipam.bn.var"] = np.ones(256, dtype=np.float32)
    bias = np.linspace(0.0, 1.0, 12, dtype=np.float32)
    tensors["conv3f.bias"] = bias

    result = ipassr_forward(random_pair(rng, 8, 8), WeightArchive(2, tensors))

    expected = bias.reshape(3, 2, 2).transpose(1, 2, 0)
    for view in (result.sr.left, result.sr.right):
        np.testing.assert_allclose(view.planes[:2, :2], expected, atol=1e-7)
        np.testing.assert_allclose(view.planes[6:8, 10:12], expected, atol=1e-7)


def test_input_too_small(rng: np.random.Generator, archive: WeightArchive) -> None:
    """Test views below 8x8 are rejected."""
    with pytest.raises(ShapeMismatchError, match="at least 8x8"):
        ipassr_forward(random_pair(rng, 7, 12), archive)


def test_swap_symmetry(rng: np.random.Generator, archive: WeightArchive) -> None:
    """Test exchanging the inputs exchanges the outputs."""
    pair = random_pair(rng, 8, 10)

    out = ipassr_forward(pair, archive)
    swapped = ipassr_forward(pair.swapped(), archive)

    np.testing.assert_allclose(swapped.sr.left.planes, out.sr.right.planes, atol=1e-5)
    np.testing.assert_allclose(swapped.sr.right.planes, out.sr.left.planes, atol=1e-5)
    np.testing.assert_allclose(swapped.v_l.values, out.v_r.values, atol=1e-5)


def test_mirror_equivariance(
    rng: np.random.Generator, symmetric_archive: WeightArchive
) -> None:
    """Test mirroring and swapping the views commutes with the network."""
    pair = random_pair(rng, 8, 10)

    out = ipassr_forward(pair, symmetric_archive)
    mirrored = ipassr_forward(pair.mirrored(), symmetric_archive)

    expected = out.sr.mirrored()
    np.testing.assert_allclose(mirrored.sr.left.planes, expected.left.planes, atol=1e-5)
    np.testing.assert_allclose(mirrored.sr.right.planes, expected.right.planes, atol=1e-5)


def test_identical_views(rng: np.random.Generator, archive: WeightArchive) -> None:
    """Test identical views give identical outputs and symmetric maps."""
    img = random_image(rng, 8, 10)

    out = ipassr_forward(StereoPair(img, RgbImage(img.planes.copy())), archive)

    np.testing.assert_allclose(out.sr.left.planes, out.sr.right.planes, atol=1e-5)
    np.testing.assert_allclose(out.maps.m_rl, out.maps.m_lr, atol=1e-6)


def test_missing_slot(rng: np.random.Generator, archive: WeightArchive) -> None:
    """Test an incomplete archive names the missing slot."""
    tensors = {n: t for n, t in archive.items() if n != "fuse.calayer.excite.bias"}

    with pytest.raises(ArchiveError, match="missing slot: fuse.calayer.excite.bias"):
        ipassr_forward(random_pair(rng, 8, 8), WeightArchive(2, tensors))


def test_upsampler_scale_mismatch(archive: WeightArchive) -> None:
    """Test a 2x upsampler declared as 4x is rejected."""
    with pytest.raises(ArchiveError, match="expected 48 for scale 4"):
        NetworkWeights.from_archive(WeightArchive(4, dict(archive.items())))


def test_attention_only(rng: np.random.Generator, archive: WeightArchive) -> None:
    """Test the attention pass matches the full pass without reconstructing."""
    pair = random_pair(rng, 8, 10)
    full = ipassr_forward(pair, archive)

    with patch("ipassr.network.reconstruct", side_effect=AssertionError("reconstructed")):
        out = ipassr_attention(pair, archive)

    np.testing.assert_array_equal(out.maps.m_rl, full.maps.m_rl)
    np.testing.assert_array_equal(out.v_l.values, full.v_l.values)
    np.testing.assert_array_equal(out.v_r.values, full.v_r.values)
    with pytest.raises(ShapeMismatchError, match="at least 8x8"):
        ipassr_attention(random_pair(rng, 8, 7), archive)
