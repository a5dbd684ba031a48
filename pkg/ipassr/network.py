"""Forward pass of the Siamese stereo super-resolution network.

Both views share one set of weights. Each view goes through feature
extraction, the views meet in the attention module, and each view is then
reconstructed from its own features and the features converted from the
other view:

```python
from ipassr.archive import load_archive
from ipassr.imaging import load_png
from ipassr.model import StereoPair
from ipassr.network import ipassr_forward

archive = load_archive(Path("ipassr_4x.bin"))
pair = StereoPair(load_png(Path("0001_L.png")), load_png(Path("0001_R.png")))
result = ipassr_forward(pair, archive)
```
"""

import logging
from dataclasses import dataclass
from typing import Self

from .archive import WeightArchive
from .bipam import BipamOutput, BipamWeights, bipam_forward
from .const import (
    CALAYER_REDUCTION,
    FEATURE_CHANNELS,
    RDB_COUNT,
    RDB_LAYERS,
    SUPPORTED_SCALES,
)
from .exceptions import ArchiveError, ShapeMismatchError
from .model import AttentionMaps, RgbImage, StereoPair, ValidMask
from .tensor import (
    Tensor,
    clamp,
    concat_channels,
    conv2d,
    elementwise_add,
    global_mean_hw,
    leaky_rectify,
    pixel_shuffle,
    sigmoid,
)

__all__ = [
    "ConvWeights",
    "RdbWeights",
    "CaLayerWeights",
    "NetworkWeights",
    "FeatureBundle",
    "ForwardResult",
    "rdb_forward",
    "calayer_forward",
    "extract_features",
    "reconstruct",
    "ipassr_attention",
    "ipassr_forward",
    "param_count",
]

_LOGGER = logging.getLogger(__name__)

MIN_INPUT_SIZE = 8


@dataclass(frozen=True, eq=False)
class ConvWeights:
    """Kernel (k×k×Cin×Cout) and bias of one convolution."""

    weight: Tensor
    bias: Tensor

    @classmethod
    def from_archive(cls, archive: WeightArchive, name: str) -> Self:
        return cls(archive.tensor(f"{name}.weight"), archive.tensor(f"{name}.bias"))

    def __call__(self, x: Tensor) -> Tensor:
        return conv2d(x, self.weight, self.bias)


@dataclass(frozen=True, eq=False)
class RdbWeights:
    """A residual dense block: densely connected 3×3 convs and a 1×1 fusion."""

    convs: tuple[ConvWeights, ...]
    fusion: ConvWeights

    def __post_init__(self) -> None:
        if len(self.convs) != RDB_LAYERS:
            raise ShapeMismatchError(f"RDB needs {RDB_LAYERS} convolutions")
        channels = self.channels
        growth = self.convs[0].weight.shape[3]
        for layer, conv in enumerate(self.convs):
            expected = (3, 3, channels + layer * growth, growth)
            if conv.weight.shape != expected:
                raise ShapeMismatchError(
                    f"RDB conv {layer} has shape {conv.weight.shape}, expected {expected}"
                )
        expected = (1, 1, channels + RDB_LAYERS * growth, channels)
        if self.fusion.weight.shape != expected:
            raise ShapeMismatchError(
                f"RDB fusion has shape {self.fusion.weight.shape}, expected {expected}"
            )

    @property
    def channels(self) -> int:
        return int(self.convs[0].weight.shape[2])

    @classmethod
    def from_archive(cls, archive: WeightArchive, prefix: str) -> Self:
        return cls(
            convs=tuple(
                ConvWeights.from_archive(archive, f"{prefix}.conv{layer}")
                for layer in range(RDB_LAYERS)
            ),
            fusion=ConvWeights.from_archive(archive, f"{prefix}.fusion"),
        )


@dataclass(frozen=True, eq=False)
class CaLayerWeights:
    """Channel attention: squeeze to C / r channels, excite back to C."""

    squeeze: ConvWeights
    excite: ConvWeights

    @classmethod
    def from_archive(cls, archive: WeightArchive, prefix: str) -> Self:
        return cls(
            squeeze=ConvWeights.from_archive(archive, f"{prefix}.squeeze"),
            excite=ConvWeights.from_archive(archive, f"{prefix}.excite"),
        )


def _bipam_from_archive(archive: WeightArchive) -> BipamWeights:
    return BipamWeights(
        bn_scale=archive.tensor("bipam.bn.scale"),
        bn_shift=archive.tensor("bipam.bn.shift"),
        bn_mean=archive.tensor("bipam.bn.mean"),
        bn_var=archive.tensor("bipam.bn.var"),
        resb_conv1_weight=archive.tensor("bipam.resb.conv1.weight"),
        resb_conv1_bias=archive.tensor("bipam.resb.conv1.bias"),
        resb_conv2_weight=archive.tensor("bipam.resb.conv2.weight"),
        resb_conv2_bias=archive.tensor("bipam.resb.conv2.bias"),
        query_weight=archive.tensor("bipam.query.weight"),
        query_bias=archive.tensor("bipam.query.bias"),
        key_weight=archive.tensor("bipam.key.weight"),
        key_bias=archive.tensor("bipam.key.bias"),
    )


@dataclass(frozen=True, eq=False)
class NetworkWeights:
    """Typed view of a weight archive, read once and shared by both branches."""

    scale: int
    conv0: ConvWeights
    extract: tuple[RdbWeights, ...]
    bipam: BipamWeights
    conv1f: ConvWeights
    rdb_f: RdbWeights
    calayer: CaLayerWeights
    conv2f: ConvWeights
    reconstruct: tuple[RdbWeights, ...]
    conv3f: ConvWeights

    @classmethod
    def from_archive(cls, archive: WeightArchive) -> Self:
        """Read every slot of the archive exactly once."""
        if archive.scale not in SUPPORTED_SCALES:
            raise ArchiveError(f"Unsupported scale {archive.scale}")
        weights = cls(
            scale=archive.scale,
            conv0=ConvWeights.from_archive(archive, "conv0"),
            extract=tuple(
                RdbWeights.from_archive(archive, f"extract.rdb{block}")
                for block in range(RDB_COUNT)
            ),
            bipam=_bipam_from_archive(archive),
            conv1f=ConvWeights.from_archive(archive, "conv1f"),
            rdb_f=RdbWeights.from_archive(archive, "fuse.rdb"),
            calayer=CaLayerWeights.from_archive(archive, "fuse.calayer"),
            conv2f=ConvWeights.from_archive(archive, "conv2f"),
            reconstruct=tuple(
                RdbWeights.from_archive(archive, f"reconstruct.rdb{block}")
                for block in range(RDB_COUNT)
            ),
            conv3f=ConvWeights.from_archive(archive, "conv3f"),
        )
        expected_out = 3 * archive.scale * archive.scale
        if weights.conv3f.weight.shape[3] != expected_out:
            raise ArchiveError(
                f"slot conv3f.weight has {weights.conv3f.weight.shape[3]} outputs, "
                f"expected {expected_out} for scale {archive.scale}"
            )
        return weights


@dataclass(frozen=True, eq=False)
class FeatureBundle:
    """Features of one view after extraction."""

    initial: Tensor
    """Conv-0 output, H×W×64."""

    blocks: tuple[Tensor, ...]
    """Outputs of the four cascaded RDBs."""

    concat: Tensor
    """Channel concatenation of the RDB outputs, H×W×256."""

    conv1f: Tensor
    """Conv-1f applied to the last RDB output, H×W×64."""


@dataclass(frozen=True, eq=False)
class ForwardResult:
    """Super-resolved pair together with the attention evidence used for it."""

    sr: StereoPair
    maps: AttentionMaps
    v_l: ValidMask
    v_r: ValidMask


def rdb_forward(x: Tensor, w: RdbWeights) -> Tensor:
    """Residual dense block: each conv sees the input and all earlier outputs."""
    if x.ndim != 3 or x.shape[2] != w.channels:
        raise ShapeMismatchError(
            f"RDB expects {w.channels} channels, got input of shape {x.shape}"
        )
    features = x
    for conv in w.convs:
        features = concat_channels(features, leaky_rectify(conv(features)))
    return elementwise_add(w.fusion(features), x)


def calayer_forward(x: Tensor, w: CaLayerWeights) -> Tensor:
    """Scale each channel by a gate computed from globally pooled features."""
    channels = w.excite.weight.shape[3]
    if x.ndim != 3 or x.shape[2] != channels:
        raise ShapeMismatchError(f"CALayer expects {channels} channels, got {x.shape}")
    if w.squeeze.weight.shape[3] * CALAYER_REDUCTION != channels:
        _LOGGER.debug(
            "CALayer squeezes %d channels to %d", channels, w.squeeze.weight.shape[3]
        )
    gate = sigmoid(w.excite(leaky_rectify(w.squeeze(global_mean_hw(x)))))
    return (x * gate).astype(x.dtype)


def extract_features(img: RgbImage, w: NetworkWeights) -> FeatureBundle:
    """Shared-weight feature extraction of a single view."""
    initial = w.conv0(img.planes)
    blocks = []
    features = initial
    for rdb in w.extract:
        features = rdb_forward(features, rdb)
        blocks.append(features)
    return FeatureBundle(
        initial=initial,
        blocks=tuple(blocks),
        concat=concat_channels(*blocks),
        conv1f=w.conv1f(features),
    )


def reconstruct(fused: Tensor, f_target: Tensor, w: NetworkWeights) -> RgbImage:
    """Fuse converted and own features, then upscale with a sub-pixel layer."""
    if fused.shape != f_target.shape or fused.shape[2] != FEATURE_CHANNELS:
        raise ShapeMismatchError(
            f"Reconstruction needs two H×W×{FEATURE_CHANNELS} inputs, "
            f"got {fused.shape} and {f_target.shape}"
        )
    features = rdb_forward(concat_channels(fused, f_target), w.rdb_f)
    features = w.conv2f(calayer_forward(features, w.calayer))
    for rdb in w.reconstruct:
        features = rdb_forward(features, rdb)
    upscaled = pixel_shuffle(w.conv3f(features), w.scale)
    return RgbImage(clamp(upscaled))


def _interact(
    pair: StereoPair, archive: WeightArchive
) -> tuple[NetworkWeights, FeatureBundle, FeatureBundle, BipamOutput]:
    if pair.height < MIN_INPUT_SIZE or pair.width < MIN_INPUT_SIZE:
        raise ShapeMismatchError(
            f"Input must be at least {MIN_INPUT_SIZE}x{MIN_INPUT_SIZE}, "
            f"got {pair.height}x{pair.width}"
        )
    w = NetworkWeights.from_archive(archive)
    feats_l = extract_features(pair.left, w)
    feats_r = extract_features(pair.right, w)
    interaction = bipam_forward(
        feats_l.concat, feats_r.concat, feats_l.conv1f, feats_r.conv1f, w.bipam
    )
    return w, feats_l, feats_r, interaction


def ipassr_attention(pair: StereoPair, archive: WeightArchive) -> BipamOutput:
    """Attention maps and valid masks of a pair, without reconstruction."""
    _LOGGER.debug("Matching %dx%d pair", pair.height, pair.width)
    return _interact(pair, archive)[3]


def ipassr_forward(pair: StereoPair, archive: WeightArchive) -> ForwardResult:
    """Super-resolve both views of a pair in a single pass."""
    _LOGGER.debug("Super-resolving %dx%d pair", pair.height, pair.width)
    w, feats_l, feats_r, interaction = _interact(pair, archive)
    return ForwardResult(
        sr=StereoPair(
            reconstruct(interaction.fused_l, feats_l.conv1f, w),
            reconstruct(interaction.fused_r, feats_r.conv1f, w),
        ),
        maps=interaction.maps,
        v_l=interaction.v_l,
        v_r=interaction.v_r,
    )


def param_count(archive: WeightArchive) -> int:
    """Number of scalar parameters stored in an archive."""
    return archive.param_count()
