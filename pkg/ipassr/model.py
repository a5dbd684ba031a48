"""Stereo super-resolution data model."""

from dataclasses import dataclass, field
from enum import StrEnum
from pathlib import Path
from typing import Self

import numpy as np
from mashumaro import DataClassDictMixin, field_options
from mashumaro.config import BaseConfig
from mashumaro.mixins.json import DataClassJSONMixin

from .const import PSNR_SENTINEL_DB, SUPPORTED_SCALES
from .exceptions import (
    ConfigError,
    SceneSpecError,
    ShapeMismatchError,
    ValueRangeError,
)
from .tensor import Tensor, as_tensor, clamp

__all__ = [
    "Protocol",
    "Pattern",
    "RgbImage",
    "StereoPair",
    "AttentionMaps",
    "ValidMask",
    "MetricReport",
    "LossReport",
    "SceneLayer",
    "SceneSpec",
    "RunConfig",
    "CheckResult",
]

_MASK_TOLERANCE = 1e-6


class Protocol(StrEnum):
    """Evaluation protocol for quality metrics."""

    CROPPED_LEFT = "cropped-left"
    """Left view only, with the leftmost 64 columns removed."""

    STEREO_AVERAGE = "stereo-average"
    """Mean of the left and right metrics on full images."""


class Pattern(StrEnum):
    """Procedural texture of a synthetic scene layer."""

    NOISE = "noise"
    STRIPES = "stripes"
    FLAT = "flat"


@dataclass(frozen=True, eq=False)
class RgbImage:
    """An RGB image with values in [0, 1], clamped on construction."""

    planes: Tensor
    """H×W×3 float32 samples."""

    def __post_init__(self) -> None:
        if self.planes.ndim != 3 or self.planes.shape[2] != 3:
            raise ShapeMismatchError(f"RGB image must be H×W×3, got {self.planes.shape}")
        object.__setattr__(self, "planes", clamp(self.planes))

    @classmethod
    def from_tensor(cls, values: Tensor) -> Self:
        """Build an image from raw values, rejecting non-finite samples."""
        return cls(as_tensor(values))

    @property
    def height(self) -> int:
        return int(self.planes.shape[0])

    @property
    def width(self) -> int:
        return int(self.planes.shape[1])

    def mirrored(self) -> "RgbImage":
        """Horizontally mirrored copy."""
        return RgbImage(np.ascontiguousarray(self.planes[:, ::-1]))


@dataclass(frozen=True, eq=False)
class StereoPair:
    """A rectified left/right pair of equally sized views."""

    left: RgbImage
    right: RgbImage

    def __post_init__(self) -> None:
        if self.left.planes.shape != self.right.planes.shape:
            raise ShapeMismatchError(
                f"Stereo views differ: {self.left.planes.shape} vs {self.right.planes.shape}"
            )

    @property
    def height(self) -> int:
        return self.left.height

    @property
    def width(self) -> int:
        return self.left.width

    def swapped(self) -> "StereoPair":
        """The pair with left and right roles exchanged."""
        return StereoPair(self.right, self.left)

    def mirrored(self) -> "StereoPair":
        """Mirror both views and swap them, which is again a valid stereo pair."""
        return StereoPair(self.right.mirrored(), self.left.mirrored())


@dataclass(frozen=True, eq=False)
class AttentionMaps:
    """Parallax attention maps between the two views of a pair."""

    m_rl: Tensor
    """H×W×W right-to-left map; row (h, w1) distributes over right positions w2."""

    m_lr: Tensor
    """H×W×W left-to-right map."""

    def __post_init__(self) -> None:
        shape = self.m_rl.shape
        if len(shape) != 3 or shape[1] != shape[2]:
            raise ShapeMismatchError(f"Attention maps must be H×W×W, got {shape}")
        if self.m_lr.shape != shape:
            raise ShapeMismatchError(
                f"Attention maps differ: {shape} vs {self.m_lr.shape}"
            )

    @property
    def height(self) -> int:
        return int(self.m_rl.shape[0])

    @property
    def width(self) -> int:
        return int(self.m_rl.shape[1])

    def swapped(self) -> "AttentionMaps":
        """Maps seen from the other view."""
        return AttentionMaps(self.m_lr, self.m_rl)


@dataclass(frozen=True, eq=False)
class ValidMask:
    """Per-pixel occlusion confidence, 0 for occluded and 1 for matched."""

    values: Tensor
    """H×W float32 confidences in [0, 1]."""

    def __post_init__(self) -> None:
        if self.values.ndim != 2:
            raise ShapeMismatchError(f"Valid mask must be H×W, got {self.values.shape}")
        if self.values.size and (
            self.values.min() < -_MASK_TOLERANCE or self.values.max() > 1 + _MASK_TOLERANCE
        ):
            raise ValueRangeError("Valid mask values must lie in [0, 1]")


@dataclass
class MetricReport(DataClassJSONMixin):
    """Image quality of a super-resolved result against ground truth."""

    psnr_db: float
    """Peak signal-to-noise ratio in decibels, the sentinel for identical images."""

    ssim: float
    """Mean structural similarity."""

    protocol: Protocol
    """How the views were cropped and combined."""

    @property
    def psnr_infinite(self) -> bool:
        """Whether the PSNR stands for identical images."""
        return self.psnr_db >= PSNR_SENTINEL_DB


@dataclass
class LossReport(DataClassJSONMixin):
    """Every term of the overall loss and their weighted total."""

    sr: float
    photo_res: float
    cycle_res: float
    smooth: float
    cons_res: float
    total: float
    weight: float = field(metadata=field_options(alias="lambda"))
    """Weight of the regularization terms."""

    class Config(BaseConfig):
        serialize_by_alias = True


@dataclass
class SceneLayer(DataClassDictMixin):
    """A fronto-parallel textured rectangle of a synthetic scene."""

    x: int
    """Left column of the rectangle in left-view coordinates."""

    y: int
    w: int
    h: int
    disparity: int
    """Horizontal shift to the right view, larger is nearer."""

    pattern: Pattern = Pattern.NOISE
    seed: int = 0


@dataclass
class SceneSpec(DataClassDictMixin):
    """A layered synthetic stereo scene."""

    width: int
    height: int
    layers: list[SceneLayer] = field(default_factory=list)
    background_disparity: int = 0
    background_pattern: Pattern = Pattern.NOISE
    background_seed: int = 0
    right_gain: float = 1.0
    """Global photometric gain applied to the right view."""

    def validate(self) -> None:
        """Raise SceneSpecError unless the scene can be rendered."""
        if self.width < 1 or self.height < 1:
            raise SceneSpecError(f"Scene size must be positive, got {self.width}x{self.height}")
        if self.background_disparity < 0:
            raise SceneSpecError("Background disparity must be nonnegative")
        if self.right_gain <= 0:
            raise SceneSpecError("Right view gain must be positive")
        for index, layer in enumerate(self.layers):
            if layer.disparity < 0:
                raise SceneSpecError(f"Layer {index} has negative disparity")
            if layer.w < 1 or layer.h < 1:
                raise SceneSpecError(f"Layer {index} is empty")
            if (
                layer.x < 0
                or layer.y < 0
                or layer.x + layer.w > self.width
                or layer.y + layer.h > self.height
            ):
                raise SceneSpecError(
                    f"Layer {index} rectangle ({layer.x},{layer.y},{layer.w},{layer.h}) "
                    f"is outside the {self.width}x{self.height} image"
                )


@dataclass
class RunConfig(DataClassDictMixin):
    """Arguments of one command line invocation."""

    command: str
    inputs: list[Path] = field(default_factory=list)
    """Input files or directories, validated before any compute."""

    out_dir: Path | None = None
    scale: int = 2
    weights: Path | None = None
    random_weights: bool = False
    protocol: Protocol = Protocol.CROPPED_LEFT
    spec: Path | None = None
    seed: int = 0
    profile_row: int | None = None
    threads: int = 1

    def validate(self) -> None:
        """Raise ConfigError for unusable settings."""
        if self.scale not in SUPPORTED_SCALES:
            raise ConfigError(f"Scale must be one of {SUPPORTED_SCALES}, got {self.scale}")
        if self.threads < 1:
            raise ConfigError(f"Thread count must be at least 1, got {self.threads}")
        for path in self.inputs:
            if not path.exists():
                raise ConfigError(f"Input not found: {path}")
        if self.weights is not None and not self.weights.is_file():
            raise ConfigError(f"Weights file not found: {self.weights}")
        if self.spec is not None and not self.spec.is_file():
            raise ConfigError(f"Scene spec not found: {self.spec}")


@dataclass
class CheckResult(DataClassDictMixin):
    """Outcome of one invariant or oracle check."""

    name: str
    passed: bool
    max_error: float | None = None
    """Largest deviation observed, when the check is numeric."""

    detail: str | None = None
