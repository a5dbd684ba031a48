"""Layered synthetic stereo scenes with exact ground truth.

A scene is a textured background plus fronto-parallel rectangles, each with an
integer disparity. Both views are rendered with a z-buffer (larger disparity is
nearer and wins) so the occlusions of either view are known exactly.

Scenes can be read from a small text file:

```
width = 96
height = 32
background_disparity = 0
# layer = x,y,w,h,disparity,pattern,seed
layer = 16,4,40,24,5,stripes,1
layer = 48,8,32,16,10,noise,2
```
"""

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import numpy as np
import numpy.typing as npt

from .exceptions import SceneSpecError, ShapeMismatchError, ValueRangeError
from .model import AttentionMaps, Pattern, RgbImage, SceneLayer, SceneSpec, StereoPair
from .tensor import Tensor, clamp

__all__ = [
    "ToyScene",
    "parse_scene_spec",
    "load_scene_spec",
    "default_scene_spec",
    "random_scene_spec",
    "mirror_spec",
    "scale_spec",
    "render_scene",
    "analytic_attention",
    "disparity_warp",
    "occlusion_runs",
]

_LOGGER = logging.getLogger(__name__)

BoolMap = npt.NDArray[np.bool_]

_INT_KEYS = ("width", "height", "background_disparity", "background_seed")
_FLOAT_KEYS = ("right_gain",)
_STR_KEYS = ("background_pattern",)
_LAYER_FIELDS = ("x", "y", "w", "h", "disparity", "pattern", "seed")


@dataclass(frozen=True, eq=False)
class ToyScene:
    """A rendered scene with its ground-truth geometry."""

    pair: StereoPair
    disparity_l: Tensor
    """H×W integer-valued disparity of every left pixel."""

    disparity_r: Tensor
    """H×W integer-valued disparity of every right pixel."""

    occ_l: BoolMap
    """Left pixels without a correspondent in the right view."""

    occ_r: BoolMap
    """Right pixels without a correspondent in the left view."""


def _parse_layer(value: str, number: int) -> dict[str, Any]:
    parts = [part.strip() for part in value.split(",")]
    if not 5 <= len(parts) <= len(_LAYER_FIELDS):
        raise SceneSpecError(
            f"line {number}: layer needs x,y,w,h,disparity[,pattern[,seed]], got {value!r}"
        )
    layer: dict[str, Any] = dict(zip(_LAYER_FIELDS, parts))
    try:
        for key in ("x", "y", "w", "h", "disparity", "seed"):
            if key in layer:
                layer[key] = int(layer[key])
    except ValueError as err:
        raise SceneSpecError(f"line {number}: {err}") from err
    return layer


def parse_scene_spec(text: str) -> SceneSpec:
    """Parse key=value scene lines, with one `layer` line per rectangle."""
    values: dict[str, Any] = {}
    layers: list[dict[str, Any]] = []
    for number, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise SceneSpecError(f"line {number}: expected key=value, got {raw.strip()!r}")
        key, value = key.strip(), value.strip()
        if key == "layer":
            layers.append(_parse_layer(value, number))
            continue
        if key in values:
            raise SceneSpecError(f"line {number}: duplicate key {key}")
        try:
            if key in _INT_KEYS:
                values[key] = int(value)
            elif key in _FLOAT_KEYS:
                values[key] = float(value)
            elif key in _STR_KEYS:
                values[key] = value
            else:
                raise SceneSpecError(f"line {number}: unknown key {key}")
        except ValueError as err:
            raise SceneSpecError(f"line {number}: {err}") from err
    values["layers"] = layers
    try:
        spec = SceneSpec.from_dict(values)
    except (LookupError, ValueError) as err:
        raise SceneSpecError(f"Invalid scene spec: {err}") from err
    spec.validate()
    return spec


def load_scene_spec(path: Path) -> SceneSpec:
    """Read a scene file."""
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as err:
        raise SceneSpecError(f"Unable to read scene spec {path}: {err}") from err
    return parse_scene_spec(text)


def default_scene_spec() -> SceneSpec:
    """Background at disparity 0 with two nested objects at disparities 5 and 10."""
    return SceneSpec(
        width=96,
        height=32,
        layers=[
            SceneLayer(x=16, y=4, w=40, h=24, disparity=5, pattern=Pattern.STRIPES, seed=1),
            SceneLayer(x=48, y=8, w=32, h=16, disparity=10, pattern=Pattern.NOISE, seed=2),
        ],
    )


def random_scene_spec(
    seed: int, max_width: int = 64, max_disparity: int = 8
) -> SceneSpec:
    """A random layered scene for randomized oracle checks."""
    rng = np.random.default_rng(seed)
    width = int(rng.integers(24, max_width + 1))
    height = int(rng.integers(6, 13))
    patterns = list(Pattern)
    layers = []
    for _ in range(int(rng.integers(1, 4))):
        w = int(rng.integers(3, width // 2 + 1))
        h = int(rng.integers(1, height + 1))
        layers.append(
            SceneLayer(
                x=int(rng.integers(0, width - w + 1)),
                y=int(rng.integers(0, height - h + 1)),
                w=w,
                h=h,
                disparity=int(rng.integers(0, max_disparity + 1)),
                pattern=patterns[int(rng.integers(len(patterns)))],
                seed=int(rng.integers(1 << 16)),
            )
        )
    return SceneSpec(
        width=width,
        height=height,
        layers=layers,
        background_disparity=int(rng.integers(0, 3)),
        background_seed=int(rng.integers(1 << 16)),
    )


def mirror_spec(spec: SceneSpec) -> SceneSpec:
    """The scene seen with both views mirrored and their roles exchanged.

    A layer at x with disparity d lands at W - x - w + d in the new left view,
    which needs x >= d.
    """
    layers = []
    for index, layer in enumerate(spec.layers):
        if layer.x < layer.disparity:
            raise SceneSpecError(
                f"Layer {index} leaves the right view (x={layer.x} < disparity="
                f"{layer.disparity}) and cannot be mirrored"
            )
        layers.append(
            SceneLayer(
                x=spec.width - layer.x - layer.w + layer.disparity,
                y=layer.y,
                w=layer.w,
                h=layer.h,
                disparity=layer.disparity,
                pattern=layer.pattern,
                seed=layer.seed,
            )
        )
    return SceneSpec(
        width=spec.width,
        height=spec.height,
        layers=layers,
        background_disparity=spec.background_disparity,
        background_pattern=spec.background_pattern,
        background_seed=spec.background_seed,
        right_gain=spec.right_gain,
    )


def scale_spec(spec: SceneSpec, scale: int) -> SceneSpec:
    """Multiply every coordinate, extent and disparity by the scale."""
    if scale < 1:
        raise ValueRangeError(f"Scale must be positive, got {scale}")
    return SceneSpec(
        width=spec.width * scale,
        height=spec.height * scale,
        layers=[
            SceneLayer(
                x=layer.x * scale,
                y=layer.y * scale,
                w=layer.w * scale,
                h=layer.h * scale,
                disparity=layer.disparity * scale,
                pattern=layer.pattern,
                seed=layer.seed,
            )
            for layer in spec.layers
        ],
        background_disparity=spec.background_disparity * scale,
        background_pattern=spec.background_pattern,
        background_seed=spec.background_seed,
        right_gain=spec.right_gain,
    )


def _texture(pattern: Pattern, seed: int, height: int, width: int) -> npt.NDArray[np.float64]:
    """Procedural RGB texture in left-view coordinates."""
    rng = np.random.default_rng(seed)
    if pattern == Pattern.NOISE:
        return rng.uniform(0.1, 0.9, (height, width, 3))
    if pattern == Pattern.STRIPES:
        period = int(rng.integers(2, 6))
        colors = rng.uniform(0.1, 0.9, (2, 3))
        band = (np.arange(width) // period) % 2
        return np.broadcast_to(colors[band][None], (height, width, 3)).copy()
    color = rng.uniform(0.1, 0.9, 3)
    return np.broadcast_to(color, (height, width, 3)).copy()


def render_scene(spec: SceneSpec) -> ToyScene:
    """Render both views with a z-buffer and derive the exact occlusions."""
    spec.validate()
    height, width = spec.height, spec.width
    disparities = [spec.background_disparity] + [layer.disparity for layer in spec.layers]
    # Right pixel w2 of a layer with disparity d shows its texture at w2 + d.
    extent = width + max(disparities)
    textures = np.stack(
        [_texture(spec.background_pattern, spec.background_seed, height, extent)]
        + [_texture(layer.pattern, layer.seed, height, extent) for layer in spec.layers]
    )

    cols = np.arange(width)
    winner_l = np.zeros((height, width), dtype=np.int64)
    winner_r = np.zeros((height, width), dtype=np.int64)
    depth_l = np.full((height, width), spec.background_disparity, dtype=np.int64)
    depth_r = depth_l.copy()
    for index, layer in enumerate(spec.layers, start=1):
        d = layer.disparity
        rows = slice(layer.y, layer.y + layer.h)
        cover_l = (cols >= layer.x) & (cols < layer.x + layer.w)
        cover_r = (cols + d >= layer.x) & (cols + d < layer.x + layer.w)
        for winner, depth, cover in (
            (winner_l, depth_l, cover_l),
            (winner_r, depth_r, cover_r),
        ):
            # Ties go to the later layer.
            take = cover[None, :] & (d >= depth[rows])
            winner[rows][take] = index
            depth[rows][take] = d

    row_index = np.arange(height)[:, None]
    left = textures[winner_l, row_index, cols[None, :]]
    right = textures[winner_r, row_index, cols[None, :] + depth_r] * spec.right_gain

    source = cols[None, :] - depth_l
    occ_l = (source < 0) | (
        winner_r[row_index, np.clip(source, 0, width - 1)] != winner_l
    )
    target = cols[None, :] + depth_r
    occ_r = (target >= width) | (
        winner_l[row_index, np.clip(target, 0, width - 1)] != winner_r
    )
    _LOGGER.debug(
        "Rendered %dx%d scene with %d layers, %d/%d occluded pixels",
        height,
        width,
        len(spec.layers),
        int(occ_l.sum()),
        int(occ_r.sum()),
    )
    return ToyScene(
        pair=StereoPair(
            RgbImage(clamp(left.astype(np.float32))),
            RgbImage(clamp(right.astype(np.float32))),
        ),
        disparity_l=depth_l.astype(np.float32),
        disparity_r=depth_r.astype(np.float32),
        occ_l=occ_l,
        occ_r=occ_r,
    )


def _integer_disparity(disparity_l: Tensor, occ_l: BoolMap) -> npt.NDArray[np.int64]:
    if disparity_l.ndim != 2 or occ_l.shape != disparity_l.shape:
        raise ShapeMismatchError(
            f"Disparity {disparity_l.shape} and occlusion {occ_l.shape} must both be H×W"
        )
    d = np.rint(disparity_l).astype(np.int64)
    if not np.array_equal(d, disparity_l):
        raise ValueRangeError("Disparities must be integer valued")
    return d


def analytic_attention(disparity_l: Tensor, occ_l: BoolMap) -> AttentionMaps:
    """Ideal attention maps of a scene: one-hot on matches, uniform on occlusions."""
    d = _integer_disparity(disparity_l, occ_l)
    height, width = d.shape
    source = np.arange(width)[None, :] - d
    matched = ~occ_l
    if np.any(matched & ((source < 0) | (source >= width))):
        raise ValueRangeError("Non-occluded disparity points outside the right view")
    hh, ww = np.nonzero(matched)
    w2 = source[hh, ww]
    if np.unique(hh * width + w2).size != hh.size:
        raise ValueRangeError("Several left pixels claim the same right pixel")

    m_rl = np.full((height, width, width), 1.0 / width, dtype=np.float32)
    m_rl[hh, ww] = 0.0
    m_rl[hh, ww, w2] = 1.0
    m_lr = np.full((height, width, width), 1.0 / width, dtype=np.float32)
    m_lr[hh, w2] = 0.0
    m_lr[hh, w2, ww] = 1.0
    return AttentionMaps(m_rl=m_rl, m_lr=m_lr)


def disparity_warp(
    right: RgbImage,
    disparity_l: Tensor,
    occ_l: BoolMap,
    fill: RgbImage | None = None,
) -> RgbImage:
    """Fetch right(h, w - d) for every matched left pixel; the rest comes from fill."""
    d = _integer_disparity(disparity_l, occ_l)
    if d.shape != (right.height, right.width):
        raise ShapeMismatchError(
            f"Disparity {d.shape} does not match the {right.height}x{right.width} view"
        )
    out = np.zeros_like(right.planes) if fill is None else fill.planes.copy()
    if out.shape != right.planes.shape:
        raise ShapeMismatchError("Fill image does not match the right view")
    source = np.arange(right.width)[None, :] - d
    hh, ww = np.nonzero(~occ_l & (source >= 0) & (source < right.width))
    out[hh, ww] = right.planes[hh, source[hh, ww]]
    return RgbImage(out)


def occlusion_runs(row: BoolMap) -> list[tuple[int, int]]:
    """(start, length) of every contiguous run of True values in a mask row."""
    padded = np.concatenate(([False], np.asarray(row, dtype=np.bool_), [False]))
    edges = np.flatnonzero(np.diff(padded.astype(np.int8)))
    return [(int(start), int(stop - start)) for start, stop in zip(edges[::2], edges[1::2])]
