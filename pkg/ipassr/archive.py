"""Named tensor archive holding the full network parameterization.

The file layout is little endian throughout:

- magic `IPSR`, format version (u32), declared scale (u32), tensor count (u32)
- per tensor: name length (u16), UTF-8 name, rank (u8), each extent (u32),
  then the float32 values in row-major order.
"""

import logging
import math
import struct
from collections.abc import Iterator, Mapping
from pathlib import Path

import numpy as np

from .const import (
    ARCHIVE_MAGIC,
    ARCHIVE_VERSION,
    CALAYER_REDUCTION,
    FEATURE_CHANNELS,
    FUSION_GROWTH_RATE,
    GROWTH_RATE,
    RDB_COUNT,
    RDB_LAYERS,
    SUPPORTED_SCALES,
    TRANSITION_GROUPS,
)
from .exceptions import ArchiveError
from .tensor import Tensor

__all__ = [
    "WeightArchive",
    "architecture_slots",
    "dumps",
    "loads",
    "load_archive",
    "save_archive",
    "random_archive",
    "mirror_symmetric",
]

_LOGGER = logging.getLogger(__name__)

_HEADER = struct.Struct("<4sIII")
_NAME_LENGTH = struct.Struct("<H")
_RANK = struct.Struct("<B")

Slots = dict[str, tuple[int, ...]]


def _add_conv(slots: Slots, name: str, k: int, c_in: int, c_out: int) -> None:
    slots[f"{name}.weight"] = (k, k, c_in, c_out)
    slots[f"{name}.bias"] = (c_out,)


def _add_rdb(slots: Slots, prefix: str, channels: int, growth: int) -> None:
    for layer in range(RDB_LAYERS):
        _add_conv(slots, f"{prefix}.conv{layer}", 3, channels + layer * growth, growth)
    _add_conv(slots, f"{prefix}.fusion", 1, channels + RDB_LAYERS * growth, channels)


def architecture_slots(scale: int) -> Slots:
    """Every parameter slot of the network in forward order, with its dims."""
    if scale not in SUPPORTED_SCALES:
        raise ArchiveError(f"Unsupported scale {scale}")
    c = FEATURE_CHANNELS
    hierarchical = RDB_COUNT * c
    slots: Slots = {}
    _add_conv(slots, "conv0", 3, 3, c)
    for block in range(RDB_COUNT):
        _add_rdb(slots, f"extract.rdb{block}", c, GROWTH_RATE)
    for stat in ("scale", "shift", "mean", "var"):
        slots[f"bipam.bn.{stat}"] = (hierarchical,)
    group_in = hierarchical // TRANSITION_GROUPS
    _add_conv(slots, "bipam.resb.conv1", 3, group_in, hierarchical)
    _add_conv(slots, "bipam.resb.conv2", 3, group_in, hierarchical)
    _add_conv(slots, "bipam.query", 1, group_in, c)
    _add_conv(slots, "bipam.key", 1, group_in, c)
    _add_conv(slots, "conv1f", 3, c, c)
    _add_rdb(slots, "fuse.rdb", 2 * c, FUSION_GROWTH_RATE)
    squeezed = 2 * c // CALAYER_REDUCTION
    _add_conv(slots, "fuse.calayer.squeeze", 1, 2 * c, squeezed)
    _add_conv(slots, "fuse.calayer.excite", 1, squeezed, 2 * c)
    _add_conv(slots, "conv2f", 1, 2 * c, c)
    for block in range(RDB_COUNT):
        _add_rdb(slots, f"reconstruct.rdb{block}", c, GROWTH_RATE)
    _add_conv(slots, "conv3f", 3, c, 3 * scale * scale)
    return slots


class WeightArchive:
    """Ordered name to tensor store for one upscaling factor."""

    def __init__(self, scale: int, tensors: Mapping[str, Tensor]) -> None:
        """Initialize WeightArchive."""
        self._scale = scale
        self._tensors = {
            name: np.asarray(t, dtype=np.float32) for name, t in tensors.items()
        }

    @property
    def scale(self) -> int:
        """Upscaling factor the archive was built for."""
        return self._scale

    @property
    def names(self) -> list[str]:
        return list(self._tensors)

    def items(self) -> Iterator[tuple[str, Tensor]]:
        yield from self._tensors.items()

    def __len__(self) -> int:
        return len(self._tensors)

    def __contains__(self, name: object) -> bool:
        return name in self._tensors

    def tensor(self, name: str) -> Tensor:
        """Return the tensor stored under a slot name."""
        try:
            return self._tensors[name]
        except KeyError as err:
            raise ArchiveError(f"missing slot: {name}") from err

    def param_count(self) -> int:
        return sum(int(t.size) for t in self._tensors.values())

    def validate(self) -> None:
        """Check every slot against the topology of the declared scale."""
        slots = architecture_slots(self._scale)
        for name, dims in slots.items():
            t = self.tensor(name)
            if t.shape != dims:
                raise ArchiveError(
                    f"slot {name} has dims {t.shape}, expected {dims} for scale {self._scale}"
                )
        for name in self._tensors:
            if name not in slots:
                raise ArchiveError(f"unexpected slot: {name}")


def dumps(archive: WeightArchive) -> bytes:
    """Encode an archive in the binary file layout."""
    parts = [_HEADER.pack(ARCHIVE_MAGIC, ARCHIVE_VERSION, archive.scale, len(archive))]
    for name, t in archive.items():
        encoded = name.encode("utf-8")
        parts.append(_NAME_LENGTH.pack(len(encoded)))
        parts.append(encoded)
        parts.append(_RANK.pack(t.ndim))
        parts.append(struct.pack(f"<{t.ndim}I", *t.shape))
        parts.append(np.ascontiguousarray(t, dtype="<f4").tobytes())
    return b"".join(parts)


class _Reader:
    """Cursor over an encoded archive."""

    def __init__(self, data: bytes) -> None:
        self._data = data
        self._offset = 0

    def take(self, size: int) -> bytes:
        end = self._offset + size
        if end > len(self._data):
            raise ArchiveError(
                f"truncated archive: needed {size} bytes at offset {self._offset}"
            )
        chunk = self._data[self._offset : end]
        self._offset = end
        return chunk

    def unpack(self, fmt: struct.Struct) -> tuple[int, ...]:
        return fmt.unpack(self.take(fmt.size))

    @property
    def remaining(self) -> int:
        return len(self._data) - self._offset


def loads(data: bytes) -> WeightArchive:
    """Decode and validate an archive from the binary file layout."""
    if data[: len(ARCHIVE_MAGIC)] != ARCHIVE_MAGIC:
        raise ArchiveError("bad magic")
    reader = _Reader(data)
    _, version, scale, count = reader.unpack(_HEADER)
    if version != ARCHIVE_VERSION:
        raise ArchiveError(f"unsupported archive version {version}")
    if scale not in SUPPORTED_SCALES:
        raise ArchiveError(f"unsupported scale {scale}")
    tensors: dict[str, Tensor] = {}
    for _ in range(count):
        (name_length,) = reader.unpack(_NAME_LENGTH)
        try:
            name = reader.take(name_length).decode("utf-8")
        except UnicodeDecodeError as err:
            raise ArchiveError(f"slot name is not UTF-8: {err}") from err
        if name in tensors:
            raise ArchiveError(f"duplicate slot: {name}")
        (rank,) = reader.unpack(_RANK)
        dims = struct.unpack(f"<{rank}I", reader.take(4 * rank))
        size = math.prod(dims)
        if size > reader.remaining // 4:
            raise ArchiveError(
                f"truncated archive: slot {name} needs {size} values, "
                f"{reader.remaining} bytes left"
            )
        values = np.frombuffer(reader.take(4 * size), dtype="<f4")
        tensors[name] = values.reshape(dims).astype(np.float32)
    if reader.remaining:
        raise ArchiveError(f"{reader.remaining} trailing bytes after the last tensor")
    archive = WeightArchive(scale, tensors)
    archive.validate()
    return archive


def save_archive(archive: WeightArchive, path: Path) -> None:
    """Write an archive file."""
    data = dumps(archive)
    try:
        path.write_bytes(data)
    except OSError as err:
        raise ArchiveError(f"Unable to write archive {path}: {err}") from err
    _LOGGER.debug("Saved %d tensors (%d bytes) to %s", len(archive), len(data), path)


def load_archive(path: Path) -> WeightArchive:
    """Read and validate an archive file."""
    try:
        data = path.read_bytes()
    except OSError as err:
        raise ArchiveError(f"Unable to read archive {path}: {err}") from err
    archive = loads(data)
    _LOGGER.debug(
        "Loaded %d tensors for scale %d from %s", len(archive), archive.scale, path
    )
    return archive


def random_archive(scale: int, seed: int = 0, gain: float = 0.5) -> WeightArchive:
    """Deterministic fan-in scaled Gaussian weights for every slot."""
    rng = np.random.default_rng(seed)
    tensors: dict[str, Tensor] = {}
    for name, dims in architecture_slots(scale).items():
        if name.endswith(".weight"):
            fan_in = dims[0] * dims[1] * dims[2]
            values = rng.normal(0.0, gain / np.sqrt(fan_in), dims)
        elif name == "bipam.bn.scale":
            values = 1.0 + 0.1 * rng.standard_normal(dims)
        elif name == "bipam.bn.var":
            values = rng.uniform(0.5, 1.5, dims)
        else:
            values = 0.01 * rng.standard_normal(dims)
        tensors[name] = values.astype(np.float32)
    return WeightArchive(scale, tensors)


def _subpixel_column_flip(scale: int) -> list[int]:
    """Output channel permutation that mirrors the sub-pixel column offset."""
    order = []
    for channel in range(3):
        for dy in range(scale):
            for dx in range(scale):
                order.append(channel * scale * scale + dy * scale + (scale - 1 - dx))
    return order


def mirror_symmetric(archive: WeightArchive) -> WeightArchive:
    """Project the weights onto the subspace where the network commutes with mirroring.

    With the result, super-resolving a mirrored, view-swapped pair gives the
    mirrored, view-swapped output.
    """
    flip = _subpixel_column_flip(archive.scale)
    tensors: dict[str, Tensor] = {}
    for name, t in archive.items():
        mirrored = t
        if name == "conv3f.weight":
            mirrored = t[:, ::-1][..., flip]
        elif name == "conv3f.bias":
            mirrored = t[flip]
        elif name.endswith(".weight"):
            mirrored = t[:, ::-1]
        tensors[name] = np.ascontiguousarray(0.5 * (t + mirrored), dtype=np.float32)
    return WeightArchive(archive.scale, tensors)
