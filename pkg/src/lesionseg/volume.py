"""Dense 3D volumes with physical voxel spacing.

Axis order is ``(z, y, x)`` with x varying fastest, so ``data.ravel()`` is the
z-major flat layout NIfTI stores on disk.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np

from .errors import AlignmentError, InvalidKindError, InvalidSpacingError, ValidationError


class Kind(enum.Enum):
    INTENSITY = "intensity"
    PROBABILITY = "probability"
    LABEL = "label"


_DTYPES = {Kind.INTENSITY: np.float32, Kind.PROBABILITY: np.float32, Kind.LABEL: np.uint8}


def check_spacing(spacing):
    sp = tuple(float(s) for s in spacing)
    if len(sp) != 3:
        raise InvalidSpacingError(f"spacing needs 3 components, got {len(sp)}")
    for s in sp:
        if not math.isfinite(s) or s <= 0:
            raise InvalidSpacingError(f"spacing components must be finite and > 0, got {sp}")
    return sp


def voxel_volume_ml(spacing):
    """Physical volume of one voxel in milliliters (spacing in mm)."""
    sz, sy, sx = check_spacing(spacing)
    return sz * sy * sx / 1000.0


@dataclass(frozen=True, eq=False)
class Volume3D:
    """Immutable scalar grid.

    ``orientation`` is an opaque blob carried through I/O (the NIfTI
    qform/sform fields); nothing in the pipeline interprets it.
    """

    data: np.ndarray
    spacing: tuple
    kind: Kind = Kind.INTENSITY
    orientation: Any = field(default=None, repr=False)

    def __post_init__(self):
        kind = Kind(self.kind)
        spacing = check_spacing(self.spacing)
        arr = np.asarray(self.data)
        if arr.ndim != 3 or min(arr.shape) < 1:
            raise ValidationError(f"volume data must be a non-empty 3D array, got shape {arr.shape}")
        if kind is Kind.LABEL:
            if arr.dtype.kind == "f":
                if not np.all(np.isfinite(arr)) or np.any(arr != np.round(arr)):
                    raise InvalidKindError("label volume values must be integers")
            if arr.size and (arr.min() < 0 or arr.max() > 255):
                raise InvalidKindError("label volume values must lie in [0, 255]")
        arr = np.array(arr, dtype=_DTYPES[kind], order="C", copy=True)
        if kind is Kind.PROBABILITY and arr.size and not (arr.min() >= 0.0 and arr.max() <= 1.0):
            raise InvalidKindError("probability volume values must lie in [0, 1]")
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)
        object.__setattr__(self, "spacing", spacing)
        object.__setattr__(self, "kind", kind)

    @property
    def shape(self):
        return self.data.shape

    @property
    def flat(self):
        return self.data.reshape(-1)

    @classmethod
    def from_flat(cls, values, shape, spacing, kind=Kind.INTENSITY):
        values = np.asarray(values)
        n = int(np.prod(shape))
        if values.size != n:
            raise ValidationError(f"data length {values.size} does not match shape {tuple(shape)} ({n})")
        return cls(values.reshape(tuple(shape)), spacing, kind)

    def with_data(self, data, kind=None, spacing=None):
        """New volume sharing metadata with this one."""
        return Volume3D(
            data,
            self.spacing if spacing is None else spacing,
            self.kind if kind is None else kind,
            self.orientation,
        )

    def equals(self, other):
        return (
            isinstance(other, Volume3D)
            and self.kind is other.kind
            and self.spacing == other.spacing
            and self.data.shape == other.data.shape
            and np.array_equal(self.data, other.data)
        )

    def __eq__(self, other):
        if not isinstance(other, Volume3D):
            return NotImplemented
        return self.equals(other)

    __hash__ = None


def index_at(volume: Volume3D, z: int, y: int, x: int):
    nz, ny, nx = volume.shape
    if not (0 <= z < nz and 0 <= y < ny and 0 <= x < nx):
        raise IndexError(f"index ({z}, {y}, {x}) outside shape {volume.shape}")
    return volume.flat[z * ny * nx + y * nx + x]


@dataclass(frozen=True)
class MultiChannelVolume:
    channels: tuple
    names: tuple

    def __post_init__(self):
        channels = tuple(self.channels)
        names = tuple(self.names)
        if not channels:
            raise ValidationError("a multi-channel volume needs at least one channel")
        if len(names) != len(channels):
            raise ValidationError(f"{len(names)} names for {len(channels)} channels")
        first = channels[0]
        for name, ch in zip(names, channels):
            if ch.shape != first.shape or ch.spacing != first.spacing:
                raise AlignmentError(
                    f"channel {name!r} has shape {ch.shape} spacing {ch.spacing}, "
                    f"expected {first.shape} {first.spacing}"
                )
        object.__setattr__(self, "channels", channels)
        object.__setattr__(self, "names", names)

    @property
    def shape(self):
        return self.channels[0].shape

    @property
    def spacing(self):
        return self.channels[0].spacing

    def __len__(self):
        return len(self.channels)

    def __getitem__(self, name):
        return self.channels[self.names.index(name)]

    def stack(self):
        """Channels as one ``(C, z, y, x)`` float32 array."""
        return np.stack([c.data.astype(np.float32, copy=False) for c in self.channels])

    @classmethod
    def from_array(cls, array, spacing, kind=Kind.INTENSITY, names: Sequence[str] | None = None):
        array = np.asarray(array)
        if names is None:
            names = [f"class{i}" for i in range(array.shape[0])]
        return cls(tuple(Volume3D(a, spacing, kind) for a in array), tuple(names))
