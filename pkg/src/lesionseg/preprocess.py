"""Spacing-aware resampling and two-channel PET/CT input assembly."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import AlignmentError, InvalidInterpolationError, InvalidParameterError
from .interp import NEAREST, TRILINEAR, sample_grid
from .volume import Kind, MultiChannelVolume, Volume3D, check_spacing

TARGET_SPACING = (1.5, 1.01821005, 1.01821005)
INTERPOLATIONS = (TRILINEAR, NEAREST)


@dataclass(frozen=True)
class ResampleSpec:
    target_spacing: tuple = TARGET_SPACING
    interpolation: str = TRILINEAR

    def __post_init__(self):
        object.__setattr__(self, "target_spacing", check_spacing(self.target_spacing))
        if self.interpolation not in INTERPOLATIONS:
            raise InvalidInterpolationError(
                f"interpolation must be one of {INTERPOLATIONS}, got {self.interpolation!r}"
            )


def resampled_shape(shape, old_spacing, new_spacing):
    # half-up rounding; Python's round() would send 0.5 to 0
    return tuple(
        max(1, int(math.floor(n * o / s + 0.5))) for n, o, s in zip(shape, old_spacing, new_spacing)
    )


def _check_mode(volume, mode):
    if mode not in INTERPOLATIONS:
        raise InvalidInterpolationError(f"unknown interpolation {mode!r}")
    if volume.kind is Kind.LABEL and mode != NEAREST:
        raise InvalidInterpolationError("label volumes must be resampled with nearest interpolation")


def resample_to(volume: Volume3D, shape, spacing, mode) -> Volume3D:
    """Resample onto an explicit grid; output index i samples input index i*spacing/old_spacing."""
    _check_mode(volume, mode)
    spacing = check_spacing(spacing)
    shape = tuple(int(n) for n in shape)
    if shape == volume.shape and spacing == volume.spacing:
        return volume
    coords = [np.arange(n) * (s / o) for n, s, o in zip(shape, spacing, volume.spacing)]
    out = sample_grid(volume.data, *coords, mode=mode)
    if volume.kind is Kind.PROBABILITY:
        out = np.clip(out, 0.0, 1.0)
    return Volume3D(out, spacing, volume.kind, volume.orientation if shape == volume.shape else None)


def resample(volume: Volume3D, spec: ResampleSpec) -> Volume3D:
    """Resample ``volume`` to ``spec.target_spacing`` (corner-aligned grids)."""
    if volume.spacing == spec.target_spacing:
        _check_mode(volume, spec.interpolation)
        return volume
    shape = resampled_shape(volume.shape, volume.spacing, spec.target_spacing)
    return resample_to(volume, shape, spec.target_spacing, spec.interpolation)


@dataclass(frozen=True)
class NormStats:
    """Z-score parameters for one channel, with optional clipping applied first."""

    mean: float = 0.0
    std: float = 1.0
    clip_lo: float | None = None
    clip_hi: float | None = None

    def __post_init__(self):
        if not (math.isfinite(self.mean) and math.isfinite(self.std)) or self.std <= 0:
            raise InvalidParameterError(f"normalization needs finite mean and std > 0, got {self}")
        if self.clip_lo is not None and self.clip_hi is not None and self.clip_lo > self.clip_hi:
            raise InvalidParameterError(f"clip_lo {self.clip_lo} > clip_hi {self.clip_hi}")

    def apply(self, data):
        x = data.astype(np.float64)
        if self.clip_lo is not None or self.clip_hi is not None:
            x = np.clip(x, self.clip_lo, self.clip_hi)
        return ((x - self.mean) / self.std).astype(np.float32)


@dataclass(frozen=True)
class NormConfig:
    ct: NormStats = NormStats()
    pet: NormStats = NormStats()


def assemble_input(ct: Volume3D, pet: Volume3D, norm: NormConfig = NormConfig()) -> MultiChannelVolume:
    if ct.shape != pet.shape or ct.spacing != pet.spacing:
        raise AlignmentError(
            f"CT shape {ct.shape} spacing {ct.spacing} does not match "
            f"PET shape {pet.shape} spacing {pet.spacing}"
        )
    channels = (
        Volume3D(norm.ct.apply(ct.data), ct.spacing, Kind.INTENSITY),
        Volume3D(norm.pet.apply(pet.data), pet.spacing, Kind.INTENSITY),
    )
    return MultiChannelVolume(channels, ("CT", "PET"))
