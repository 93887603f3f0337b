"""Seedable intensity and spatial augmentations for PET/CT training patches.

Random numbers come from numpy's Philox counter-based generator, seeded with
a 64-bit integer, so a seed reproduces a plan on any platform. Draw order in
:func:`sample_plan` is fixed: multiplier, noise seed, gamma coin, gamma
exponent, three flip coins (z, y, x), three angles (z, y, x).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import InvalidInterpolationError, InvalidKindError, InvalidParameterError
from .interp import NEAREST, TRILINEAR, sample_points
from .volume import Kind, MultiChannelVolume, Volume3D


def make_rng(seed) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(int(seed) & 0xFFFFFFFFFFFFFFFF))


@dataclass(frozen=True)
class AugmentParams:
    brightness_mult_range: tuple = (0.75, 1.25)
    brightness_sigma: float = 0.10
    gamma_range: tuple = (0.70, 1.50)
    gamma_prob: float = 0.30
    flip_prob_per_axis: float = 0.5
    rotation_range_deg: tuple = (-15.0, 15.0)
    seed: int = 0

    def __post_init__(self):
        for name in ("brightness_mult_range", "gamma_range", "rotation_range_deg"):
            lo, hi = getattr(self, name)
            if not (math.isfinite(lo) and math.isfinite(hi)) or lo > hi:
                raise InvalidParameterError(f"{name} must be a finite (lo, hi) with lo <= hi, got {(lo, hi)}")
            object.__setattr__(self, name, (float(lo), float(hi)))
        for name in ("gamma_prob", "flip_prob_per_axis"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise InvalidParameterError(f"{name} must lie in [0, 1], got {p}")
        if not self.brightness_sigma >= 0:
            raise InvalidParameterError(f"brightness_sigma must be >= 0, got {self.brightness_sigma}")
        if self.gamma_range[0] <= 0:
            raise InvalidParameterError("gamma_range must be positive")


@dataclass(frozen=True)
class AugmentationPlan:
    m: float
    additive_noise_seed: int
    apply_gamma: bool
    gamma: float
    flips: tuple
    angles_deg: tuple


def sample_plan(params: AugmentParams, rng: np.random.Generator | None = None) -> AugmentationPlan:
    """Draw one augmentation realisation; ``rng`` defaults to a fresh stream from ``params.seed``."""
    if rng is None:
        rng = make_rng(params.seed)
    m = rng.uniform(*params.brightness_mult_range)
    noise_seed = int(rng.integers(0, 2**63 - 1))
    apply_gamma = bool(rng.random() < params.gamma_prob)
    # always drawn so the stream stays aligned whether or not gamma applies
    gamma_value = rng.uniform(*params.gamma_range)
    flips = tuple(bool(rng.random() < params.flip_prob_per_axis) for _ in range(3))
    angles = tuple(float(rng.uniform(*params.rotation_range_deg)) for _ in range(3))
    return AugmentationPlan(float(m), noise_seed, apply_gamma, float(gamma_value), flips, angles)


def _require_intensity(volume, op):
    if volume.kind is not Kind.INTENSITY:
        raise InvalidKindError(f"{op} needs an intensity volume, got {volume.kind.value}")


def brightness(volume: Volume3D, m: float, sigma: float, noise_seed: int = 0) -> Volume3D:
    """``x * m + n`` with i.i.d. per-voxel ``n ~ N(0, sigma)``."""
    _require_intensity(volume, "brightness")
    if not sigma >= 0:
        raise InvalidParameterError(f"sigma must be >= 0, got {sigma}")
    out = volume.data.astype(np.float64) * m
    if sigma > 0:
        out += make_rng(noise_seed).normal(0.0, sigma, size=volume.shape)
    return volume.with_data(out)


def gamma(volume: Volume3D, exponent: float) -> Volume3D:
    if not exponent > 0:
        raise InvalidParameterError(f"gamma exponent must be > 0, got {exponent}")
    _require_intensity(volume, "gamma")
    x = volume.data.astype(np.float64)
    lo, hi = x.min(), x.max()
    if exponent == 1.0 or hi <= lo:
        return volume
    u = (x - lo) / (hi - lo)
    out = np.power(u, 1.0 / exponent) * (hi - lo) + lo
    # pin the extremes so float rounding cannot move them
    out[x == lo] = lo
    out[x == hi] = hi
    return volume.with_data(np.clip(out, lo, hi))


def flip(volume: Volume3D, axes=(False, False, False)) -> Volume3D:
    flagged = tuple(i for i, f in enumerate(axes) if f)
    if not flagged:
        return volume
    return volume.with_data(np.flip(volume.data, axis=flagged))


def rotation_matrix(angles_deg) -> np.ndarray:
    """Rotation acting on ``(z, y, x)`` physical offsets; z-rotation applied first, then y, then x."""
    az, ay, ax = np.deg2rad(np.asarray(angles_deg, dtype=np.float64))
    cz, sz = math.cos(az), math.sin(az)
    cy, sy = math.cos(ay), math.sin(ay)
    cx, sx = math.cos(ax), math.sin(ax)
    rz = np.array([[1, 0, 0], [0, cz, -sz], [0, sz, cz]])  # turns the (y, x) plane
    ry = np.array([[cy, 0, sy], [0, 1, 0], [-sy, 0, cy]])  # turns the (z, x) plane
    rx = np.array([[cx, -sx, 0], [sx, cx, 0], [0, 0, 1]])  # turns the (z, y) plane
    return rx @ ry @ rz


_ROTATE_CHUNK = 1 << 21


def rotate(volume: Volume3D, angles_deg=(0.0, 0.0, 0.0), interpolation=TRILINEAR) -> Volume3D:
    """Rotate about the grid center in physical (mm) space, resampling onto the same grid.

    Samples falling outside the volume take the nearest edge value.
    """
    if interpolation not in (TRILINEAR, NEAREST):
        raise InvalidInterpolationError(f"unknown interpolation {interpolation!r}")
    if volume.kind is Kind.LABEL and interpolation != NEAREST:
        raise InvalidInterpolationError("label volumes must be rotated with nearest interpolation")
    if not any(angles_deg):
        return volume
    inv = rotation_matrix(angles_deg).T
    spacing = np.asarray(volume.spacing)
    center = (np.asarray(volume.shape) - 1) / 2.0
    # output offset p (mm) pulls from source offset inv @ p
    m = inv * spacing[None, :] / spacing[:, None]
    nz, ny, nx = volume.shape
    yy, xx = np.meshgrid(np.arange(ny) - center[1], np.arange(nx) - center[2], indexing="ij")
    plane = np.stack([np.zeros(yy.size), yy.ravel(), xx.ravel()])
    out = np.empty(volume.shape, dtype=np.float64)
    step = max(1, _ROTATE_CHUNK // (ny * nx))
    for z0 in range(0, nz, step):
        zs = np.arange(z0, min(nz, z0 + step)) - center[0]
        pts = np.tile(plane, (1, zs.size))
        pts[0] = np.repeat(zs, ny * nx)
        src = m @ pts + center[:, None]
        out[z0 : z0 + zs.size] = sample_points(volume.data, src, interpolation).reshape(zs.size, ny, nx)
    return volume.with_data(out)


def apply_plan(volume: Volume3D, plan: AugmentationPlan, sigma: float = 0.10) -> Volume3D:
    """Apply a sampled plan: intensity transforms (intensity volumes only), then flip, then rotation."""
    vol = volume
    if vol.kind is Kind.INTENSITY:
        vol = brightness(vol, plan.m, sigma, plan.additive_noise_seed)
        if plan.apply_gamma:
            vol = gamma(vol, plan.gamma)
    vol = flip(vol, plan.flips)
    mode = NEAREST if vol.kind is Kind.LABEL else TRILINEAR
    return rotate(vol, plan.angles_deg, mode)


def augment_case(image: MultiChannelVolume, seg: Volume3D | None, params: AugmentParams):
    """Augment PET/CT channels and mask with one shared spatial transform.

    Each channel gets its own brightness noise stream derived from the plan's
    noise seed; flips and rotation are identical across channels and mask.
    """
    plan = sample_plan(params)
    seeds = np.random.SeedSequence(plan.additive_noise_seed).generate_state(len(image), dtype=np.uint64)
    channels = []
    for ch, s in zip(image.channels, seeds):
        channels.append(apply_plan(ch, replace(plan, additive_noise_seed=int(s)), params.brightness_sigma))
    out_seg = apply_plan(seg, plan) if seg is not None else None
    return MultiChannelVolume(tuple(channels), image.names), out_seg, plan
