"""Sliding-window prediction with Gaussian blending and fold ensembling."""
from __future__ import annotations

import itertools
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import EnsembleMismatchError, InvalidParameterError, ValidationError
from .unet.model import UNet
from .unet.ops import softmax_channels
from .unet.weights import WeightStore
from .volume import Kind, MultiChannelVolume, Volume3D


@dataclass(frozen=True)
class InferenceConfig:
    patch_shape: tuple = (192, 192, 192)
    step_fraction: float = 0.5
    gaussian_sigma_scale: float = 1.0 / 8
    fold_weight_paths: tuple = field(default_factory=tuple)
    threads: int = 1

    def __post_init__(self):
        patch = tuple(int(p) for p in self.patch_shape)
        if len(patch) != 3 or min(patch) < 1:
            raise InvalidParameterError(f"patch_shape must be 3 positive ints, got {self.patch_shape}")
        object.__setattr__(self, "patch_shape", patch)
        object.__setattr__(self, "fold_weight_paths", tuple(str(p) for p in self.fold_weight_paths))
        if not 0 < self.step_fraction <= 1:
            raise InvalidParameterError(f"step_fraction must lie in (0, 1], got {self.step_fraction}")
        if not self.gaussian_sigma_scale > 0:
            raise InvalidParameterError("gaussian_sigma_scale must be > 0")
        if int(self.threads) < 1:
            raise InvalidParameterError("threads must be >= 1")

    def check_divisible(self, divisor):
        if any(p % divisor for p in self.patch_shape):
            raise InvalidParameterError(f"patch_shape {self.patch_shape} must be divisible by {divisor} per axis")


def tile_positions(axis_size: int, patch_size: int, step_fraction: float) -> list[int]:
    """Tile origins along one axis; first at 0, last flush with the end, evenly spread."""
    if not 0 < step_fraction <= 1:
        raise InvalidParameterError(f"step_fraction must lie in (0, 1], got {step_fraction}")
    if axis_size < patch_size:
        raise ValidationError(f"axis of size {axis_size} is smaller than the patch ({patch_size}); pad first")
    span = axis_size - patch_size
    n = math.ceil(span / (patch_size * step_fraction)) + 1
    if n == 1:
        return [0]
    step = span / (n - 1)
    return [int(math.floor(i * step + 0.5)) for i in range(n)]


@dataclass(frozen=True)
class TilePlan:
    axis_origins: tuple
    pad: tuple  # per-axis (low, high)
    patch_shape: tuple

    @property
    def origins(self):
        return list(itertools.product(*self.axis_origins))

    def __len__(self):
        return math.prod(len(a) for a in self.axis_origins)


def padding_for(shape, patch_shape):
    pads = []
    for n, p in zip(shape, patch_shape):
        total = max(0, p - n)
        pads.append((total // 2, total - total // 2))
    return tuple(pads)


def plan_tiles(shape, patch_shape, step_fraction) -> TilePlan:
    pad = padding_for(shape, patch_shape)
    padded = [n + lo + hi for n, (lo, hi) in zip(shape, pad)]
    axes = tuple(tuple(tile_positions(n, p, step_fraction)) for n, p in zip(padded, patch_shape))
    return TilePlan(axes, pad, tuple(patch_shape))


def gaussian_weight_map(patch_shape, sigma_scale=1.0 / 8) -> np.ndarray:
    """Separable Gaussian importance map, peak 1, no zeros.

    The center sits at ``(n - 1) / 2`` so the map is mirror-symmetric; for
    even sizes the two middle voxels share the peak.
    """
    if not sigma_scale > 0:
        raise InvalidParameterError("sigma_scale must be > 0")
    profiles = []
    for n in patch_shape:
        d = np.arange(n) - (n - 1) / 2.0
        sigma = sigma_scale * n
        g = np.exp(-(d**2) / (2 * sigma**2))
        profiles.append(g / g.max())
    w = profiles[0][:, None, None] * profiles[1][None, :, None] * profiles[2][None, None, :]
    w = (w / w.max()).astype(np.float32)
    positive = w[w > 0]
    w[w == 0] = positive.min()
    return w


def _as_model(m):
    if isinstance(m, WeightStore):
        return UNet(m)
    if not callable(m):
        raise ValidationError(f"model must be a WeightStore or callable, got {type(m).__name__}")
    return m


def check_ensemble(models):
    prints = {getattr(m, "fingerprint", None) for m in models}
    prints.discard(None)
    if len(prints) > 1:
        raise EnsembleMismatchError(f"fold weights disagree on architecture: fingerprints {sorted(prints)}")


def _predict_tile(model, padded, origin, patch_shape):
    sl = tuple(slice(o, o + p) for o, p in zip(origin, patch_shape))
    logits = model(padded[(slice(None),) + sl])
    return softmax_channels(logits)


def _windowed_map(pool, fn, items, window):
    # bounds the number of finished-but-unreduced tiles held in memory
    window = max(1, window)
    for i in range(0, len(items), window):
        yield from pool.map(fn, items[i : i + window])


def sliding_window_predict(models, image, cfg: InferenceConfig, pool=None) -> MultiChannelVolume:
    """Per-class probabilities for ``image`` averaged over an ensemble of models.

    ``models`` holds :class:`WeightStore` objects or callables mapping a
    ``(C, pz, py, px)`` patch to logits. Tile predictions are reduced in
    plan order whatever order they were computed in, so output bits do not
    depend on ``cfg.threads`` or on ``pool``. ``pool`` only needs a
    ``map(fn, iterable)`` method returning results in input order.
    """
    if isinstance(models, (WeightStore,)) or callable(models):
        models = [models]
    models = [_as_model(m) for m in models]
    if not models:
        raise ValidationError("at least one model is required")
    check_ensemble(models)
    if isinstance(image, MultiChannelVolume):
        spacing, array = image.spacing, image.stack()
    else:
        spacing, array = None, np.asarray(image, dtype=np.float32)
    for m in models:
        desc = getattr(m, "descriptor", None)
        if desc is not None:
            if array.shape[0] != desc.in_channels:
                raise ValidationError(f"input has {array.shape[0]} channels, model expects {desc.in_channels}")
            cfg.check_divisible(desc.divisor)

    shape = array.shape[1:]
    plan = plan_tiles(shape, cfg.patch_shape, cfg.step_fraction)
    # zero is the normalized-intensity mean
    padded = np.pad(array, ((0, 0),) + plan.pad)
    gauss = gaussian_weight_map(cfg.patch_shape, cfg.gaussian_sigma_scale)
    origins = plan.origins

    weight_acc = np.zeros(padded.shape[1:], dtype=np.float32)
    for o in origins:
        weight_acc[tuple(slice(a, a + p) for a, p in zip(o, cfg.patch_shape))] += gauss

    own_pool = None
    if pool is None and cfg.threads > 1:
        pool = own_pool = ThreadPoolExecutor(max_workers=cfg.threads)
    try:
        total = None
        for model in models:
            prob_acc = None

            def run(origin, model=model):
                return _predict_tile(model, padded, origin, cfg.patch_shape)

            results = map(run, origins) if pool is None else _windowed_map(pool, run, origins, 2 * cfg.threads)
            for origin, prob in zip(origins, results):
                if prob_acc is None:
                    prob_acc = np.zeros((prob.shape[0],) + padded.shape[1:], dtype=np.float32)
                sl = (slice(None),) + tuple(slice(a, a + p) for a, p in zip(origin, cfg.patch_shape))
                prob_acc[sl] += prob * gauss
            fold_prob = prob_acc / weight_acc
            total = fold_prob if total is None else total + fold_prob
    finally:
        if own_pool is not None:
            own_pool.shutdown()

    prob = total / np.float32(len(models))
    crop = (slice(None),) + tuple(slice(lo, lo + n) for (lo, _), n in zip(plan.pad, shape))
    prob = np.clip(prob[crop], 0.0, 1.0)
    if spacing is None:
        return prob
    return MultiChannelVolume.from_array(prob, spacing, Kind.PROBABILITY)


def argmax_mask(prob) -> Volume3D | np.ndarray:
    """Per-voxel most probable class; ties go to the lower class index."""
    if isinstance(prob, MultiChannelVolume):
        arr, spacing = prob.stack(), prob.spacing
    else:
        arr, spacing = np.asarray(prob), None
    if arr.shape[0] < 2:
        raise ValidationError("argmax_mask needs at least two classes")
    labels = np.argmax(arr, axis=0).astype(np.uint8)
    if spacing is None:
        return labels
    return Volume3D(labels, spacing, Kind.LABEL)
