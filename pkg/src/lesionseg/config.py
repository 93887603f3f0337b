"""Pipeline configuration stored as TOML, one section per stage.

Example::

    [preprocess]
    target_spacing = [1.5, 1.01821005, 1.01821005]

    [normalization.CT]
    mean = 0.0
    std = 1.0
    clip_lo = -1000.0
    clip_hi = 1000.0

    [inference]
    patch_shape = [192, 192, 192]
    step_fraction = 0.5
    folds = ["fold_0.unw", "fold_1.unw"]

Relative fold paths are resolved against the config file's directory.
"""
from __future__ import annotations

import sys
from dataclasses import dataclass, field, replace
from pathlib import Path

import tomli_w

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .augment import AugmentParams
from .errors import ConfigError, LesionSegError
from .inference import InferenceConfig
from .metrics import CONNECTIVITIES, DEFAULT_CONNECTIVITY
from .preprocess import NormConfig, NormStats, ResampleSpec


@dataclass(frozen=True)
class PipelineConfig:
    preprocess: ResampleSpec = ResampleSpec()
    normalization: NormConfig = NormConfig()
    inference: InferenceConfig = InferenceConfig()
    augment: AugmentParams = AugmentParams()
    connectivity: int = DEFAULT_CONNECTIVITY
    empty_empty_dice: float = 1.0
    seed: int = 0
    threads: int = 1

    def __post_init__(self):
        if self.connectivity not in CONNECTIVITIES:
            raise ConfigError(f"connectivity must be one of {CONNECTIVITIES}, got {self.connectivity}")
        if self.threads < 1:
            raise ConfigError(f"threads must be >= 1, got {self.threads}")


_SECTIONS = {
    "preprocess": {"target_spacing", "interpolation"},
    "normalization": {"CT", "PET"},
    "inference": {"patch_shape", "step_fraction", "sigma_scale", "folds"},
    "augment": {
        "brightness_mult_range", "brightness_sigma", "gamma_range", "gamma_prob",
        "flip_prob_per_axis", "rotation_range_deg",
    },
    "metrics": {"connectivity", "empty_empty_dice"},
    "run": {"seed", "threads"},
}
_NORM_KEYS = {"mean", "std", "clip_lo", "clip_hi"}


def _reject_unknown(where, mapping, allowed):
    if not isinstance(mapping, dict):
        raise ConfigError(f"[{where}] must be a table")
    unknown = sorted(set(mapping) - allowed)
    if unknown:
        raise ConfigError(f"unknown key(s) in [{where}]: {', '.join(unknown)}")


def from_dict(doc: dict, base_dir=None) -> PipelineConfig:
    _reject_unknown("top level", doc, set(_SECTIONS))
    for name, allowed in _SECTIONS.items():
        _reject_unknown(name, doc.get(name, {}), allowed)
    pre = doc.get("preprocess", {})
    inf = doc.get("inference", {})
    aug = doc.get("augment", {})
    met = doc.get("metrics", {})
    run = doc.get("run", {})
    try:
        norms = {}
        for ch, table in doc.get("normalization", {}).items():
            _reject_unknown(f"normalization.{ch}", table, _NORM_KEYS)
            norms[ch.lower()] = NormStats(**{k: float(v) for k, v in table.items()})
        folds = [str(p) for p in inf.get("folds", [])]
        if base_dir is not None:
            folds = [str(Path(base_dir) / p) if not Path(p).is_absolute() else p for p in folds]
        seed = int(run.get("seed", 0))
        return PipelineConfig(
            preprocess=ResampleSpec(**pre) if pre else ResampleSpec(),
            normalization=NormConfig(**norms),
            inference=InferenceConfig(
                patch_shape=tuple(inf.get("patch_shape", (192, 192, 192))),
                step_fraction=float(inf.get("step_fraction", 0.5)),
                gaussian_sigma_scale=float(inf.get("sigma_scale", 1.0 / 8)),
                fold_weight_paths=tuple(folds),
                threads=int(run.get("threads", 1)),
            ),
            augment=AugmentParams(**{k: tuple(v) if isinstance(v, list) else v for k, v in aug.items()}, seed=seed),
            connectivity=int(met.get("connectivity", DEFAULT_CONNECTIVITY)),
            empty_empty_dice=float(met.get("empty_empty_dice", 1.0)),
            seed=seed,
            threads=int(run.get("threads", 1)),
        )
    except ConfigError:
        raise
    except (LesionSegError, TypeError, ValueError) as exc:
        raise ConfigError(f"invalid configuration: {exc}") from None


def to_dict(cfg: PipelineConfig) -> dict:
    def norm(n: NormStats):
        out = {"mean": n.mean, "std": n.std}
        if n.clip_lo is not None:
            out["clip_lo"] = n.clip_lo
        if n.clip_hi is not None:
            out["clip_hi"] = n.clip_hi
        return out

    a = cfg.augment
    return {
        "preprocess": {
            "target_spacing": list(cfg.preprocess.target_spacing),
            "interpolation": cfg.preprocess.interpolation,
        },
        "normalization": {"CT": norm(cfg.normalization.ct), "PET": norm(cfg.normalization.pet)},
        "inference": {
            "patch_shape": list(cfg.inference.patch_shape),
            "step_fraction": cfg.inference.step_fraction,
            "sigma_scale": cfg.inference.gaussian_sigma_scale,
            "folds": list(cfg.inference.fold_weight_paths),
        },
        "augment": {
            "brightness_mult_range": list(a.brightness_mult_range),
            "brightness_sigma": a.brightness_sigma,
            "gamma_range": list(a.gamma_range),
            "gamma_prob": a.gamma_prob,
            "flip_prob_per_axis": a.flip_prob_per_axis,
            "rotation_range_deg": list(a.rotation_range_deg),
        },
        "metrics": {"connectivity": cfg.connectivity, "empty_empty_dice": cfg.empty_empty_dice},
        "run": {"seed": cfg.seed, "threads": cfg.threads},
    }


def loads(text: str, base_dir=None) -> PipelineConfig:
    try:
        doc = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"malformed TOML: {exc}") from None
    return from_dict(doc, base_dir)


def dumps(cfg: PipelineConfig) -> str:
    return tomli_w.dumps(to_dict(cfg))


def load(path) -> PipelineConfig:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"config file not found: {path}")
    return loads(path.read_text(), base_dir=path.parent)


def with_overrides(cfg: PipelineConfig, **changes) -> PipelineConfig:
    """Apply flat CLI overrides (``None`` values are ignored)."""
    changes = {k: v for k, v in changes.items() if v is not None}
    inf = cfg.inference
    inf_changes = {}
    for key, attr in (("patch_shape", "patch_shape"), ("step_fraction", "step_fraction"),
                      ("sigma_scale", "gaussian_sigma_scale"), ("folds", "fold_weight_paths")):
        if key in changes:
            inf_changes[attr] = changes.pop(key)
    if "threads" in changes:
        inf_changes["threads"] = changes["threads"]
    if "seed" in changes:
        changes["augment"] = replace(cfg.augment, seed=changes["seed"])
    try:
        if inf_changes:
            changes["inference"] = replace(inf, **inf_changes)
        return replace(cfg, **changes)
    except (LesionSegError, TypeError, ValueError) as exc:
        raise ConfigError(f"invalid override: {exc}") from None
