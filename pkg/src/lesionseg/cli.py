"""``lesionseg`` command line entry point.

Logs are JSON lines on stderr. Results go to stdout or the ``--out`` paths.
Failures print exactly one JSON line on stderr and exit with:

    2  usage error
    3  input file or directory missing
    4  malformed configuration
    5  malformed NIfTI or UNW1 file
    6  invalid data or parameters (shape, spacing, mask, metric errors)
    1  anything else
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
import time
from dataclasses import asdict, replace
from pathlib import Path

import numpy as np

from . import _accel, augment, config, inference, metrics, nifti, preprocess
from .errors import ConfigError, LesionSegError, ValidationError
from .unet import (
    PRESETS,
    ArchDescriptor,
    format_millions,
    layer_inventory,
    param_count,
    peak_activation_bytes,
    read_weights_file,
)
from .volume import Kind, MultiChannelVolume, Volume3D

log = logging.getLogger("lesionseg")

EXIT_OK = 0
EXIT_OTHER = 1
EXIT_USAGE = 2
EXIT_MISSING = 3


class JsonFormatter(logging.Formatter):
    def format(self, record):
        entry = {"level": record.levelname.lower(), "event": record.getMessage()}
        entry.update(getattr(record, "fields", {}))
        return json.dumps(entry, sort_keys=True)


def _setup_logging(level):
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(JsonFormatter())
    log.handlers[:] = [handler]
    log.setLevel(level)
    log.propagate = False


def _info(event, **fields):
    log.info(event, extra={"fields": fields})


def _load_config(args):
    cfg = config.load(args.config) if getattr(args, "config", None) else config.PipelineConfig()
    return cfg


def _patch_arg(values):
    if values is None:
        return None
    if len(values) == 1:
        return (values[0],) * 3
    if len(values) == 3:
        return tuple(values)
    raise ConfigError("--patch takes 1 or 3 integers")


# ------------------------------------------------------------------ commands


def cmd_resample(args):
    cfg = _load_config(args)
    spacing = tuple(args.spacing) if args.spacing else cfg.preprocess.target_spacing
    vol = nifti.load(args.input)
    interp = args.interp or ("nearest" if vol.kind is Kind.LABEL else cfg.preprocess.interpolation)
    out = preprocess.resample(vol, preprocess.ResampleSpec(spacing, interp))
    nifti.save(out, args.output)
    _info("resampled", input=str(args.input), shape_in=list(vol.shape), shape_out=list(out.shape),
          spacing=list(out.spacing))
    return EXIT_OK


def cmd_augment(args):
    cfg = _load_config(args)
    overrides = {
        "brightness_mult_range": args.brightness_range,
        "brightness_sigma": args.sigma,
        "gamma_range": args.gamma_range,
        "gamma_prob": args.gamma_prob,
        "flip_prob_per_axis": args.flip_prob,
        "rotation_range_deg": args.rotation_range,
    }
    fields = {k: tuple(v) if isinstance(v, list) else v for k, v in overrides.items() if v is not None}
    seed = args.seed if args.seed is not None else cfg.seed
    params = replace(cfg.augment, seed=seed, **fields)
    vol = nifti.load(args.input)
    plan = augment.sample_plan(params)
    out = augment.apply_plan(vol, plan, params.brightness_sigma)
    nifti.save(out, args.output)
    print(json.dumps(asdict(plan), sort_keys=True))
    return EXIT_OK


def _predict_case(case_dir, cfg: config.PipelineConfig):
    folds = cfg.inference.fold_weight_paths
    if not folds:
        raise ConfigError("no fold weights configured (use --folds or [inference] folds)")
    for p in folds:
        if not Path(p).is_file():
            raise FileNotFoundError(f"fold weights not found: {p}")
    stores = [read_weights_file(p) for p in folds]
    ct, pet, _ = nifti.load_case(case_dir)
    spec = preprocess.ResampleSpec(cfg.preprocess.target_spacing, preprocess.TRILINEAR)
    ct_r, pet_r = preprocess.resample(ct, spec), preprocess.resample(pet, spec)
    image = preprocess.assemble_input(ct_r, pet_r, cfg.normalization)
    prob = inference.sliding_window_predict(stores, image, cfg.inference)
    if prob.shape != ct.shape or prob.spacing != ct.spacing:
        prob = MultiChannelVolume(
            tuple(preprocess.resample_to(c, ct.shape, ct.spacing, preprocess.TRILINEAR) for c in prob.channels),
            prob.names,
        )
    mask = inference.argmax_mask(prob)
    fg = prob.channels[-1] if len(prob) == 2 else prob.channels[0]
    mask = Volume3D(mask.data, ct.spacing, Kind.LABEL, ct.orientation)
    fg = Volume3D(fg.data, ct.spacing, Kind.PROBABILITY, ct.orientation)
    return fg, mask


def cmd_predict(args):
    cfg = config.with_overrides(
        _load_config(args),
        patch_shape=_patch_arg(args.patch),
        step_fraction=args.step,
        sigma_scale=args.sigma_scale,
        folds=tuple(args.folds) if args.folds else None,
        threads=args.threads,
    )
    case_dir = Path(args.case_dir)
    if not case_dir.is_dir():
        raise FileNotFoundError(f"case directory not found: {case_dir}")
    start = time.perf_counter()
    prob, mask = _predict_case(case_dir, cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    nifti.save(prob, out / "PROB.nii.gz")
    nifti.save(mask, out / "PRED.nii.gz")
    _info("predicted", case=case_dir.name, shape=list(mask.shape), folds=len(cfg.inference.fold_weight_paths),
          foreground_voxels=int(mask.data.sum()), seconds=round(time.perf_counter() - start, 3))
    return EXIT_OK


def discover_masks(root):
    """Map case id to mask path.

    Accepts ``<case>.nii[.gz]`` files and ``<case>/`` directories holding
    ``SEG.nii.gz`` or ``PRED.nii.gz``.
    """
    root = Path(root)
    if not root.is_dir():
        raise FileNotFoundError(f"directory not found: {root}")
    found = {}
    for entry in sorted(root.iterdir()):
        if entry.is_file() and entry.name.endswith((".nii", ".nii.gz")):
            found[entry.name.removesuffix(".gz").removesuffix(".nii")] = entry
        elif entry.is_dir():
            for name in (nifti.SEG_NAME, "PRED.nii.gz"):
                if (entry / name).is_file():
                    found[entry.name] = entry / name
                    break
    return found


def cmd_evaluate(args):
    cfg = _load_config(args)
    connectivity = args.connectivity or cfg.connectivity
    empty = cfg.empty_empty_dice if args.empty_empty_dice is None else args.empty_empty_dice
    preds, gts = discover_masks(args.pred_dir), discover_masks(args.gt_dir)
    missing = sorted(set(gts) - set(preds))
    if missing:
        raise FileNotFoundError(f"no prediction for case(s): {', '.join(missing)}")
    if not gts:
        raise FileNotFoundError(f"no ground-truth masks in {args.gt_dir}")
    rows = []
    for case in sorted(gts):
        gt = nifti.load_mask(gts[case])
        pred = nifti.load_mask(preds[case])
        rows.append(metrics.evaluate_case(case, pred, gt, connectivity=connectivity, empty_dice=empty))
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["case_id", "dsc", "fpv_ml", "fnv_ml"])
    for r in rows:
        writer.writerow([r.case_id, repr(r.dsc), repr(r.fpv), repr(r.fnv)])
    summary = metrics.summarize(rows)
    summary.update(connectivity=connectivity, empty_empty_dice=empty)
    if args.out:
        Path(args.out).write_text(buf.getvalue())
    else:
        sys.stdout.write(buf.getvalue())
    if args.summary:
        Path(args.summary).write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    else:
        print(json.dumps(summary, sort_keys=True))
    _info("evaluated", **summary)
    return EXIT_OK


RANK_COLUMNS = ["team", "dsc", "fpv", "fnv", "rank_dsc", "rank_fpv", "rank_fnv", "score"]


def read_team_csv(path):
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"team metrics CSV not found: {path}")
    rows = []
    with path.open(newline="") as fh:
        reader = csv.DictReader(fh)
        need = {"team", "dsc", "fpv", "fnv"}
        if reader.fieldnames is None or not need <= set(reader.fieldnames):
            raise ValidationError(f"{path}: CSV needs columns {sorted(need)}, got {reader.fieldnames}")
        for rec in reader:
            try:
                rows.append((rec["team"], float(rec["dsc"]), float(rec["fpv"]), float(rec["fnv"])))
            except ValueError as exc:
                raise ValidationError(f"{path}: team {rec['team']!r}: {exc}") from None
    return rows


def format_leaderboard(ranked):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(RANK_COLUMNS)
    for r in ranked:
        writer.writerow([r.team, r.dsc, r.fpv, r.fnv, r.rank_dsc, r.rank_fpv, r.rank_fnv, r.score])
    return buf.getvalue()


def cmd_rank(args):
    ranked = metrics.rank_teams(read_team_csv(args.input))
    text = format_leaderboard(ranked)
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def _descriptor_from_args(args):
    if args.weights:
        if not Path(args.weights).is_file():
            raise FileNotFoundError(f"weights not found: {args.weights}")
        return read_weights_file(args.weights).descriptor
    base = PRESETS[args.arch]
    return ArchDescriptor(
        channels=base.channels,
        in_channels=args.in_channels or base.in_channels,
        out_channels=args.out_channels or base.out_channels,
    )


def cmd_describe_model(args):
    desc = _descriptor_from_args(args)
    total = param_count(desc)
    patch = _patch_arg(args.patch)
    peak = peak_activation_bytes(desc, patch, _accel.backend())
    if args.json:
        print(json.dumps({"descriptor": desc.to_text(), "fingerprint": desc.fingerprint,
                          "params": total, "params_m": format_millions(total),
                          "patch": list(patch), "peak_activation_bytes": peak}, sort_keys=True))
        return EXIT_OK
    print(f"descriptor  {desc.to_text()}")
    print(f"fingerprint {desc.fingerprint}")
    width = max(len(n) for n, _ in layer_inventory(desc))
    for name, shape in layer_inventory(desc):
        count = int(np.prod(shape))
        print(f"{name:<{width}}  {'x'.join(map(str, shape)):>16}  {count:>10}")
    print(f"total parameters: {total} ({format_millions(total)})")
    print(f"peak activations: {peak / 2**30:.2f} GiB for a {'x'.join(map(str, patch))} patch ({_accel.backend()} kernels)")
    return EXIT_OK


def cmd_bench(args):
    from .unet import init_weights

    if args.backend:
        _accel.set_backend(args.backend)
    channels = tuple(args.channels)
    desc = ArchDescriptor(channels=channels, in_channels=2, out_channels=2)
    store = init_weights(desc, seed=args.seed)
    shape = _patch_arg(args.shape)
    patch = _patch_arg(args.patch)
    rng = np.random.default_rng(args.seed)
    image = MultiChannelVolume.from_array(
        rng.standard_normal((2,) + shape).astype(np.float32), (1.0, 1.0, 1.0), names=("CT", "PET")
    )
    # warm-up compiles the kernels outside the timed region
    inference.sliding_window_predict(store, image.stack()[:, : patch[0], : patch[1], : patch[2]],
                                     inference.InferenceConfig(patch_shape=patch))
    for step in args.steps:
        cfg = inference.InferenceConfig(patch_shape=patch, step_fraction=step, threads=args.threads)
        tiles = len(inference.plan_tiles(shape, patch, step))
        start = time.perf_counter()
        inference.sliding_window_predict(store, image, cfg)
        seconds = time.perf_counter() - start
        print(json.dumps({"step": step, "tiles": tiles, "seconds": round(seconds, 4),
                          "backend": _accel.backend(), "threads": args.threads}, sort_keys=True))
    return EXIT_OK


# ------------------------------------------------------------------ parser


def build_parser():
    parser = argparse.ArgumentParser(
        prog="lesionseg",
        description="PET/CT lesion segmentation toolkit.",
        epilog=(
            "exit codes: 0 ok, 1 unexpected error, 2 usage, 3 missing file, "
            "4 bad config, 5 bad NIfTI/UNW1 file, 6 invalid data or parameters"
        ),
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument("--log-level", default="INFO", choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("resample", help="resample a NIfTI volume to a target spacing")
    p.add_argument("input")
    p.add_argument("output")
    p.add_argument("--spacing", type=float, nargs=3, metavar=("Z", "Y", "X"))
    p.add_argument("--interp", choices=["trilinear", "nearest"])
    p.add_argument("--config")
    p.set_defaults(func=cmd_resample)

    p = sub.add_parser("augment", help="apply one seeded random augmentation to a NIfTI volume")
    p.add_argument("input")
    p.add_argument("output")
    p.add_argument("--seed", type=int)
    p.add_argument("--brightness-range", type=float, nargs=2, metavar=("LO", "HI"))
    p.add_argument("--sigma", type=float, help="brightness noise standard deviation")
    p.add_argument("--gamma-range", type=float, nargs=2, metavar=("LO", "HI"))
    p.add_argument("--gamma-prob", type=float)
    p.add_argument("--flip-prob", type=float)
    p.add_argument("--rotation-range", type=float, nargs=2, metavar=("LO", "HI"))
    p.add_argument("--config")
    p.set_defaults(func=cmd_augment)

    p = sub.add_parser("predict", help="sliding-window ensemble prediction for one case directory")
    p.add_argument("case_dir")
    p.add_argument("--out", required=True, help="output directory for PROB.nii.gz and PRED.nii.gz")
    p.add_argument("--patch", type=int, nargs="+", metavar="N")
    p.add_argument("--step", type=float)
    p.add_argument("--folds", nargs="+", metavar="UNW1")
    p.add_argument("--sigma-scale", type=float)
    p.add_argument("--threads", type=int)
    p.add_argument("--config")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("evaluate", help="per-case DSC / FPV / FNV for prediction vs ground-truth masks")
    p.add_argument("pred_dir")
    p.add_argument("gt_dir")
    p.add_argument("--out", help="per-case CSV path (default stdout)")
    p.add_argument("--summary", help="aggregate JSON path (default stdout)")
    p.add_argument("--connectivity", type=int, choices=metrics.CONNECTIVITIES)
    p.add_argument("--empty-empty-dice", type=float)
    p.add_argument("--config")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("rank", help="leaderboard from a CSV of team,dsc,fpv,fnv")
    p.add_argument("input")
    p.add_argument("--out")
    p.set_defaults(func=cmd_rank)

    p = sub.add_parser("describe-model", help="print the layer table and parameter count")
    p.add_argument("--arch", choices=sorted(PRESETS), default="vanilla")
    p.add_argument("--weights", help="describe the architecture stored in a UNW1 file")
    p.add_argument("--in-channels", type=int)
    p.add_argument("--out-channels", type=int)
    p.add_argument("--patch", type=int, nargs="+", default=[192], help="patch for the memory estimate")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_describe_model)

    p = sub.add_parser("bench", help="tiles evaluated and wall time per step fraction")
    p.add_argument("--shape", type=int, nargs="+", default=[96])
    p.add_argument("--patch", type=int, nargs="+", default=[64])
    p.add_argument("--steps", type=float, nargs="+", default=[0.5, 0.6, 0.7, 0.8, 0.9, 1.0])
    p.add_argument("--channels", type=int, nargs="+", default=[4, 8], help="per-stage feature channels")
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--backend", choices=_accel.BACKENDS)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_bench)
    return parser


def _exit_code(exc):
    if isinstance(exc, LesionSegError):
        return exc.exit_code
    if isinstance(exc, (FileNotFoundError, NotADirectoryError)):
        return EXIT_MISSING
    return EXIT_OTHER


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    _setup_logging(args.log_level)
    try:
        return args.func(args)
    except Exception as exc:  # noqa: BLE001 - every failure becomes one machine-readable line
        code = _exit_code(exc)
        sys.stderr.write(json.dumps({"level": "error", "exit_code": code, "error": type(exc).__name__,
                                     "message": str(exc)}, sort_keys=True) + "\n")
        if code == EXIT_OTHER:
            log.debug("traceback", exc_info=True)
        return code


if __name__ == "__main__":
    sys.exit(main())
