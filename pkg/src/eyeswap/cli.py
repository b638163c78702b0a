"""Command-line interface.

Subcommands: synth, segment, swap, gaze, authenticate, train-liveness,
attack, experiment, report. Each reads an optional config file (--config or
the EYESWAP_CONFIG environment variable) plus --set key=value overrides.
Failures print one machine-readable JSON object to stderr and exit nonzero.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import harness, liveness, lstm
from .config import ExperimentConfig, load_config, parse_assignments, validate
from .dataset import generate_dataset, read_recording
from .errors import ConfigError, EyeswapError
from .gaze import accuracy, load_schedule, precision, save_trace
from .imaging import load_pgm, save_pgm
from .iriscode import IrisTemplate, encode, hamming_distance, load_template
from .rubbersheet import load_texture, swap_iris, unwrap
from .segmentation import detect_geometry, geometry_to_mask, mask_to_image
from .synth import default_schedule, derive_seed

SUBCOMMANDS = ("synth", "segment", "swap", "gaze", "authenticate",
               "train-liveness", "attack", "experiment", "report")


def _fail(kind: str, message: str, code: int = 1) -> int:
    sys.stderr.write(json.dumps({"error": kind, "message": message}) + "\n")
    return code


def _emit(obj) -> None:
    sys.stdout.write(json.dumps(obj, sort_keys=True, indent=1) + "\n")


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="plain-text config file (or $EYESWAP_CONFIG)")
    parser.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override one config key; repeatable")


def _resolve_config(args) -> ExperimentConfig:
    config = ExperimentConfig()
    path = args.config or os.environ.get("EYESWAP_CONFIG")
    if args.config is not None and not Path(args.config).is_file():
        raise ConfigError(f"config file {args.config} does not exist")
    if path and Path(path).is_file():
        config = load_config(path, config)
    return validate(parse_assignments(args.set, config))


def _cmd_synth(argv) -> int:
    parser = argparse.ArgumentParser(prog="eyeswap synth")
    parser.add_argument("--out", required=True)
    parser.add_argument("--mode", choices=("offline", "online"), default="offline")
    parser.add_argument("--subjects", type=int)
    parser.add_argument("--seed", type=int)
    _add_config_flags(parser)
    args = parser.parse_args(argv)
    config = _resolve_config(args)
    if args.subjects is not None:
        config = parse_assignments([f"n_subjects={args.subjects}"], config)
    if args.seed is not None:
        config = parse_assignments([f"seed={args.seed}"], config)
    ds_seed = derive_seed(config.seed, 100 + (0 if args.mode == "offline" else 1))
    schedule = default_schedule(args.mode, derive_seed(ds_seed, 0), config.synth)
    info = generate_dataset(args.out, args.mode, config.n_subjects, ds_seed,
                            schedule, config.synth)
    _emit({"dataset": str(info.root), "mode": args.mode,
           "subjects": info.subject_ids, "victim_id": info.victim_id})
    return 0


def _cmd_segment(argv) -> int:
    parser = argparse.ArgumentParser(prog="eyeswap segment")
    parser.add_argument("frame")
    parser.add_argument("--mask-out", help="write the annulus mask as a PGM")
    _add_config_flags(parser)
    args = parser.parse_args(argv)
    config = _resolve_config(args)
    geom = detect_geometry(load_pgm(args.frame), config.segmentation)
    if args.mask_out:
        save_pgm(mask_to_image(geometry_to_mask(geom)), args.mask_out)
    _emit({
        "pupil": {"x": geom.pupil.center.x, "y": geom.pupil.center.y,
                  "r": geom.pupil.radius},
        "limbus": {"x": geom.limbus.center.x, "y": geom.limbus.center.y,
                   "r": geom.limbus.radius},
    })
    return 0


def _cmd_swap(argv) -> int:
    parser = argparse.ArgumentParser(prog="eyeswap swap")
    parser.add_argument("frame")
    parser.add_argument("texture")
    parser.add_argument("--out", required=True)
    _add_config_flags(parser)
    args = parser.parse_args(argv)
    config = _resolve_config(args)
    img = load_pgm(args.frame)
    geom = detect_geometry(img, config.segmentation)
    save_pgm(swap_iris(img, geom, load_texture(args.texture)), args.out)
    _emit({"spoofed": args.out})
    return 0


def _cmd_gaze(argv) -> int:
    parser = argparse.ArgumentParser(prog="eyeswap gaze")
    parser.add_argument("recording")
    parser.add_argument("--out", required=True, help="gaze trace CSV")
    parser.add_argument("--schedule", help="defaults to <recording>/../schedule.csv")
    _add_config_flags(parser)
    args = parser.parse_args(argv)
    config = _resolve_config(args)
    recording = read_recording(args.recording)
    schedule_path = args.schedule or Path(args.recording).parent / "schedule.csv"
    schedule = load_schedule(schedule_path)
    from .segmentation import detect_pupil

    centers = {}
    for i in range(len(recording)):
        try:
            centers[i] = detect_pupil(recording.frame(i), config.segmentation).center
        except EyeswapError:
            continue
    trace = harness._calibrated_trace(recording.timestamps, centers, schedule)
    save_trace(trace, args.out)
    _emit({"trace": args.out, "n_samples": len(trace),
           "accuracy_deg": accuracy(trace, schedule),
           "precision_deg": precision(trace, schedule)})
    return 0


def _templates_from_path(path: str, config: ExperimentConfig) -> list[IrisTemplate]:
    """A template file yields one template; a recording dir yields templates
    from 10 evenly spaced frames."""
    p = Path(path)
    if p.is_dir():
        recording = read_recording(p)
        picks = np.unique(np.linspace(0, len(recording) - 1, 10).astype(int))
        out = []
        for i in picks:
            img = recording.frame(int(i))
            geom = detect_geometry(img, config.segmentation)
            out.append(encode(unwrap(img, geom, config.radial_res, config.angular_res),
                              config.gabor))
        return out
    return [load_template(p)]


def _cmd_authenticate(argv) -> int:
    parser = argparse.ArgumentParser(prog="eyeswap authenticate")
    parser.add_argument("probe", help="template file or recording directory")
    parser.add_argument("enrolled", help="template file or recording directory")
    parser.add_argument("--threshold", type=float)
    _add_config_flags(parser)
    args = parser.parse_args(argv)
    config = _resolve_config(args)
    threshold = args.threshold if args.threshold is not None else config.hd_threshold
    probes = _templates_from_path(args.probe, config)
    enrolled = _templates_from_path(args.enrolled, config)
    if len(probes) == len(enrolled):
        pairs = list(zip(probes, enrolled))
    elif len(probes) == 1:
        pairs = [(probes[0], e) for e in enrolled]
    elif len(enrolled) == 1:
        pairs = [(p, enrolled[0]) for p in probes]
    else:
        pairs = [(p, e) for p in probes for e in enrolled]
    hds = [hamming_distance(p, e, config.max_shift) for p, e in pairs]
    hd = float(np.mean(hds))
    _emit({"hd": hd, "n_comparisons": len(hds), "threshold": threshold,
           "decision": "accept" if hd < threshold else "reject"})
    return 0


def _cmd_train_liveness(argv) -> int:
    parser = argparse.ArgumentParser(prog="eyeswap train-liveness")
    parser.add_argument("windows", help="window dataset CSV")
    parser.add_argument("--out", required=True, help="model file")
    parser.add_argument("--seed", type=int, default=0)
    _add_config_flags(parser)
    args = parser.parse_args(argv)
    config = _resolve_config(args)
    windows = liveness.load_windows_csv(args.windows)
    subjects = sorted({w.subject for w in windows})
    plan = harness.split_subjects(subjects, args.seed)
    model, history = liveness.train(windows, plan, config.training, seed=args.seed)
    lstm.save_model(model, args.out)
    window_rows, user_pairs = harness._evaluate_split(windows, plan, model)
    asr_window, asr_user = liveness.attack_success_rate(
        [(r["label"], r["pred"]) for r in window_rows],
        [(label, pred) for _, label, pred in user_pairs],
    )
    _emit({"model": args.out, "epochs_run": history.epochs_run,
           "best_epoch": history.best_epoch,
           "val_accuracy": history.val_accuracy[history.best_epoch],
           "test_asr_window": asr_window, "test_asr_user": asr_user,
           "split": {"train": sorted(plan.train), "validation": sorted(plan.validation),
                     "test": sorted(plan.test)}})
    return 0


def _cmd_attack(argv) -> int:
    parser = argparse.ArgumentParser(prog="eyeswap attack")
    parser.add_argument("recording")
    parser.add_argument("texture")
    parser.add_argument("--mode", choices=("offline", "online"), required=True)
    parser.add_argument("--out", required=True)
    parser.add_argument("--seed", type=int, default=0)
    _add_config_flags(parser)
    args = parser.parse_args(argv)
    config = _resolve_config(args)
    runner = harness.run_offline_attack if args.mode == "offline" else harness.run_online_attack
    run = runner(args.recording, args.texture, config, args.out, args.seed)
    out = Path(args.out)
    save_trace(run.unswapped_trace, out / "unswapped_trace.csv")
    save_trace(run.swapped_trace, out / "swapped_trace.csv")
    _emit({"spoofed_dir": str(run.spoofed_dir), "mode": args.mode,
           "frames_kept": int(len(run.kept)), "frames_processed": len(run.processed),
           "frames_skipped": run.skipped, "decimation_factor": run.decimation_factor})
    return 0


def _cmd_experiment(argv) -> int:
    parser = argparse.ArgumentParser(prog="eyeswap experiment")
    parser.add_argument("--seed", type=int)
    parser.add_argument("--out")
    _add_config_flags(parser)
    args = parser.parse_args(argv)
    config = _resolve_config(args)
    overrides = []
    if args.seed is not None:
        overrides.append(f"seed={args.seed}")
    if args.out is not None:
        overrides.append(f"output_dir={args.out}")
    config = validate(parse_assignments(overrides, config))
    report, timings = harness.run_experiment(config)
    summary = {"report": str(report.path), "config_hash": report.data["config_hash"],
               "timings_s": {k: round(v, 2) for k, v in timings.items()}}
    for mode, block in report.data["modes"].items():
        summary[mode] = {
            "asr_window": block["asr_window"]["mean"],
            "asr_user": block["asr_user"]["mean"],
            "hd": block["hd"]["mean"],
            "auth_pass_rate": block["auth_pass_rate"],
        }
    _emit(summary)
    return 0


def _cmd_report(argv) -> int:
    parser = argparse.ArgumentParser(prog="eyeswap report")
    parser.add_argument("report", help="report.json path")
    parser.add_argument("--check", action="store_true",
                        help="recompute aggregates from the raw dumps")
    args = parser.parse_args(argv)
    data = harness.load_report(args.report)
    lines = [f"config {data['config_hash']}  seed {data['seed']}"]
    for mode, block in data["modes"].items():
        acc, prec = block["accuracy"], block["precision"]
        lines.append(
            f"[{mode}] subjects={block['n_subjects']} "
            f"auth_pass_rate={block['auth_pass_rate']:.2f} "
            f"hd={block['hd']['mean']:.3f}+-{block['hd']['std']:.3f}"
        )
        lines.append(
            f"  accuracy unswapped {acc['unswapped']['mean']:.3f}+-{acc['unswapped']['std']:.3f} deg"
            f" | swapped {acc['swapped']['mean']:.3f}+-{acc['swapped']['std']:.3f} deg"
        )
        lines.append(
            f"  precision unswapped {prec['unswapped']['mean']:.3f}+-{prec['unswapped']['std']:.3f} deg"
            f" | swapped {prec['swapped']['mean']:.3f}+-{prec['swapped']['std']:.3f} deg"
        )
        lines.append(
            f"  ASR window {block['asr_window']['mean']:.3f}+-{block['asr_window']['std']:.3f}"
            f" | user {block['asr_user']['mean']:.3f}+-{block['asr_user']['std']:.3f}"
            f" over {block['asr_window']['n']} splits"
        )
    print("\n".join(lines))
    if args.check:
        ok = harness.verify_report_consistency(Path(args.report).parent)
        print(f"consistency check: {'ok' if ok else 'FAILED'}")
        return 0 if ok else 1
    return 0


_DISPATCH = {
    "synth": _cmd_synth,
    "segment": _cmd_segment,
    "swap": _cmd_swap,
    "gaze": _cmd_gaze,
    "authenticate": _cmd_authenticate,
    "train-liveness": _cmd_train_liveness,
    "attack": _cmd_attack,
    "experiment": _cmd_experiment,
    "report": _cmd_report,
}


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    if not argv or argv[0] in ("-h", "--help"):
        print(f"usage: eyeswap <subcommand> ...\nsubcommands: {', '.join(SUBCOMMANDS)}")
        return 0
    cmd, rest = argv[0], argv[1:]
    handler = _DISPATCH.get(cmd)
    if handler is None:
        return _fail("UnknownSubcommand", f"unknown subcommand {cmd!r}", 2)
    try:
        return handler(rest)
    except ConfigError as exc:
        return _fail("ConfigError", str(exc), 2)
    except EyeswapError as exc:
        return _fail(type(exc).__name__, str(exc), 1)


if __name__ == "__main__":
    raise SystemExit(main())
