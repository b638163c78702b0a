"""Experiment orchestration: attack runs, the ten-split liveness evaluation,
and report persistence.

An experiment generates one synthetic dataset per mode, runs the unswapped and
swapped pipelines for every subject, scores authentication against the victim
with the ten-random-frame protocol, and trains a fresh liveness model per
train/test split. Everything is seeded, serial, and deterministic: two runs
with the same config produce byte-identical reports and spoofed frames.
"""

from __future__ import annotations

import csv
import json
import logging
import time
from contextlib import contextmanager
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import liveness
from .config import ExperimentConfig, config_hash, save_config, to_lines, validate
from .dataset import DatasetInfo, Recording, generate_dataset, read_recording
from .errors import EyeswapError, TooFewSubjects
from .gaze import GazeTrace, TargetSchedule, accuracy, estimate_trace, fit_calibration, precision, save_trace
from .imaging import GrayImage, load_pgm, save_pgm
from .iriscode import IrisTemplate, encode, hamming_distance
from .liveness import REAL, SPOOF, SplitPlan, VelocityWindow, attack_success_rate, compute_velocity, make_windows, predict_user, preprocess
from .lstm import LstmModel, forward
from .rubbersheet import PolarTexture, load_texture, match_intensity, save_texture, swap_iris, unwrap
from .segmentation import IrisGeometry, detect_geometry, detect_limbus, detect_pupil, geometry_to_mask
from .synth import default_schedule, derive_seed, rng_for, simulate_frame_drops

log = logging.getLogger(__name__)


@contextmanager
def _stage(**context):
    """Attach subject/frame/split context to any propagating pipeline error."""
    try:
        yield
    except EyeswapError as exc:
        detail = ", ".join(f"{k}={v}" for k, v in context.items())
        raise type(exc)(f"{exc} [{detail}]") from exc


def split_subjects(subject_ids, seed: int) -> SplitPlan:
    """60/40 train-pool/test split by subject (round to nearest), then 30% of
    the pool becomes the validation set. Deterministic in the seed."""
    ids = sorted(int(s) for s in subject_ids)
    n = len(ids)
    if n < 5:
        raise TooFewSubjects(f"need at least 5 subjects to split, got {n}")
    order = rng_for(seed, 10).permutation(n)
    shuffled = [ids[i] for i in order]

    n_pool = int(np.floor(0.6 * n + 0.5))
    n_pool = int(np.clip(n_pool, 3, n - 1))
    pool, test = shuffled[:n_pool], shuffled[n_pool:]
    n_val = max(1, int(np.floor(0.3 * n_pool + 0.5)))
    n_val = min(n_val, n_pool - 2)
    return SplitPlan(
        train=frozenset(pool[: n_pool - n_val]),
        validation=frozenset(pool[n_pool - n_val :]),
        test=frozenset(test),
        seed=seed,
    )


@dataclass
class AttackRun:
    """Artifacts of one recording pushed through (possibly decimated) swapping."""

    spoofed_dir: Path
    kept: np.ndarray
    processed: list[int]
    skipped: int
    decimation_factor: int
    unswapped_trace: GazeTrace
    swapped_trace: GazeTrace

    def spoofed_frame_path(self, index: int) -> Path:
        return self.spoofed_dir / "frames" / f"frame_{index:06d}.pgm"


def _as_texture(victim) -> PolarTexture:
    return victim if isinstance(victim, PolarTexture) else load_texture(victim)


def _calibrated_trace(timestamps: np.ndarray, centers: dict, schedule: TargetSchedule,
                      onset_trim: float = 0.5) -> GazeTrace:
    points = []
    for tgt in schedule.calibration:
        for i, t in enumerate(timestamps):
            if i in centers and tgt.onset + onset_trim <= t <= tgt.offset:
                points.append((centers[i], (tgt.h, tgt.v)))
    model = fit_calibration(points)
    idxs = sorted(centers)
    t = timestamps[idxs]
    px = np.array([centers[i].x for i in idxs])
    py = np.array([centers[i].y for i in idxs])
    return estimate_trace(model, t, px, py)


def _run_attack(recording: Recording, schedule: TargetSchedule, victim: PolarTexture,
                config: ExperimentConfig, out_dir: Path, seed: int, mode: str) -> AttackRun:
    n = len(recording)
    t = recording.timestamps
    rate = (n - 1) / (t[-1] - t[0]) if n > 1 else config.synth.camera_rate
    kept = simulate_frame_drops(n, rate, mode, seed, config.synth)
    kept_set = set(int(i) for i in kept)
    factor = int(kept[1] - kept[0]) if len(kept) > 1 else 1

    frames_dir = Path(out_dir) / "frames"
    frames_dir.mkdir(parents=True, exist_ok=True)
    seg = config.segmentation
    unswapped_centers: dict[int, object] = {}
    swapped_centers: dict[int, object] = {}
    processed: list[int] = []
    skipped = 0
    for i in range(n):
        img = recording.frame(i)
        try:
            pupil = detect_pupil(img, seg)
        except EyeswapError as exc:
            log.warning("frame %d: pupil detection failed (%s)", i, exc)
            if i in kept_set:
                skipped += 1
            continue
        unswapped_centers[i] = pupil.center
        if i not in kept_set:
            continue
        try:
            limbus = detect_limbus(img, pupil, seg)
            geom = IrisGeometry(pupil, limbus, img.width, img.height)
            source = victim
            if config.intensity_match:
                annulus = img.pixels[geometry_to_mask(geom).bits]
                source = match_intensity(victim, float(annulus.mean()), float(annulus.std()))
            spoofed = swap_iris(img, geom, source)
            save_pgm(spoofed, frames_dir / f"frame_{i:06d}.pgm")
            swapped_centers[i] = detect_pupil(spoofed, seg).center
            processed.append(i)
        except (EyeswapError, ValueError) as exc:
            log.warning("frame %d: swap failed (%s)", i, exc)
            skipped += 1

    unswapped = _calibrated_trace(t, unswapped_centers, schedule)
    swapped = _calibrated_trace(t, swapped_centers, schedule)
    return AttackRun(Path(out_dir), kept, processed, skipped, factor, unswapped, swapped)


def run_offline_attack(recording_dir, victim_texture, config: ExperimentConfig,
                       out_dir, seed: int = 0,
                       schedule: TargetSchedule | None = None) -> AttackRun:
    """Swap every frame of a recording; sampling rate is preserved."""
    recording = read_recording(recording_dir)
    if schedule is None:
        from .gaze import load_schedule

        schedule = load_schedule(Path(recording_dir).parent / "schedule.csv")
    return _run_attack(recording, schedule, _as_texture(victim_texture), config,
                       Path(out_dir), seed, "offline")


def run_online_attack(recording_dir, victim_texture, config: ExperimentConfig,
                      out_dir, seed: int = 0,
                      schedule: TargetSchedule | None = None) -> AttackRun:
    """Swap under the online processing budget: the frame stream is decimated
    before processing and only kept frames feed gaze and liveness."""
    recording = read_recording(recording_dir)
    if schedule is None:
        from .gaze import load_schedule

        schedule = load_schedule(Path(recording_dir).parent / "schedule.csv")
    return _run_attack(recording, schedule, _as_texture(victim_texture), config,
                       Path(out_dir), seed, "online")


def _stat(values) -> dict:
    arr = np.asarray(list(values), dtype=np.float64)
    std = float(arr.std(ddof=1)) if arr.size >= 2 else 0.0
    return {"mean": float(arr.mean()) if arr.size else 0.0, "std": std, "n": int(arr.size)}


def _template_from_frame(img: GrayImage, config: ExperimentConfig) -> IrisTemplate:
    geom = detect_geometry(img, config.segmentation)
    return encode(unwrap(img, geom, config.radial_res, config.angular_res), config.gabor)


def _windows_for(trace: GazeTrace, label: str, subject: int) -> list[VelocityWindow]:
    sig = preprocess(compute_velocity(trace))
    return make_windows(sig, label, subject)


@dataclass
class AttackReport:
    data: dict
    out_dir: Path

    @property
    def path(self) -> Path:
        return self.out_dir / "report.json"

    def save(self) -> Path:
        self.path.write_text(json.dumps(self.data, sort_keys=True, indent=1) + "\n")
        return self.path


def load_report(path) -> dict:
    return json.loads(Path(path).read_text())


def _evaluate_split(windows: list[VelocityWindow], plan: SplitPlan, model: LstmModel):
    """Window and user predictions over the split's test subjects."""
    window_rows = []
    user_pairs = []
    by_subject: dict[tuple[int, str], list[VelocityWindow]] = {}
    for w in windows:
        if w.subject in plan.test:
            by_subject.setdefault((w.subject, w.label), []).append(w)
    for (subject, label), ws in sorted(by_subject.items()):
        for w in ws:
            prob = forward(model, w)
            pred = SPOOF if prob >= 0.5 else REAL
            window_rows.append(
                {"subject": subject, "label": label, "window_index": w.index,
                 "prob": prob, "pred": pred}
            )
        user_pairs.append((subject, label, predict_user(model, ws)))
    return window_rows, user_pairs


def run_experiment(config: ExperimentConfig) -> tuple[AttackReport, dict]:
    """Full paper-analog experiment; returns the report and wall-clock timings
    (timings stay out of the report so it remains byte-reproducible)."""
    validate(config)
    out = Path(config.output_dir)
    raw_dir = out / "raw"
    raw_dir.mkdir(parents=True, exist_ok=True)
    chash = config_hash(config)
    save_config(config, out / "config_resolved.txt")

    report = {
        "config": to_lines(config),
        "config_hash": chash,
        "seed": config.seed,
        "modes": {},
    }
    timings: dict[str, float] = {}

    for mode_idx, mode in enumerate(config.modes):
        t_begin = time.perf_counter()
        mode_dir = out / mode
        ds_seed = derive_seed(config.seed, 100 + mode_idx)
        schedule = default_schedule(mode, derive_seed(ds_seed, 0), config.synth)
        ds = generate_dataset(mode_dir / "dataset", mode, config.n_subjects, ds_seed,
                              schedule, config.synth, chash)

        victim_rec = read_recording(ds.subject_dir(ds.victim_id))
        with _stage(mode=mode, subject="victim"):
            vimg = victim_rec.frame(0)
            vgeom = detect_geometry(vimg, config.segmentation)
            victim_texture = unwrap(vimg, vgeom, config.radial_res, config.angular_res)
        save_texture(victim_texture, mode_dir / "victim_texture.ptx")

        victim_templates: dict[int, IrisTemplate] = {}

        def victim_template(index: int) -> IrisTemplate:
            if index not in victim_templates:
                with _stage(mode=mode, subject="victim", frame=index):
                    victim_templates[index] = _template_from_frame(
                        victim_rec.frame(index), config
                    )
            return victim_templates[index]

        subject_rows = []
        windows: list[VelocityWindow] = []
        traces_dir = mode_dir / "traces"
        traces_dir.mkdir(parents=True, exist_ok=True)
        for s in ds.subject_ids:
            with _stage(mode=mode, subject=s):
                rec = read_recording(ds.subject_dir(s))
                run = _run_attack(rec, schedule, victim_texture, config,
                                  mode_dir / "spoofed" / f"subject_{s}",
                                  derive_seed(config.seed, 200 + mode_idx, s), mode)
                save_trace(run.unswapped_trace, traces_dir / f"subject_{s}_unswapped.csv")
                save_trace(run.swapped_trace, traces_dir / f"subject_{s}_swapped.csv")

                hd_rng = rng_for(config.seed, 300 + mode_idx, s)
                n_pick = min(config.hd_frames, len(run.processed))
                picks = sorted(
                    int(i) for i in hd_rng.choice(run.processed, size=n_pick, replace=False)
                )
                hd_values = []
                for idx in picks:
                    with _stage(mode=mode, subject=s, frame=idx):
                        probe = _template_from_frame(load_pgm(run.spoofed_frame_path(idx)), config)
                        hd_values.append(
                            hamming_distance(probe, victim_template(idx), config.max_shift)
                        )
                hd_mean = float(np.mean(hd_values))

                row = {
                    "subject": s,
                    "hd_values": hd_values,
                    "hd_mean": hd_mean,
                    "hd_frames": picks,
                    "authenticated": bool(hd_mean < config.hd_threshold),
                    "accuracy_unswapped": accuracy(run.unswapped_trace, schedule),
                    "accuracy_swapped": accuracy(run.swapped_trace, schedule),
                    "precision_unswapped": precision(run.unswapped_trace, schedule),
                    "precision_swapped": precision(run.swapped_trace, schedule),
                    "decimation_factor": run.decimation_factor,
                    "n_frames": len(rec),
                    "n_kept": int(len(run.kept)),
                    "skipped_frames": run.skipped,
                }
                subject_rows.append(row)
                windows.extend(_windows_for(run.unswapped_trace, REAL, s))
                windows.extend(_windows_for(run.swapped_trace, SPOOF, s))

        liveness.save_windows_csv(windows, raw_dir / f"{mode}_windows.csv")

        split_rows = []
        for k in range(config.n_splits):
            split_seed = derive_seed(config.seed, 400 + mode_idx, k)
            plan = split_subjects(ds.subject_ids, split_seed)
            assert ds.victim_id not in (plan.train | plan.validation | plan.test)
            with _stage(mode=mode, split=k):
                model, history = liveness.train(
                    windows, plan, config.training,
                    seed=derive_seed(config.seed, 500 + mode_idx, k),
                )
                window_rows, user_pairs = _evaluate_split(windows, plan, model)
                asr_window, asr_user = attack_success_rate(
                    [(r["label"], r["pred"]) for r in window_rows],
                    [(label, pred) for _, label, pred in user_pairs],
                )
            pred_path = raw_dir / f"{mode}_split_{k}_window_preds.csv"
            with open(pred_path, "w", newline="") as fh:
                writer = csv.writer(fh)
                writer.writerow(["subject", "label", "window_index", "prob", "pred"])
                for r in window_rows:
                    writer.writerow([r["subject"], r["label"], r["window_index"],
                                     repr(r["prob"]), r["pred"]])
            split_rows.append({
                "split_index": k,
                "seed": split_seed,
                "train": sorted(plan.train),
                "validation": sorted(plan.validation),
                "test": sorted(plan.test),
                "asr_window": asr_window,
                "asr_user": asr_user,
                "user_predictions": [
                    {"subject": s2, "truth": label, "pred": pred}
                    for s2, label, pred in user_pairs
                ],
                "epochs_run": history.epochs_run,
                "best_epoch": history.best_epoch,
            })

        report["modes"][mode] = {
            "n_subjects": config.n_subjects,
            "victim_id": ds.victim_id,
            "subjects": subject_rows,
            "hd": _stat(r["hd_mean"] for r in subject_rows),
            "auth_pass_rate": float(np.mean([r["authenticated"] for r in subject_rows])),
            "accuracy": {
                "unswapped": _stat(r["accuracy_unswapped"] for r in subject_rows),
                "swapped": _stat(r["accuracy_swapped"] for r in subject_rows),
            },
            "precision": {
                "unswapped": _stat(r["precision_unswapped"] for r in subject_rows),
                "swapped": _stat(r["precision_swapped"] for r in subject_rows),
            },
            "decimation_factor": _stat(r["decimation_factor"] for r in subject_rows),
            "skipped_frames": int(sum(r["skipped_frames"] for r in subject_rows)),
            "splits": split_rows,
            "asr_window": _stat(r["asr_window"] for r in split_rows),
            "asr_user": _stat(r["asr_user"] for r in split_rows),
        }
        timings[mode] = time.perf_counter() - t_begin

    attack_report = AttackReport(report, out)
    attack_report.save()
    return attack_report, timings


def verify_report_consistency(out_dir) -> bool:
    """Recompute every aggregate in a saved report from its raw dumps."""
    out = Path(out_dir)
    report = load_report(out / "report.json")
    for mode, block in report["modes"].items():
        for split in block["splits"]:
            k = split["split_index"]
            rows = list(csv.DictReader(open(out / "raw" / f"{mode}_split_{k}_window_preds.csv")))
            window_pairs = [(r["label"], r["pred"]) for r in rows]
            user_pairs = [(u["truth"], u["pred"]) for u in split["user_predictions"]]
            asr_window, asr_user = attack_success_rate(window_pairs, user_pairs)
            if asr_window != split["asr_window"] or asr_user != split["asr_user"]:
                return False
        for key, values in (
            ("asr_window", [s["asr_window"] for s in block["splits"]]),
            ("asr_user", [s["asr_user"] for s in block["splits"]]),
            ("hd", [r["hd_mean"] for r in block["subjects"]]),
        ):
            if block[key] != _stat(values):
                return False
    return True
