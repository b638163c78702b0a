"""Dataset directory layout: recording writers and readers.

A dataset holds one schedule, one manifest, and one recording directory per
subject::

    <root>/schedule.csv
    <root>/manifest.json
    <root>/subject_<id>/frames/frame_<nnnnnn>.pgm
    <root>/subject_<id>/timestamps.csv
    <root>/subject_<id>/truth_gaze.csv
    <root>/subject_<id>/truth_geometry.csv

The victim identity is one extra subject directory whose id sits just past
the evaluated pool.
"""

from __future__ import annotations

import csv
import json
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .gaze import TargetSchedule, load_schedule, save_schedule
from .imaging import GrayImage, load_pgm, save_pgm
from .synth import (
    Scanpath,
    SubjectProfile,
    SynthParams,
    derive_seed,
    generate_scanpath,
    generate_subject_texture,
    make_profile,
    render_frame,
)

_FRAME_RE = re.compile(r"frame_(\d+)\.pgm$")


@dataclass
class Recording:
    """One subject's frame sequence with timestamps and ground truth."""

    root: Path
    frame_paths: list[Path]
    timestamps: np.ndarray
    truth_gaze: np.ndarray | None = None      # rows: t, h, v
    truth_geometry: np.ndarray | None = None  # rows: frame, px, py, pr, lx, ly, lr

    def __len__(self) -> int:
        return len(self.frame_paths)

    def frame(self, index: int) -> GrayImage:
        return load_pgm(self.frame_paths[index])


def write_recording(root: Path, scanpath: Scanpath, profile: SubjectProfile,
                    texture, render_seed: int,
                    params: SynthParams = SynthParams()) -> Recording:
    """Render and persist every frame of one subject's challenge-task run."""
    root = Path(root)
    frames_dir = root / "frames"
    frames_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    geom_rows = []
    for i, (t, h, v) in enumerate(zip(scanpath.t, scanpath.h, scanpath.v)):
        img, geom, _ = render_frame(h, v, profile, texture,
                                    derive_seed(render_seed, i), params)
        path = frames_dir / f"frame_{i:06d}.pgm"
        save_pgm(img, path)
        paths.append(path)
        geom_rows.append(
            (i, geom.pupil.center.x, geom.pupil.center.y, geom.pupil.radius,
             geom.limbus.center.x, geom.limbus.center.y, geom.limbus.radius)
        )

    with open(root / "timestamps.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["frame", "t"])
        for i, t in enumerate(scanpath.t):
            writer.writerow([i, repr(float(t))])
    with open(root / "truth_gaze.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "h_deg", "v_deg"])
        for t, h, v in zip(scanpath.t, scanpath.h, scanpath.v):
            writer.writerow([repr(float(t)), repr(float(h)), repr(float(v))])
    with open(root / "truth_geometry.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["frame", "pupil_x", "pupil_y", "pupil_r",
                         "limbus_x", "limbus_y", "limbus_r"])
        for row in geom_rows:
            writer.writerow([row[0]] + [repr(float(x)) for x in row[1:]])

    truth_gaze = np.stack([scanpath.t, scanpath.h, scanpath.v], axis=1)
    return Recording(root, paths, scanpath.t.copy(), truth_gaze,
                     np.array([r for r in geom_rows], dtype=np.float64))


def read_recording(root: Path | str) -> Recording:
    root = Path(root)
    frames = sorted(
        (p for p in (root / "frames").iterdir() if _FRAME_RE.search(p.name)),
        key=lambda p: int(_FRAME_RE.search(p.name).group(1)),
    )
    ts = np.loadtxt(root / "timestamps.csv", delimiter=",", skiprows=1, ndmin=2)[:, 1]
    truth_gaze = None
    gaze_path = root / "truth_gaze.csv"
    if gaze_path.exists():
        truth_gaze = np.loadtxt(gaze_path, delimiter=",", skiprows=1, ndmin=2)
    truth_geom = None
    geom_path = root / "truth_geometry.csv"
    if geom_path.exists():
        truth_geom = np.loadtxt(geom_path, delimiter=",", skiprows=1, ndmin=2)
    return Recording(root, frames, ts, truth_gaze, truth_geom)


@dataclass
class DatasetInfo:
    root: Path
    mode: str
    schedule: TargetSchedule
    subject_ids: list[int]
    victim_id: int

    def subject_dir(self, subject_id: int) -> Path:
        return self.root / f"subject_{subject_id}"


def generate_dataset(root: Path | str, mode: str, n_subjects: int, seed: int,
                     schedule: TargetSchedule, params: SynthParams = SynthParams(),
                     config_hash: str = "") -> DatasetInfo:
    """Write the full dataset: evaluated subjects plus the victim identity."""
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    save_schedule(schedule, root / "schedule.csv")

    victim_id = n_subjects
    ids = list(range(n_subjects)) + [victim_id]
    for subject_id in ids:
        profile = make_profile(derive_seed(seed, 3, subject_id), params)
        texture = generate_subject_texture(profile.seed, params)
        scanpath = generate_scanpath(schedule, profile,
                                     derive_seed(seed, 2, subject_id),
                                     params.camera_rate, params)
        write_recording(root / f"subject_{subject_id}", scanpath, profile,
                        texture, derive_seed(seed, 1, subject_id), params)

    manifest = {
        "seed": seed,
        "config_hash": config_hash,
        "mode": mode,
        "n_subjects": n_subjects,
        "victim_id": victim_id,
        "camera_rate": params.camera_rate,
    }
    (root / "manifest.json").write_text(json.dumps(manifest, sort_keys=True, indent=2) + "\n")
    return DatasetInfo(root, mode, schedule, list(range(n_subjects)), victim_id)


def load_dataset(root: Path | str) -> DatasetInfo:
    root = Path(root)
    manifest = json.loads((root / "manifest.json").read_text())
    schedule = load_schedule(root / "schedule.csv")
    return DatasetInfo(root, manifest["mode"], schedule,
                       list(range(manifest["n_subjects"])), manifest["victim_id"])
