"""Pupil-center gaze estimation with polynomial calibration, and the
accuracy / precision data-quality metrics over the challenge-task targets.

Calibration fits two second-order bivariate polynomials (pupil pixels to
horizontal/vertical gaze degrees) by least squares on the calibration-target
samples; the model class contains all affine maps exactly, so a linear
pixel-per-degree eye reduces to a perfect fit in the noise-free limit.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DegenerateDesign, NoValidationSamples, TooFewPoints
from .imaging import PixelPoint

ONSET_TRIM_S = 0.5  # fixation latency discarded at each target onset
_COND_LIMIT = 1e10


@dataclass(frozen=True)
class GazeSample:
    t: float
    h: float
    v: float
    confidence: float = 1.0


@dataclass(frozen=True)
class GazeTrace:
    """Columnar gaze samples; timestamps strictly increasing."""

    t: np.ndarray
    h: np.ndarray
    v: np.ndarray
    confidence: np.ndarray

    def __post_init__(self):
        arrays = {}
        for name in ("t", "h", "v", "confidence"):
            arr = np.ascontiguousarray(np.asarray(getattr(self, name), dtype=np.float64))
            arr.setflags(write=False)
            arrays[name] = arr
        n = arrays["t"].size
        if any(a.size != n for a in arrays.values()):
            raise ValueError("trace columns have different lengths")
        if n >= 2 and not np.all(np.diff(arrays["t"]) > 0):
            raise ValueError("trace timestamps must be strictly increasing")
        for name, arr in arrays.items():
            object.__setattr__(self, name, arr)

    def __len__(self) -> int:
        return self.t.size

    @property
    def samples(self) -> list[GazeSample]:
        return [
            GazeSample(float(t), float(h), float(v), float(c))
            for t, h, v, c in zip(self.t, self.h, self.v, self.confidence)
        ]


@dataclass(frozen=True)
class Target:
    h: float
    v: float
    onset: float
    offset: float


@dataclass(frozen=True)
class TargetSchedule:
    """Chronological target list; the first ``n_calibration`` are calibration."""

    targets: tuple[Target, ...]
    n_calibration: int = 5

    def __post_init__(self):
        prev_end = -np.inf
        for tgt in self.targets:
            if tgt.onset < prev_end or tgt.offset <= tgt.onset:
                raise ValueError("targets must be chronological and non-overlapping")
            prev_end = tgt.offset
        if not (0 < self.n_calibration <= len(self.targets)):
            raise ValueError("calibration count out of range")

    @property
    def calibration(self) -> tuple[Target, ...]:
        return self.targets[: self.n_calibration]

    @property
    def validation(self) -> tuple[Target, ...]:
        return self.targets[self.n_calibration :]

    @property
    def duration(self) -> float:
        return self.targets[-1].offset


@dataclass(frozen=True)
class CalibrationModel:
    """Two 6-coefficient quadratic maps over standardized pupil coordinates."""

    coeff_h: np.ndarray
    coeff_v: np.ndarray
    center: tuple[float, float]
    scale: tuple[float, float]
    residual_rms: float = 0.0

    def features(self, px, py) -> np.ndarray:
        u = (np.asarray(px, dtype=np.float64) - self.center[0]) / self.scale[0]
        w = (np.asarray(py, dtype=np.float64) - self.center[1]) / self.scale[1]
        return np.stack(
            [np.ones_like(u), u, w, u * u, u * w, w * w], axis=-1
        )


def fit_calibration(points: list[tuple[PixelPoint, tuple[float, float]]]) -> CalibrationModel:
    """Least-squares quadratic calibration from (pupil pixel, target degrees) pairs.

    Raises DegenerateDesign for collinear / insufficiently spread inputs or an
    ill-conditioned design, TooFewPoints below 6 samples.
    """
    px = np.array([p.x for p, _ in points], dtype=np.float64)
    py = np.array([p.y for p, _ in points], dtype=np.float64)
    th = np.array([a[0] for _, a in points], dtype=np.float64)
    tv = np.array([a[1] for _, a in points], dtype=np.float64)

    if len(points) >= 3:
        spread_ok = len(np.unique(px)) >= 3 and len(np.unique(py)) >= 3
        if spread_ok:
            plane = np.stack([np.ones_like(px), px, py], axis=1)
            spread_ok = np.linalg.matrix_rank(plane) >= 3
        if not spread_ok:
            raise DegenerateDesign(
                "calibration points are collinear or span fewer than 3 distinct positions"
            )
    if len(points) < 6:
        raise TooFewPoints(f"need at least 6 calibration points, got {len(points)}")

    center = (float(px.mean()), float(py.mean()))
    scale = (float(px.std()) or 1.0, float(py.std()) or 1.0)
    model = CalibrationModel(np.zeros(6), np.zeros(6), center, scale)
    phi = model.features(px, py)
    gram = phi.T @ phi
    if np.linalg.cond(gram) >= _COND_LIMIT:
        raise DegenerateDesign("normal equations ill-conditioned")
    coeff_h = np.linalg.solve(gram, phi.T @ th)
    coeff_v = np.linalg.solve(gram, phi.T @ tv)
    resid = np.concatenate([phi @ coeff_h - th, phi @ coeff_v - tv])
    rms = float(np.sqrt(np.mean(resid**2)))
    return CalibrationModel(coeff_h, coeff_v, center, scale, rms)


def estimate_gaze(model: CalibrationModel, pupil: PixelPoint, t: float,
                  confidence: float = 1.0) -> GazeSample:
    """Evaluate the calibration polynomials at one pupil center."""
    phi = model.features(pupil.x, pupil.y)
    return GazeSample(t, float(phi @ model.coeff_h), float(phi @ model.coeff_v), confidence)


def estimate_trace(model: CalibrationModel, t: np.ndarray, px: np.ndarray,
                   py: np.ndarray, confidence: np.ndarray | None = None) -> GazeTrace:
    """Vectorized gaze estimation over a sequence of pupil centers."""
    phi = model.features(px, py)
    conf = np.ones_like(np.asarray(t, dtype=np.float64)) if confidence is None else confidence
    return GazeTrace(t, phi @ model.coeff_h, phi @ model.coeff_v, conf)


def _validation_windows(trace: GazeTrace, schedule: TargetSchedule,
                        onset_trim: float):
    """Per validation target: boolean sample selector after onset trimming."""
    for tgt in schedule.validation:
        sel = (
            (trace.t >= tgt.onset + onset_trim)
            & (trace.t <= tgt.offset)
            & (trace.confidence > 0)
        )
        yield tgt, sel


def accuracy(trace: GazeTrace, schedule: TargetSchedule,
             onset_trim: float = ONSET_TRIM_S) -> float:
    """Mean angular distance between gaze and the validation targets, degrees."""
    devs = []
    for tgt, sel in _validation_windows(trace, schedule, onset_trim):
        if sel.any():
            devs.append(np.hypot(trace.h[sel] - tgt.h, trace.v[sel] - tgt.v))
    if not devs:
        raise NoValidationSamples("no confident samples inside validation windows")
    return float(np.mean(np.concatenate(devs)))


def precision(trace: GazeTrace, schedule: TargetSchedule,
              onset_trim: float = ONSET_TRIM_S) -> float:
    """RMS successive-sample angular distance per validation window, averaged."""
    per_target = []
    for _, sel in _validation_windows(trace, schedule, onset_trim):
        if sel.sum() >= 2:
            dh = np.diff(trace.h[sel])
            dv = np.diff(trace.v[sel])
            per_target.append(np.sqrt(np.mean(dh**2 + dv**2)))
    if not per_target:
        raise NoValidationSamples("no validation window holds 2 or more samples")
    return float(np.mean(per_target))


def save_trace(trace: GazeTrace, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "h_deg", "v_deg", "confidence"])
        for t, h, v, c in zip(trace.t, trace.h, trace.v, trace.confidence):
            writer.writerow([repr(float(t)), repr(float(h)), repr(float(v)), repr(float(c))])


def load_trace(path: str | Path) -> GazeTrace:
    rows = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2, dtype=np.float64)
    return GazeTrace(rows[:, 0], rows[:, 1], rows[:, 2], rows[:, 3])


def save_schedule(schedule: TargetSchedule, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["h_deg", "v_deg", "onset_s", "offset_s"])
        for tgt in schedule.targets:
            writer.writerow([repr(tgt.h), repr(tgt.v), repr(tgt.onset), repr(tgt.offset)])


def load_schedule(path: str | Path, n_calibration: int = 5) -> TargetSchedule:
    rows = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2, dtype=np.float64)
    targets = tuple(Target(*row) for row in rows)
    return TargetSchedule(targets, n_calibration)
