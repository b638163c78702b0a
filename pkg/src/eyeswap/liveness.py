"""Gaze-velocity liveness detection: signal preparation and decision metrics.

Raw gaze traces become per-channel velocity signals (timestamp-aware forward
differences, so decimated online traces survive), which are then capped at a
physiological limit, resampled to a common low rate, min-max normalized per
user, and cut into fixed-length windows for the classifier. User-level
decisions are majority votes over window decisions, with ties broken toward
spoof.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import lstm
from .errors import (
    AllSamplesCapped,
    NonMonotonicTime,
    NoSpoofedSamples,
    NoWindows,
    SignalTooShort,
    TooFewSamples,
)
from .gaze import GazeTrace

REAL = "real"
SPOOF = "spoof"

VELOCITY_CAP_DEG_S = 800.0
LIVENESS_RATE_HZ = 3.0
WINDOW_LEN = 7
WINDOW_STEP = 3


@dataclass(frozen=True)
class VelocitySignal:
    """Per-sample horizontal/vertical gaze velocity in deg/s."""

    t: np.ndarray
    vh: np.ndarray
    vv: np.ndarray

    def __post_init__(self):
        for name in ("t", "vh", "vv"):
            arr = np.ascontiguousarray(np.asarray(getattr(self, name), dtype=np.float64))
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if not (self.t.size == self.vh.size == self.vv.size):
            raise ValueError("signal columns have different lengths")

    def __len__(self) -> int:
        return self.t.size

    @property
    def channels(self) -> np.ndarray:
        return np.stack([self.vh, self.vv], axis=1)


@dataclass(frozen=True)
class VelocityWindow:
    data: np.ndarray  # (window_len, 2)
    label: str
    subject: int
    index: int = 0
    split: str | None = None


@dataclass(frozen=True)
class SplitPlan:
    """Disjoint subject-id partitions for one train/test split."""

    train: frozenset[int]
    validation: frozenset[int]
    test: frozenset[int]
    seed: int = 0

    def __post_init__(self):
        groups = (self.train, self.validation, self.test)
        total = sum(len(g) for g in groups)
        if len(self.train | self.validation | self.test) != total:
            raise ValueError("split partitions overlap")


def compute_velocity(trace: GazeTrace) -> VelocitySignal:
    """Forward-difference velocity, timestamped at the leading sample."""
    if len(trace) < 2:
        raise TooFewSamples(f"need at least 2 gaze samples, got {len(trace)}")
    dt = np.diff(trace.t)
    if np.any(dt <= 0):
        raise NonMonotonicTime("timestamps are not strictly increasing")
    return VelocitySignal(trace.t[:-1], np.diff(trace.h) / dt, np.diff(trace.v) / dt)


def _cap_channel(t: np.ndarray, v: np.ndarray, cap: float, name: str) -> np.ndarray:
    over = np.abs(v) > cap
    if not over.any():
        return v
    if over.all():
        raise AllSamplesCapped(f"every {name} sample exceeds {cap} deg/s")
    # np.interp fills interior gaps linearly and boundaries with the nearest
    # surviving value.
    return np.interp(t, t[~over], v[~over])


def preprocess(sig: VelocitySignal, cap: float = VELOCITY_CAP_DEG_S,
               target_rate: float = LIVENESS_RATE_HZ) -> VelocitySignal:
    """Cap-and-interpolate, resample to a uniform grid, min-max to [0, 1].

    Normalization is per channel over this user's full signal; a constant
    channel maps to all zeros.
    """
    if len(sig) < 4:
        raise TooFewSamples(f"need at least 4 velocity samples, got {len(sig)}")
    vh = _cap_channel(sig.t, sig.vh, cap, "horizontal")
    vv = _cap_channel(sig.t, sig.vv, cap, "vertical")

    span = sig.t[-1] - sig.t[0]
    n_out = int(np.floor(span * target_rate + 1e-9)) + 1
    t_new = sig.t[0] + np.arange(n_out) / target_rate
    vh = np.interp(t_new, sig.t, vh)
    vv = np.interp(t_new, sig.t, vv)

    def minmax(v: np.ndarray) -> np.ndarray:
        lo, hi = v.min(), v.max()
        if hi == lo:
            return np.zeros_like(v)
        return (v - lo) / (hi - lo)

    return VelocitySignal(t_new, minmax(vh), minmax(vv))


def make_windows(sig: VelocitySignal, label: str, subject: int,
                 length: int = WINDOW_LEN, step: int = WINDOW_STEP) -> list[VelocityWindow]:
    """floor((n - length)/step) + 1 windows; the trailing remainder is dropped."""
    n = len(sig)
    if n < length:
        raise SignalTooShort(f"{n} samples < window length {length}")
    channels = sig.channels
    count = (n - length) // step + 1
    return [
        VelocityWindow(channels[i * step : i * step + length], label, subject, i)
        for i in range(count)
    ]


def windows_to_arrays(windows: Sequence[VelocityWindow]) -> tuple[np.ndarray, np.ndarray]:
    """(B, T, 2) inputs and 0/1 labels (spoof = 1)."""
    x = np.stack([w.data for w in windows])
    y = np.array([1.0 if w.label == SPOOF else 0.0 for w in windows])
    return x, y


def train(windows: Sequence[VelocityWindow], split: SplitPlan,
          hyper: lstm.TrainParams = lstm.TrainParams(),
          seed: int = 0) -> tuple[lstm.LstmModel, lstm.TrainHistory]:
    """Train on the split's train subjects, early-stop on its validation subjects."""
    train_w = [w for w in windows if w.subject in split.train]
    val_w = [w for w in windows if w.subject in split.validation]
    if not train_w or not val_w:
        raise NoWindows("empty train or validation partition")
    x_tr, y_tr = windows_to_arrays(train_w)
    x_va, y_va = windows_to_arrays(val_w)
    return lstm.train_arrays(x_tr, y_tr, x_va, y_va, hyper, seed)


def predict_window(model: lstm.LstmModel, window: VelocityWindow,
                   threshold: float = 0.5) -> str:
    return SPOOF if lstm.forward(model, window) >= threshold else REAL


def predict_user(model: lstm.LstmModel, windows: Sequence[VelocityWindow],
                 threshold: float = 0.5) -> str:
    """Majority vote over the subject's windows; ties go to spoof."""
    if not windows:
        raise NoWindows("no windows for this subject")
    votes = [predict_window(model, w, threshold) for w in windows]
    n_spoof = sum(v == SPOOF for v in votes)
    return SPOOF if n_spoof * 2 >= len(votes) else REAL


def attack_success_rate(window_preds: Iterable[tuple[str, str]],
                        user_preds: Iterable[tuple[str, str]]) -> tuple[float, float]:
    """(ASR_window, ASR_user) from (true label, predicted label) pairs.

    ASR is the fraction of spoofed windows (resp. users) classified real; 1.0
    is a perfect attack, 0.0 a perfect defense.
    """

    def rate(pairs: Iterable[tuple[str, str]], what: str) -> float:
        spoofed = [(truth, pred) for truth, pred in pairs if truth == SPOOF]
        if not spoofed:
            raise NoSpoofedSamples(f"no spoofed {what} in the evaluated set")
        return sum(pred == REAL for _, pred in spoofed) / len(spoofed)

    return rate(window_preds, "windows"), rate(user_preds, "users")


def save_windows_csv(windows: Sequence[VelocityWindow], path: str | Path) -> None:
    """Window dataset dump: subject,label,window_index,ch,s0..s6."""
    length = windows[0].data.shape[0] if windows else WINDOW_LEN
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["subject", "label", "window_index", "ch"]
                        + [f"s{i}" for i in range(length)])
        for w in windows:
            for ch in range(w.data.shape[1]):
                writer.writerow([w.subject, w.label, w.index, ch]
                                + [repr(float(x)) for x in w.data[:, ch]])


def load_windows_csv(path: str | Path) -> list[VelocityWindow]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    length = len(header) - 4
    grouped: dict[tuple[int, str, int], dict[int, list[float]]] = {}
    for row in body:
        subject, label, index, ch = int(row[0]), row[1], int(row[2]), int(row[3])
        grouped.setdefault((subject, label, index), {})[ch] = [float(x) for x in row[4:]]
    windows = []
    for (subject, label, index), chans in sorted(grouped.items()):
        data = np.zeros((length, len(chans)))
        for ch, values in chans.items():
            data[:, ch] = values
        windows.append(VelocityWindow(data, label, subject, index))
    return windows
