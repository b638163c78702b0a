"""Deterministic synthetic eye-tracking data.

Provides per-subject iris textures (multi-octave value noise with radial
streaks), main-sequence scanpaths over the challenge-task schedule, a frame
renderer that doubles as the ground-truth oracle for segmentation and
swapping, and the frame-rate decimation model for online attacks. Everything
is a pure function of explicit seeds so datasets regenerate bit-for-bit.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import GazeOutOfFrame
from .imaging import GrayImage, PixelPoint
from .segmentation import BinaryMask, Circle, IrisGeometry, geometry_to_mask
from .gaze import GazeTrace, Target, TargetSchedule
from .rubbersheet import PolarTexture, sample_polar


def rng_for(root_seed: int, *path: int) -> np.random.Generator:
    """Independent deterministic stream for a (seed, purpose...) path."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence((root_seed, *path))))


def derive_seed(root_seed: int, *path: int) -> int:
    """Deterministic 64-bit child seed for a (seed, purpose...) path."""
    return int(np.random.SeedSequence((root_seed, *path)).generate_state(1, np.uint64)[0])


@dataclass(frozen=True)
class SynthParams:
    """Dataset-level generator configuration."""

    frame_width: int = 320
    frame_height: int = 240
    camera_rate: float = 30.0
    px_per_degree: float = 6.0
    limbus_radius: float = 66.0
    pupil_radius_min: float = 24.0
    pupil_radius_max: float = 30.0
    pupillometry_noise: float = 0.06
    fixation_jitter_deg: float = 0.15
    sclera_intensity: float = 200.0
    pupil_intensity: float = 30.0
    pixel_noise_sigma: float = 2.0
    texture_radial_res: int = 64
    texture_angular_res: int = 512
    texture_octaves: int = 4
    streak_density: float = 0.06
    texture_mean: float = 145.0
    texture_std: float = 32.0
    texture_min: float = 70.0
    texture_max: float = 230.0
    dwell_offline_s: float = 4.0
    dwell_online_min_s: float = 4.0
    dwell_online_max_s: float = 6.0
    saccade_latency_min_s: float = 0.15
    saccade_latency_max_s: float = 0.25
    decimation_mean: float = 8.9
    decimation_std: float = 2.6
    min_output_rate_hz: float = 3.0


@dataclass(frozen=True)
class SubjectProfile:
    """Per-subject generator state; a pure function of the seed."""

    seed: int
    pupil_radius_base: float
    texture_octaves: int
    streak_density: float
    px_per_degree: float
    fixation_jitter_deg: float
    pupillometry_noise: float
    limbus_radius: float


@dataclass(frozen=True)
class Scanpath:
    """Dense ground-truth gaze angles at camera rate, aligned to a schedule."""

    t: np.ndarray
    h: np.ndarray
    v: np.ndarray
    rate: float

    def as_trace(self) -> GazeTrace:
        return GazeTrace(self.t, self.h, self.v, np.ones_like(self.t))


def make_profile(seed: int, params: SynthParams = SynthParams()) -> SubjectProfile:
    rng = rng_for(seed, 0)
    base = rng.uniform(params.pupil_radius_min, params.pupil_radius_max)
    return SubjectProfile(
        seed=seed,
        pupil_radius_base=float(base),
        texture_octaves=params.texture_octaves,
        streak_density=params.streak_density,
        px_per_degree=params.px_per_degree,
        fixation_jitter_deg=params.fixation_jitter_deg,
        pupillometry_noise=params.pupillometry_noise,
        limbus_radius=params.limbus_radius,
    )


def _value_noise(rng: np.random.Generator, shape: tuple[int, int],
                 octaves: int) -> np.ndarray:
    """Multi-octave lattice noise, periodic along the angular (second) axis."""
    nr, na = shape
    out = np.zeros(shape)
    amp = 1.0
    for octave in range(octaves):
        gr = 4 * (2**octave)
        ga = 8 * (2**octave)
        grid = rng.standard_normal((gr, ga))
        rows = np.arange(nr) * (gr - 1) / (nr - 1)
        cols = np.arange(na) * ga / na
        r0 = np.floor(rows).astype(int)
        r1 = np.minimum(r0 + 1, gr - 1)
        fr = (rows - r0)[:, None]
        c0 = np.floor(cols).astype(int) % ga
        c1 = (c0 + 1) % ga
        fc = (cols - np.floor(cols))[None, :]
        top = grid[np.ix_(r0, c0)] * (1 - fc) + grid[np.ix_(r0, c1)] * fc
        bot = grid[np.ix_(r1, c0)] * (1 - fc) + grid[np.ix_(r1, c1)] * fc
        out += amp * (top * (1 - fr) + bot * fr)
        amp *= 0.5
    return out


def generate_subject_texture(seed: int, params: SynthParams = SynthParams()) -> PolarTexture:
    """Deterministic per-identity iris texture, fully valid."""
    nr, na = params.texture_radial_res, params.texture_angular_res
    rng = rng_for(seed, 1)
    field = _value_noise(rng, (nr, na), params.texture_octaves)

    n_streaks = int(round(params.streak_density * na))
    cols = np.arange(na)
    streaks = np.zeros(na)
    for _ in range(n_streaks):
        center = rng.uniform(0, na)
        width = rng.uniform(2.0, 5.0)
        amp = rng.uniform(-1.6, 1.6)
        d = np.minimum(np.abs(cols - center), na - np.abs(cols - center))
        streaks += amp * np.exp(-(d**2) / (2.0 * width**2))
    field = field + streaks[None, :]

    field = (field - field.mean()) / max(field.std(), 1e-12)
    intensities = np.clip(
        params.texture_mean + params.texture_std * field,
        params.texture_min,
        params.texture_max,
    )
    return PolarTexture(intensities, np.ones((nr, na), dtype=bool))


def default_schedule(mode: str = "offline", seed: int = 0,
                     params: SynthParams = SynthParams()) -> TargetSchedule:
    """5 calibration targets (center + corners) then 4 validation targets.

    Offline dwell is fixed; online dwell is uniform per target, matching the
    two study conditions.
    """
    cal = [(0.0, 0.0), (-10.0, -8.0), (10.0, -8.0), (10.0, 8.0), (-10.0, 8.0)]
    val = [(-5.0, -4.0), (5.0, -4.0), (5.0, 4.0), (-5.0, 4.0)]
    rng = rng_for(seed, 2)
    targets = []
    t = 0.0
    for h, v in cal + val:
        if mode == "online":
            dwell = float(rng.uniform(params.dwell_online_min_s, params.dwell_online_max_s))
        else:
            dwell = params.dwell_offline_s
        targets.append(Target(h, v, t, t + dwell))
        t += dwell
    return TargetSchedule(tuple(targets), n_calibration=len(cal))


def _main_sequence(amplitude: float) -> tuple[float, float]:
    """Peak velocity (deg/s) and duration (s) for one saccade.

    The raised-cosine profile ties duration to amplitude and peak velocity
    (duration = 2*amplitude/peak), so the trajectory both hits the commanded
    peak and lands exactly on the target.
    """
    peak = 500.0 * (1.0 - np.exp(-amplitude / 15.0))
    return peak, 2.0 * amplitude / peak


def generate_scanpath(schedule: TargetSchedule, profile: SubjectProfile, seed: int,
                      rate: float = 30.0,
                      params: SynthParams = SynthParams()) -> Scanpath:
    """Reaction latency, main-sequence saccade, then jittered fixation per target.

    Targets closer than 0.2 degrees to the current position get no saccade,
    only fixation jitter. The jitter vector norm is clipped at 3 sigma so the
    no-saccade speed never exceeds 6*sigma*rate.
    """
    rng = rng_for(seed, 3)
    duration = schedule.duration
    n = int(round(duration * rate))
    t = np.arange(n) / rate

    # Piecewise trajectory: (start, end, kind, payload), contiguous over [0, inf).
    pieces = []
    pos = np.array([0.0, 0.0])
    cursor = 0.0
    for tgt in schedule.targets:
        target = np.array([tgt.h, tgt.v])
        latency = float(rng.uniform(params.saccade_latency_min_s,
                                    params.saccade_latency_max_s))
        move_start = tgt.onset + latency
        pieces.append((cursor, move_start, "fix", pos.copy()))
        amp = float(np.hypot(*(target - pos)))
        if amp > 0.2:
            _, dur = _main_sequence(amp)
            pieces.append((move_start, move_start + dur, "saccade", (pos.copy(), target.copy())))
            cursor = move_start + dur
        else:
            cursor = move_start
        pos = target
    pieces.append((cursor, np.inf, "fix", pos.copy()))

    h = np.empty(n)
    v = np.empty(n)
    sigma = profile.fixation_jitter_deg
    idx = 0
    for i, ti in enumerate(t):
        while ti >= pieces[idx][1]:
            idx += 1
        start_t, end_t, kind, payload = pieces[idx]
        if kind == "saccade":
            begin, target = payload
            u = np.clip((ti - start_t) / (end_t - start_t), 0.0, 1.0)
            frac = u - np.sin(2.0 * np.pi * u) / (2.0 * np.pi)
            h[i], v[i] = begin + (target - begin) * frac
        else:
            jit = rng.standard_normal(2) * sigma
            norm = float(np.hypot(*jit))
            if norm > 3.0 * sigma and norm > 0:
                jit *= 3.0 * sigma / norm
            h[i] = payload[0] + jit[0]
            v[i] = payload[1] + jit[1]
    return Scanpath(t, h, v, rate)


def generate_static_trace(schedule: TargetSchedule, seed: int,
                          noise_deg: float = 0.03, rate: float = 30.0,
                          point: tuple[float, float] = (0.0, 0.0)) -> GazeTrace:
    """Eye-patch analog: gaze frozen at one point with measurement noise only."""
    rng = rng_for(seed, 4)
    n = int(round(schedule.duration * rate))
    t = np.arange(n) / rate
    h = point[0] + rng.standard_normal(n) * noise_deg
    v = point[1] + rng.standard_normal(n) * noise_deg
    return GazeTrace(t, h, v, np.ones(n))


def render_frame(h_deg: float, v_deg: float, profile: SubjectProfile,
                 texture: PolarTexture, noise_seed: int,
                 params: SynthParams = SynthParams()) -> tuple[GrayImage, IrisGeometry, BinaryMask]:
    """Render one frame plus its ground-truth geometry and annulus mask.

    Pupil center = image center + gain * (h, -v); boundaries are antialiased
    over one pixel so subpixel detection is meaningful.
    """
    w, hgt = params.frame_width, params.frame_height
    cx = w / 2.0 + profile.px_per_degree * h_deg
    cy = hgt / 2.0 - profile.px_per_degree * v_deg
    rng = rng_for(noise_seed, 5)
    pupil_r = profile.pupil_radius_base * (
        1.0 + float(np.clip(rng.standard_normal() * profile.pupillometry_noise,
                            -2.0 * profile.pupillometry_noise,
                            2.0 * profile.pupillometry_noise))
    )
    limbus_r = profile.limbus_radius
    if not (
        limbus_r <= cx <= w - 1 - limbus_r and limbus_r <= cy <= hgt - 1 - limbus_r
    ):
        raise GazeOutOfFrame(
            f"gaze ({h_deg:.2f}, {v_deg:.2f}) deg puts the limbus outside the frame"
        )

    canvas = np.full((hgt, w), params.sclera_intensity, dtype=np.float64)
    x0 = int(np.floor(cx - limbus_r - 1))
    x1 = int(np.ceil(cx + limbus_r + 1)) + 1
    y0 = int(np.floor(cy - limbus_r - 1))
    y1 = int(np.ceil(cy + limbus_r + 1)) + 1
    ys, xs = np.mgrid[y0:y1, x0:x1]
    d = np.hypot(xs - cx, ys - cy)
    theta = np.arctan2(ys - cy, xs - cx)
    r_hat = (d - pupil_r) / (limbus_r - pupil_r)
    iris_vals, _ = sample_polar(texture, np.clip(r_hat, 0.0, 1.0), theta)

    pupil_alpha = np.clip(d - (pupil_r - 0.5), 0.0, 1.0)   # 0 = pupil, 1 = iris
    sclera_alpha = np.clip(d - (limbus_r - 0.5), 0.0, 1.0)  # 0 = iris, 1 = sclera
    patch = params.pupil_intensity * (1 - pupil_alpha) + iris_vals * pupil_alpha
    patch = patch * (1 - sclera_alpha) + params.sclera_intensity * sclera_alpha
    canvas[y0:y1, x0:x1] = patch

    canvas += rng.standard_normal(canvas.shape) * params.pixel_noise_sigma
    img = GrayImage(np.clip(np.rint(canvas), 0, 255).astype(np.uint8))
    geom = IrisGeometry(
        Circle(PixelPoint(cx, cy), pupil_r),
        Circle(PixelPoint(cx, cy), limbus_r),
        w,
        hgt,
    )
    return img, geom, geometry_to_mask(geom)


def simulate_frame_drops(n_frames: int, camera_rate: float, mode: str,
                         seed: int, params: SynthParams = SynthParams()) -> np.ndarray:
    """Kept frame indices. Offline keeps everything; online keeps every k-th
    frame with k drawn once per run and clamped so the output rate stays in
    [min_output_rate, camera_rate]."""
    if n_frames < 1:
        raise ValueError("need at least one frame")
    if mode == "offline":
        return np.arange(n_frames)
    if mode != "online":
        raise ValueError(f"unknown mode {mode!r}")
    rng = rng_for(seed, 6)
    k = int(round(rng.normal(params.decimation_mean, params.decimation_std)))
    k_max = int(np.floor(camera_rate / params.min_output_rate_hz))
    k = int(np.clip(k, 1, max(1, k_max)))
    return np.arange(0, n_frames, k)
