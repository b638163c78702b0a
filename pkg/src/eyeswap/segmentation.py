"""Classical pupil/limbus boundary detection and the iris annulus mask.

The pupil is found as the largest dark connected component, refined by one
radial edge search. The limbus is the circle maximizing the smoothed radial
derivative of mean on-circle intensity (the strongest dark-to-bright
transition), searched over a small center neighborhood and a radius band
proportional to the pupil radius. Both boundaries are circles; stray
off-annulus pixels are structurally impossible with this parameterization.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import DimensionMismatch, NoLimbusFound, NoPupilFound
from .imaging import GrayImage, PixelPoint, bilinear_grid


@dataclass(frozen=True)
class Circle:
    center: PixelPoint
    radius: float

    def __post_init__(self):
        if not (self.radius > 0):
            raise ValueError(f"circle radius must be positive, got {self.radius}")


@dataclass(frozen=True)
class IrisGeometry:
    """Pupil and limbus boundary circles for one frame."""

    pupil: Circle
    limbus: Circle
    frame_width: int
    frame_height: int

    def __post_init__(self):
        dx = self.pupil.center.x - self.limbus.center.x
        dy = self.pupil.center.y - self.limbus.center.y
        if np.hypot(dx, dy) > 0.5 * self.limbus.radius:
            raise ValueError("pupil and limbus centers too far apart")
        if not (self.pupil.radius < self.limbus.radius):
            raise ValueError("pupil radius must be smaller than limbus radius")


@dataclass(frozen=True)
class BinaryMask:
    """Row-major boolean pixel mask (True = iris class)."""

    bits: np.ndarray

    def __post_init__(self):
        b = np.asarray(self.bits)
        if b.ndim != 2:
            raise ValueError(f"expected 2-D mask, got shape {b.shape}")
        if b.dtype != np.bool_:
            b = b.astype(bool)
        b = np.ascontiguousarray(b)
        b.setflags(write=False)
        object.__setattr__(self, "bits", b)

    @property
    def width(self) -> int:
        return self.bits.shape[1]

    @property
    def height(self) -> int:
        return self.bits.shape[0]

    @property
    def area(self) -> int:
        return int(self.bits.sum())


@dataclass(frozen=True)
class SegmentationParams:
    pupil_threshold: float = 60.0
    min_pupil_area: int = 100
    limbus_rmin_factor: float = 1.8
    limbus_rmax_factor: float = 3.5
    min_limbus_contrast: float = 5.0
    min_frame_side: int = 32


def _check_frame(img: GrayImage, cfg: SegmentationParams) -> None:
    if img.width < cfg.min_frame_side or img.height < cfg.min_frame_side:
        raise NoPupilFound(
            f"frame {img.width}x{img.height} below the {cfg.min_frame_side} px minimum"
        )


def _radial_profiles(pixels: np.ndarray, cx: float, cy: float,
                     radii: np.ndarray, n_angles: int) -> tuple[np.ndarray, np.ndarray]:
    """Sample intensities on concentric circles.

    Returns (samples, in_frame) with shape (len(radii), n_angles); out-of-frame
    points carry arbitrary values and in_frame False.
    """
    h, w = pixels.shape
    theta = np.arange(n_angles) * (2.0 * np.pi / n_angles)
    ux, uy = np.cos(theta), np.sin(theta)
    xs = cx + np.outer(radii, ux)
    ys = cy + np.outer(radii, uy)
    ok = (xs >= 0) & (xs <= w - 1) & (ys >= 0) & (ys <= h - 1)
    vals = bilinear_grid(pixels, np.clip(xs, 0, w - 1), np.clip(ys, 0, h - 1))
    return vals, ok


def detect_pupil(img: GrayImage, cfg: SegmentationParams = SegmentationParams()) -> Circle:
    """Fit a circle to the largest dark connected component.

    Center starts at the component centroid and radius at sqrt(area/pi), then
    one pass of radial edge search snaps both to the dark-to-bright boundary.
    """
    _check_frame(img, cfg)
    dark = img.pixels < cfg.pupil_threshold
    labels, n = ndimage.label(dark)
    if n == 0:
        raise NoPupilFound("no pixels below the pupil threshold")
    areas = np.bincount(labels.ravel())
    areas[0] = 0
    best = int(np.argmax(areas))
    if areas[best] < cfg.min_pupil_area:
        raise NoPupilFound(
            f"largest dark component has {areas[best]} px < {cfg.min_pupil_area}"
        )
    ys, xs = np.nonzero(labels == best)
    cx, cy = float(xs.mean()), float(ys.mean())
    r0 = float(np.sqrt(areas[best] / np.pi))

    # One refinement pass: per ray, locate the max outward intensity gradient
    # near r0 and re-fit center/radius from those boundary points.
    n_angles = 64
    radii = np.arange(max(1.0, r0 - 4.0), r0 + 4.0 + 0.25, 0.25)
    vals, ok = _radial_profiles(img.pixels, cx, cy, radii, n_angles)
    grad = np.diff(vals, axis=0)
    grad[~(ok[:-1] & ok[1:])] = -np.inf
    idx = np.argmax(grad, axis=0)
    usable = np.isfinite(grad[idx, np.arange(n_angles)])
    if usable.sum() >= 8:
        r_edge = radii[idx] + 0.125
        theta = np.arange(n_angles) * (2.0 * np.pi / n_angles)
        bx = cx + r_edge * np.cos(theta)
        by = cy + r_edge * np.sin(theta)
        cx, cy = float(bx[usable].mean()), float(by[usable].mean())
        r0 = float(np.median(np.hypot(bx[usable] - cx, by[usable] - cy)))
    return Circle(PixelPoint(cx, cy), r0)


def detect_limbus(img: GrayImage, pupil: Circle,
                  cfg: SegmentationParams = SegmentationParams()) -> Circle:
    """Find the iris-sclera boundary around a detected pupil.

    Scans radii in [rmin, rmax] * pupil radius at the pupil center, then
    refines center (+-3 px) and radius jointly; the score is the 3-tap boxcar
    smoothed radial derivative of the mean on-circle intensity, computed over
    in-frame samples only (at least half the circle must be visible).
    """
    px, py = pupil.center.x, pupil.center.y
    rmin = cfg.limbus_rmin_factor * pupil.radius
    rmax = cfg.limbus_rmax_factor * pupil.radius
    n_angles = 96

    def band_score(cx: float, cy: float, radii: np.ndarray) -> tuple[float, float]:
        vals, ok = _radial_profiles(img.pixels, cx, cy, radii, n_angles)
        visible = ok.sum(axis=1)
        mean = np.where(visible > 0, (vals * ok).sum(axis=1) / np.maximum(visible, 1), np.nan)
        deriv = (mean[1:] - mean[:-1]) / (radii[1:] - radii[:-1])
        deriv[(visible[:-1] < n_angles // 2) | (visible[1:] < n_angles // 2)] = -np.inf
        deriv[~np.isfinite(deriv)] = -np.inf
        sm = np.full_like(deriv, -np.inf)
        if deriv.size >= 3:
            sm[1:-1] = (deriv[:-2] + deriv[1:-1] + deriv[2:]) / 3.0
        if not np.isfinite(sm).any():
            return -np.inf, rmin
        k = int(np.argmax(sm))
        return float(sm[k]), float(0.5 * (radii[k] + radii[k + 1]))

    coarse = np.arange(rmin, rmax + 1.0, 1.0)
    score0, r_best = band_score(px, py, coarse)
    if not np.isfinite(score0):
        raise NoLimbusFound("limbus search band has no visible candidates")

    best = (score0, r_best, px, py)
    fine = np.arange(max(rmin, r_best - 3.0), min(rmax, r_best + 3.0) + 0.5, 0.5)
    for dy in (-3.0, -1.5, 0.0, 1.5, 3.0):
        for dx in (-3.0, -1.5, 0.0, 1.5, 3.0):
            if dx == 0.0 and dy == 0.0:
                continue
            s, r = band_score(px + dx, py + dy, fine)
            if s > best[0]:
                best = (s, r, px + dx, py + dy)

    score, radius, cx, cy = best
    if score < cfg.min_limbus_contrast:
        raise NoLimbusFound(
            f"max radial contrast {score:.2f} below {cfg.min_limbus_contrast}"
        )
    return Circle(PixelPoint(cx, cy), radius)


def detect_geometry(img: GrayImage, cfg: SegmentationParams = SegmentationParams()) -> IrisGeometry:
    """Full two-stage segmentation of one frame."""
    pupil = detect_pupil(img, cfg)
    limbus = detect_limbus(img, pupil, cfg)
    return IrisGeometry(pupil, limbus, img.width, img.height)


def geometry_to_mask(geom: IrisGeometry) -> BinaryMask:
    """Rasterize the annulus: inside the limbus circle and outside the pupil circle."""
    ys, xs = np.mgrid[0 : geom.frame_height, 0 : geom.frame_width]
    d_pup = np.hypot(xs - geom.pupil.center.x, ys - geom.pupil.center.y)
    d_lim = np.hypot(xs - geom.limbus.center.x, ys - geom.limbus.center.y)
    return BinaryMask((d_lim <= geom.limbus.radius) & (d_pup > geom.pupil.radius))


def mask_to_image(mask: BinaryMask) -> GrayImage:
    """Serialize a mask as an 8-bit image (0 = background, 255 = iris)."""
    return GrayImage(np.where(mask.bits, 255, 0).astype(np.uint8))


def image_to_mask(img: GrayImage) -> BinaryMask:
    return BinaryMask(img.pixels >= 128)


def dice_score(pred: BinaryMask, truth: BinaryMask) -> float:
    """2|A & B| / (|A| + |B|); 1.0 when both masks are empty."""
    if pred.bits.shape != truth.bits.shape:
        raise DimensionMismatch(
            f"mask shapes differ: {pred.bits.shape} vs {truth.bits.shape}"
        )
    a = int(pred.bits.sum())
    b = int(truth.bits.sum())
    if a + b == 0:
        return 1.0
    inter = int((pred.bits & truth.bits).sum())
    return 2.0 * inter / (a + b)
