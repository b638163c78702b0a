"""Rubber-sheet normalization of the iris annulus and the inverse swap.

The forward map unwraps the annulus into a (normalized radius x angle) grid
with a homogeneous (linear in normalized radius) interpolation law between the
pupil and limbus boundary points. The inverse map writes a victim's polar
texture back into an attacker's annulus, which is how one identity is spoofed
into another eye.
"""

from __future__ import annotations

import logging
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DegenerateTexture, InvalidGeometry, IoFailure, MalformedHeader
from .imaging import GrayImage, bilinear_grid
from .segmentation import BinaryMask, IrisGeometry, geometry_to_mask

log = logging.getLogger(__name__)

_TEXTURE_MAGIC = b"PTX1"

DEFAULT_RADIAL_RES = 64
DEFAULT_ANGULAR_RES = 512


@dataclass(frozen=True)
class PolarTexture:
    """Normalized iris texture: rows span radius 0..1, columns span angle 0..2pi.

    ``valid`` is False wherever the source pixel fell outside the frame or
    outside the annulus.
    """

    intensities: np.ndarray
    valid: np.ndarray

    def __post_init__(self):
        inten = np.ascontiguousarray(np.asarray(self.intensities, dtype=np.float64))
        val = np.ascontiguousarray(np.asarray(self.valid, dtype=bool))
        if inten.ndim != 2 or inten.shape != val.shape:
            raise ValueError(
                f"intensity/validity shapes differ: {inten.shape} vs {val.shape}"
            )
        inten.setflags(write=False)
        val.setflags(write=False)
        object.__setattr__(self, "intensities", inten)
        object.__setattr__(self, "valid", val)

    @property
    def radial_res(self) -> int:
        return self.intensities.shape[0]

    @property
    def angular_res(self) -> int:
        return self.intensities.shape[1]

    @property
    def valid_fraction(self) -> float:
        return float(self.valid.mean())


def _check_geometry(img: GrayImage, geom: IrisGeometry) -> None:
    if geom.frame_width != img.width or geom.frame_height != img.height:
        raise InvalidGeometry(
            f"geometry is for a {geom.frame_width}x{geom.frame_height} frame, "
            f"image is {img.width}x{img.height}"
        )
    inside = (
        0 <= geom.pupil.center.x < img.width and 0 <= geom.pupil.center.y < img.height
    )
    if not inside:
        raise InvalidGeometry("pupil center outside the frame")


def sample_polar(tex: PolarTexture, r_hat: np.ndarray, theta: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Bilinear texture lookup with angular wraparound and radial clamping.

    Returns (values, usable); usable is False where any of the 4 contributing
    cells is invalid.
    """
    nr, na = tex.intensities.shape
    row = np.clip(np.asarray(r_hat, dtype=np.float64), 0.0, 1.0) * (nr - 1)
    col = (np.asarray(theta, dtype=np.float64) / (2.0 * np.pi)) % 1.0 * na
    r0 = np.floor(row).astype(np.intp)
    r1 = np.minimum(r0 + 1, nr - 1)
    c0 = np.floor(col).astype(np.intp) % na
    c1 = (c0 + 1) % na
    fr = row - np.floor(row)
    fc = col - np.floor(col)
    t = tex.intensities
    top = t[r0, c0] * (1.0 - fc) + t[r0, c1] * fc
    bot = t[r1, c0] * (1.0 - fc) + t[r1, c1] * fc
    values = top * (1.0 - fr) + bot * fr
    v = tex.valid
    usable = v[r0, c0] & v[r0, c1] & v[r1, c0] & v[r1, c1]
    return values, usable


def unwrap(img: GrayImage, geom: IrisGeometry,
           radial_res: int = DEFAULT_RADIAL_RES,
           angular_res: int = DEFAULT_ANGULAR_RES) -> PolarTexture:
    """Unwrap the annulus into a polar grid.

    Sample points are (1 - r)*P(theta) + r*L(theta) with P, L on the pupil and
    limbus circles; cells are invalid when the point leaves the frame or the
    annulus (possible for strongly offset centers).
    """
    _check_geometry(img, geom)
    if radial_res < 2 or angular_res < 4:
        raise InvalidGeometry(f"degenerate polar grid {radial_res}x{angular_res}")
    theta = np.arange(angular_res) * (2.0 * np.pi / angular_res)
    ux, uy = np.cos(theta), np.sin(theta)
    pxs = geom.pupil.center.x + geom.pupil.radius * ux
    pys = geom.pupil.center.y + geom.pupil.radius * uy
    lxs = geom.limbus.center.x + geom.limbus.radius * ux
    lys = geom.limbus.center.y + geom.limbus.radius * uy
    r_hat = (np.arange(radial_res) / (radial_res - 1))[:, None]
    xs = (1.0 - r_hat) * pxs[None, :] + r_hat * lxs[None, :]
    ys = (1.0 - r_hat) * pys[None, :] + r_hat * lys[None, :]

    in_frame = (xs >= 0) & (xs <= img.width - 1) & (ys >= 0) & (ys <= img.height - 1)
    eps = 1e-9
    d_pup = np.hypot(xs - geom.pupil.center.x, ys - geom.pupil.center.y)
    d_lim = np.hypot(xs - geom.limbus.center.x, ys - geom.limbus.center.y)
    in_annulus = (d_pup >= geom.pupil.radius - eps) & (d_lim <= geom.limbus.radius + eps)
    valid = in_frame & in_annulus

    vals = bilinear_grid(
        img.pixels,
        np.clip(xs, 0, img.width - 1),
        np.clip(ys, 0, img.height - 1),
    )
    vals[~valid] = 0.0
    return PolarTexture(vals, valid)


def inverse_coordinates(geom: IrisGeometry, xs: np.ndarray, ys: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Map frame pixels to (normalized radius, angle) w.r.t. a geometry.

    The angle is measured about the pupil center; the normalized radius is
    (d - r_pupil) / (d_limbus - r_pupil) with d_limbus the distance from the
    pupil center to the limbus circle along the pixel's ray. Consistent with
    the forward map for concentric circles and well defined otherwise.
    """
    dx = xs - geom.pupil.center.x
    dy = ys - geom.pupil.center.y
    d = np.hypot(dx, dy)
    theta = np.arctan2(dy, dx) % (2.0 * np.pi)
    with np.errstate(invalid="ignore", divide="ignore"):
        ux = np.where(d > 0, dx / np.maximum(d, 1e-12), 1.0)
        uy = np.where(d > 0, dy / np.maximum(d, 1e-12), 0.0)
    ex = geom.limbus.center.x - geom.pupil.center.x
    ey = geom.limbus.center.y - geom.pupil.center.y
    b = ex * ux + ey * uy
    disc = geom.limbus.radius**2 - (ex * ex + ey * ey - b * b)
    d_lim = b + np.sqrt(np.maximum(disc, 0.0))
    r_hat = (d - geom.pupil.radius) / np.maximum(d_lim - geom.pupil.radius, 1e-9)
    return r_hat, theta


def swap_iris(attacker: GrayImage, geom: IrisGeometry, victim: PolarTexture,
              mask: BinaryMask | None = None) -> GrayImage:
    """Write the victim's polar texture into the attacker's annulus.

    Pixels outside the annulus mask are untouched. Where the victim texture is
    invalid the attacker's original pixel is kept; the fallback fill ratio is
    logged because visible seams are a known artifact of the technique.
    """
    _check_geometry(attacker, geom)
    if mask is None:
        mask = geometry_to_mask(geom)
    if mask.bits.shape != attacker.pixels.shape:
        raise InvalidGeometry("annulus mask does not match the frame")

    ys, xs = np.nonzero(mask.bits)
    out = np.array(attacker.pixels, copy=True)
    if len(xs) == 0:
        return GrayImage(out)

    r_hat, theta = inverse_coordinates(geom, xs.astype(np.float64), ys.astype(np.float64))
    values, usable = sample_polar(victim, r_hat, theta)
    write = usable
    if not write.all():
        log.debug(
            "swap fallback: %.4f of annulus pixels kept original values",
            1.0 - write.mean(),
        )
    vals_u8 = np.clip(np.rint(values[write]), 0, 255).astype(np.uint8)
    out[ys[write], xs[write]] = vals_u8
    return GrayImage(out)


def match_intensity(victim: PolarTexture, target_mean: float, target_std: float) -> PolarTexture:
    """Affine remap of valid cells to a target mean/std, clamped to [0, 255]."""
    vals = victim.intensities[victim.valid]
    if vals.size < 2:
        raise DegenerateTexture("fewer than 2 valid cells")
    mean = float(vals.mean())
    std = float(vals.std())
    if std == 0.0:
        raise DegenerateTexture("texture has zero variance")
    out = victim.intensities.copy()
    out[victim.valid] = np.clip(
        (victim.intensities[victim.valid] - mean) / std * target_std + target_mean,
        0.0,
        255.0,
    )
    return PolarTexture(out, victim.valid)


def save_texture(tex: PolarTexture, path: str | Path) -> None:
    """Binary texture file: magic, dims, float32 intensities, packed validity bits."""
    header = _TEXTURE_MAGIC + struct.pack("<II", tex.radial_res, tex.angular_res)
    body = tex.intensities.astype("<f4").tobytes()
    bits = np.packbits(tex.valid.ravel()).tobytes()
    try:
        Path(path).write_bytes(header + body + bits)
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc


def load_texture(path: str | Path) -> PolarTexture:
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc
    if data[:4] != _TEXTURE_MAGIC:
        raise MalformedHeader(f"{path}: not a polar texture file")
    nr, na = struct.unpack("<II", data[4:12])
    n = nr * na
    body_end = 12 + 4 * n
    bits_len = (n + 7) // 8
    if len(data) < body_end + bits_len:
        raise MalformedHeader(f"{path}: truncated texture payload")
    inten = np.frombuffer(data[12:body_end], dtype="<f4").astype(np.float64).reshape(nr, na)
    valid = np.unpackbits(
        np.frombuffer(data[body_end : body_end + bits_len], dtype=np.uint8)
    )[:n].astype(bool).reshape(nr, na)
    return PolarTexture(inten, valid)
