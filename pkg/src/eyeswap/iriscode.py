"""Phase-quantized Gabor iris templates and Hamming-distance authentication.

Each template cell holds two bits: the signs of the real and imaginary parts
of a complex 2-D Gabor response over the unwrapped texture. Cells whose
response magnitude is negligible, or whose filter footprint touches an invalid
texture cell, are masked out. Matching takes the minimum fractional Hamming
distance over a small range of angular shifts so that eye roll between
captures only ever lowers the score.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import GeometryMismatch, InsufficientMask, IoFailure, MalformedHeader, TextureTooSmall
from .rubbersheet import PolarTexture

_TEMPLATE_MAGIC = b"ITP1"

DEFAULT_HD_THRESHOLD = 0.37
DEFAULT_MAX_SHIFT = 8


@dataclass(frozen=True)
class GaborParams:
    bands: int = 8
    angular_positions: int = 128
    wavelength: float = 18.0          # carrier period in angular samples
    sigma_ratio: float = 0.5          # angular Gaussian sigma / wavelength
    radial_sigma: float = 2.0         # rows
    radial_halfwidth: int = 3         # kernel rows = 2*halfwidth + 1
    min_magnitude_ratio: float = 1e-3  # of the texture's dynamic range

    def kernel(self) -> np.ndarray:
        """Complex zero-mean kernel with unit L1 gain."""
        hr = self.radial_halfwidth
        hc = max(1, int(round(2.0 * self.sigma_ratio * self.wavelength)))
        dr = np.arange(-hr, hr + 1)[:, None]
        dc = np.arange(-hc, hc + 1)[None, :]
        envelope = np.exp(
            -(dr**2) / (2.0 * self.radial_sigma**2)
            - (dc**2) / (2.0 * (self.sigma_ratio * self.wavelength) ** 2)
        )
        k = envelope * np.exp(2j * np.pi * dc / self.wavelength)
        k = k - k.mean()  # exact zero response on constant input
        return k / np.abs(k).sum()


@dataclass(frozen=True)
class IrisTemplate:
    """code/mask are (bands, angular_positions, 2) bit planes."""

    code: np.ndarray
    mask: np.ndarray

    def __post_init__(self):
        code = np.ascontiguousarray(np.asarray(self.code, dtype=bool))
        mask = np.ascontiguousarray(np.asarray(self.mask, dtype=bool))
        if code.ndim != 3 or code.shape[2] != 2 or code.shape != mask.shape:
            raise ValueError(f"bad template planes: {code.shape} vs {mask.shape}")
        code.setflags(write=False)
        mask.setflags(write=False)
        object.__setattr__(self, "code", code)
        object.__setattr__(self, "mask", mask)

    @property
    def bands(self) -> int:
        return self.code.shape[0]

    @property
    def angular_positions(self) -> int:
        return self.code.shape[1]

    @property
    def n_bits(self) -> int:
        return self.code.size

    @property
    def mask_coverage(self) -> float:
        return float(self.mask.mean())


def encode(tex: PolarTexture, params: GaborParams = GaborParams()) -> IrisTemplate:
    """Extract the binary template from an unwrapped texture.

    Responses are computed by sliding the complex kernel along each band with
    angular wraparound; the sliding is done with gathered circular shifts, so
    a texture rotated by a whole angular step yields exactly the bit-rotated
    template.
    """
    nr, na = tex.intensities.shape
    k = params.kernel()
    hr = params.radial_halfwidth
    hc = (k.shape[1] - 1) // 2
    if na % params.angular_positions != 0:
        raise ValueError(
            f"angular resolution {na} not a multiple of {params.angular_positions} positions"
        )
    band_rows = np.round((np.arange(params.bands) + 0.5) * nr / params.bands).astype(int)
    if 2 * hc + 1 > na or band_rows[0] - hr < 0 or band_rows[-1] + hr > nr - 1:
        raise TextureTooSmall(
            f"texture {nr}x{na} smaller than the {2 * hr + 1}x{2 * hc + 1} filter footprint"
        )

    valid_vals = tex.intensities[tex.valid]
    dyn_range = float(valid_vals.max() - valid_vals.min()) if valid_vals.size else 0.0
    min_mag = params.min_magnitude_ratio * dyn_range

    step = na // params.angular_positions
    dcs = np.arange(-hc, hc + 1)
    col_idx = (np.arange(na)[None, :] + dcs[:, None]) % na  # (taps, na)
    all_valid = bool(tex.valid.all())

    code = np.zeros((params.bands, params.angular_positions, 2), dtype=bool)
    mask = np.zeros_like(code)
    invalid = ~tex.valid
    for b, row in enumerate(band_rows):
        resp = np.zeros(na, dtype=complex)
        touched = np.zeros(na, dtype=bool)
        for i, dr in enumerate(range(-hr, hr + 1)):
            shifted = tex.intensities[row + dr][col_idx]  # (taps, na)
            resp += k[i] @ shifted
            if not all_valid:
                touched |= (invalid[row + dr][col_idx]).any(axis=0)
        r = resp[::step]
        code[b, :, 0] = r.real >= 0
        code[b, :, 1] = r.imag >= 0
        mask[b, :, 0] = mask[b, :, 1] = (np.abs(r) >= min_mag) & ~touched[::step]
    return IrisTemplate(code, mask)


def hamming_distance(a: IrisTemplate, b: IrisTemplate,
                     max_shift: int = DEFAULT_MAX_SHIFT) -> float:
    """Fractional HD over jointly usable bits, minimized over angular shifts."""
    if a.bands != b.bands or a.angular_positions != b.angular_positions:
        raise GeometryMismatch(
            f"template geometries differ: {a.bands}x{a.angular_positions} vs "
            f"{b.bands}x{b.angular_positions}"
        )
    if a.mask_coverage < 0.25 or b.mask_coverage < 0.25:
        raise InsufficientMask("template has fewer than 25% usable bits")
    best = None
    min_joint = 0.25 * a.n_bits
    for shift in range(-max_shift, max_shift + 1):
        code_b = np.roll(b.code, shift, axis=1)
        mask_b = np.roll(b.mask, shift, axis=1)
        joint = a.mask & mask_b
        n = int(joint.sum())
        if n == 0 or n < min_joint:
            continue
        hd = int(((a.code ^ code_b) & joint).sum()) / n
        if best is None or hd < best:
            best = hd
    if best is None:
        raise InsufficientMask("no angular shift leaves 25% jointly usable bits")
    return best


@dataclass(frozen=True)
class AuthDecision:
    accepted: bool
    hd: float
    threshold: float

    @property
    def decision(self) -> str:
        return "accept" if self.accepted else "reject"


def authenticate(probe: IrisTemplate, enrolled: IrisTemplate,
                 threshold: float = DEFAULT_HD_THRESHOLD,
                 max_shift: int = DEFAULT_MAX_SHIFT) -> AuthDecision:
    """Accept iff HD is strictly below the threshold."""
    hd = hamming_distance(probe, enrolled, max_shift)
    return AuthDecision(hd < threshold, hd, threshold)


def save_template(tpl: IrisTemplate, path: str | Path) -> None:
    """Template file: magic, dims, packed code bits, packed mask bits."""
    header = _TEMPLATE_MAGIC + struct.pack("<II", tpl.bands, tpl.angular_positions)
    body = np.packbits(tpl.code.ravel()).tobytes() + np.packbits(tpl.mask.ravel()).tobytes()
    try:
        Path(path).write_bytes(header + body)
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc


def load_template(path: str | Path) -> IrisTemplate:
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc
    if data[:4] != _TEMPLATE_MAGIC:
        raise MalformedHeader(f"{path}: not a template file")
    bands, positions = struct.unpack("<II", data[4:12])
    n = bands * positions * 2
    nbytes = (n + 7) // 8
    if len(data) < 12 + 2 * nbytes:
        raise MalformedHeader(f"{path}: truncated template payload")
    code = np.unpackbits(np.frombuffer(data[12 : 12 + nbytes], dtype=np.uint8))[:n]
    mask = np.unpackbits(np.frombuffer(data[12 + nbytes : 12 + 2 * nbytes], dtype=np.uint8))[:n]
    shape = (bands, positions, 2)
    return IrisTemplate(code.astype(bool).reshape(shape), mask.astype(bool).reshape(shape))
