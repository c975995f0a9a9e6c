"""FFT services, phase correlation and the peak-to-correlation-energy test."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.fft as sfft

from .exceptions import DegenerateInputError, DimensionMismatchError, SizeTooSmallError
from .imgcore import GrayImage, validate_image

#: half-width of the square neighborhood excluded around the correlation peak
#: when estimating the PCE floor (11x11 window, standard in the PRNU literature)
PCE_PEAK_RADIUS = 5


@dataclass(frozen=True)
class Spectrum:
    """Centered 2-D DFT: complex array with DC at (N/2, N/2), N a power of two."""

    data: np.ndarray
    fft_size: int

    @property
    def center(self) -> int:
        return self.fft_size // 2


@dataclass(frozen=True)
class PceResult:
    """PCE statistic with the peak location and the correlation-floor energy.

    peak_pos is the signed circular shift (dy, dx) of the correlation maximum;
    plane_energy is the mean squared correlation outside the peak neighborhood.
    """

    pce: float
    peak_pos: tuple[int, int]
    peak_value: float
    plane_energy: float


def _check_pow2(n: int) -> None:
    if n < 1 or (n & (n - 1)) != 0:
        raise ValueError(f"fft size must be a power of two, got {n}")


def fft2_padded(img: GrayImage, fft_size: int) -> Spectrum:
    """Zero-pad an image at the top-left of an fft_size^2 canvas and transform.

    The result is quadrant-swapped so DC sits at (N/2, N/2).
    """
    img = validate_image(img)
    _check_pow2(fft_size)
    if fft_size < max(img.shape):
        raise SizeTooSmallError(
            f"fft size {fft_size} smaller than image {img.shape}"
        )
    buf = np.zeros((fft_size, fft_size), np.float64)
    buf[: img.shape[0], : img.shape[1]] = img
    return Spectrum(sfft.fftshift(sfft.fft2(buf)), fft_size)


def phase_correlate(A: Spectrum, B: Spectrum):
    """Phase correlation of the two images behind the given spectra.

    Normalizes the cross spectrum A*conj(B) by its magnitude (regularized by
    1e-12 of the peak magnitude) and inverts. Returns (peak_pos, peak_value,
    plane) where peak_pos is the signed shift (dy, dx) of B relative to A:
    if B is A rolled by (dy, dx), the peak lands at (dy, dx). plane[0, 0]
    corresponds to zero shift.
    """
    if A.fft_size != B.fft_size:
        raise DimensionMismatchError(
            f"spectra sizes differ: {A.fft_size} vs {B.fft_size}"
        )
    cross = A.data * np.conj(B.data)
    mag = np.abs(cross)
    peak_mag = mag.max()
    if peak_mag == 0.0:
        raise DegenerateInputError("phase correlation of a zero spectrum")
    cross /= mag + 1e-12 * peak_mag
    plane = np.real(sfft.ifft2(sfft.ifftshift(cross)))
    idx = int(np.argmax(plane))
    py, px = np.unravel_index(idx, plane.shape)
    value = float(plane[py, px])
    n = A.fft_size
    dy = py - n if py > n // 2 else py
    dx = px - n if px > n // 2 else px
    # roll by (dy, dx) shows up mirrored in the A*conj(B) convention
    return (-dy if dy != 0 else 0, -dx if dx != 0 else 0), value, plane


def pce(W, ref: GrayImage) -> PceResult:
    """Peak-to-correlation energy between a residual and a reference raster.

    The normalized circular cross-correlation plane is computed via FFT and
    the (signed) peak searched over the full plane, so the statistic is
    invariant to any mutual shift. PCE = peak^2 / mean(corr^2) with an 11x11
    neighborhood around the peak excluded from the floor.
    """
    w = np.asarray(getattr(W, "raster", W), dtype=np.float64)
    r = np.asarray(ref, dtype=np.float64)
    if w.shape != r.shape:
        raise DimensionMismatchError(f"shape mismatch {w.shape} vs {r.shape}")
    w = w - w.mean()
    r = r - r.mean()
    nw, nr = np.linalg.norm(w), np.linalg.norm(r)
    if nw == 0.0 or nr == 0.0:
        raise DegenerateInputError("PCE of a zero-energy input")
    corr = np.real(sfft.ifft2(sfft.fft2(w) * np.conj(sfft.fft2(r)))) / (nw * nr)
    idx = int(np.argmax(corr))
    py, px = np.unravel_index(idx, corr.shape)
    peak = float(corr[py, px])
    h, wd = corr.shape
    ys = np.arange(py - PCE_PEAK_RADIUS, py + PCE_PEAK_RADIUS + 1) % h
    xs = np.arange(px - PCE_PEAK_RADIUS, px + PCE_PEAK_RADIUS + 1) % wd
    mask = np.ones(corr.shape, bool)
    mask[np.ix_(ys, xs)] = False
    floor = float(np.mean(corr[mask] ** 2))
    dy = py - h if py > h // 2 else py
    dx = px - wd if px > wd // 2 else px
    return PceResult(
        pce=peak * peak / floor if floor > 0 else np.inf,
        peak_pos=(int(dy), int(dx)),
        peak_value=peak,
        plane_energy=floor,
    )
