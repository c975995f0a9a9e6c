"""Sensor-noise residual extraction.

The residual is what remains of a frame after wavelet-based denoising,
post-processed by row/column zero-averaging and spectral Wiener filtering
to suppress periodic (non-unique) artifacts. The wavelet stage follows the
standard PRNU recipe: 4-level decomposition with the 8-tap Daubechies
filter, detail coefficients attenuated by a locally adaptive Wiener rule
(minimum variance over 3/5/7/9 windows, noise floor sigma0 on a 0-255
intensity scale), approximation discarded.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.fft as sfft
from scipy.ndimage import correlate1d, uniform_filter

from .exceptions import TooSmallError
from .imgcore import GrayImage, validate_image

WAVELET_LEVELS = 4
SIGMA0 = 5.0
_WIENER_WINDOWS = (3, 5, 7, 9)

# db4 scaling filter (8 taps); the rest of the orthogonal bank derives from it
_H = np.array(
    [
        0.23037781330885523,
        0.7148465705525415,
        0.6308807679295904,
        -0.02798376941698385,
        -0.18703481171888114,
        0.030841381835986965,
        0.032883011666982945,
        -0.010597401784997278,
    ]
)
_L = len(_H)
_DEC_LO = _H[::-1].copy()
_G = np.array([(-1) ** n * _H[_L - 1 - n] for n in range(_L)])
_DEC_HI = _G[::-1].copy()
_REC_LO, _REC_HI = _H, _G


@dataclass(frozen=True)
class NoiseResidual:
    """Post-processed noise residual; rows and columns are zero-mean."""

    raster: GrayImage
    source_dims: tuple[int, int]

    @property
    def shape(self) -> tuple[int, int]:
        return self.raster.shape


# ---------------------------------------------------------------------------
# separable 2-D DWT with symmetric extension
# ---------------------------------------------------------------------------

def _conv_valid(x: np.ndarray, filt: np.ndarray) -> np.ndarray:
    """'valid' convolution along the last axis via ndimage's C kernel."""
    n = x.shape[-1]
    same = correlate1d(x, filt[::-1], axis=-1, mode="constant")
    return same[..., _L // 2 : _L // 2 + n - _L + 1]


def _analyze_axis(x: np.ndarray, axis: int):
    x = np.moveaxis(x, axis, -1)
    ext = np.pad(x, [(0, 0)] * (x.ndim - 1) + [(_L - 1, _L - 1)], mode="symmetric")
    lo = _conv_valid(ext, _DEC_LO)[..., 1::2]
    hi = _conv_valid(ext, _DEC_HI)[..., 1::2]
    return np.moveaxis(lo, -1, axis), np.moveaxis(hi, -1, axis)


def _synth_axis(lo: np.ndarray, hi: np.ndarray, n: int, axis: int):
    lo = np.moveaxis(lo, axis, -1)
    hi = np.moveaxis(hi, axis, -1)
    up_shape = lo.shape[:-1] + (2 * lo.shape[-1] + 2 * (_L - 1),)
    ulo = np.zeros(up_shape)
    uhi = np.zeros(up_shape)
    ulo[..., _L - 1 : -(_L - 1) : 2] = lo
    uhi[..., _L - 1 : -(_L - 1) : 2] = hi
    y = _conv_valid(ulo, _REC_LO) + _conv_valid(uhi, _REC_HI)
    y = y[..., _L - 2 : _L - 2 + n]
    return np.moveaxis(y, -1, axis)


def _dwt2(x: np.ndarray):
    lo, hi = _analyze_axis(x, 0)
    ll, lh = _analyze_axis(lo, 1)
    hl, hh = _analyze_axis(hi, 1)
    return ll, (lh, hl, hh)


def _idwt2(ll, details, shape):
    lh, hl, hh = details
    lo = _synth_axis(ll, lh, shape[1], 1)
    hi = _synth_axis(hl, hh, shape[1], 1)
    return _synth_axis(lo, hi, shape[0], 0)


def _wiener_adaptive(coeff: np.ndarray, noise_var: float) -> np.ndarray:
    """Keep the noise component of a detail band.

    Local signal variance is the minimum over square-window energy averages
    minus the noise floor (clamped at zero); the Wiener gain
    noise_var / (var + noise_var) passes noise through and suppresses
    signal-dominated coefficients.
    """
    energy = coeff * coeff
    var_min = None
    for w in _WIENER_WINDOWS:
        avg = uniform_filter(energy, w, mode="constant")
        var_min = avg if var_min is None else np.minimum(var_min, avg)
    var_min = np.maximum(var_min - noise_var, 0.0)
    return coeff * (noise_var / (var_min + noise_var))


def _wavelet_noise(img: np.ndarray, sigma0: float) -> np.ndarray:
    """Noise field reconstructed from Wiener-filtered detail bands only."""
    noise_var = sigma0 * sigma0
    shapes = []
    details = []
    approx = img
    for _ in range(WAVELET_LEVELS):
        shapes.append(approx.shape)
        approx, det = _dwt2(approx)
        details.append(tuple(_wiener_adaptive(d, noise_var) for d in det))
    out = np.zeros_like(approx)
    for det, shape in zip(reversed(details), reversed(shapes)):
        out = _idwt2(out, det, shape)
    return out


def denoise(img: GrayImage, sigma0: float = SIGMA0) -> GrayImage:
    """Wavelet-denoised estimate of a frame; the caller's residual is img - denoise(img).

    The global mean is removed before the filter bank so a constant frame
    comes back bit-identical (its residual is exactly zero).
    """
    img = validate_image(img)
    if img.shape[0] < 64 or img.shape[1] < 64:
        raise TooSmallError(f"need at least 64x64 for {WAVELET_LEVELS} wavelet levels, got {img.shape}")
    img = img.astype(np.float64, copy=False)
    mean = img.mean()
    return img - _wavelet_noise(img - mean, sigma0)


def _zero_mean_rows_cols(x: np.ndarray) -> np.ndarray:
    x = x - x.mean(axis=1, keepdims=True)
    return x - x.mean(axis=0, keepdims=True)


def _wiener_dft(res: np.ndarray) -> np.ndarray:
    """Whiten periodic artifacts in the Fourier magnitude domain.

    The noise power is the median spectral energy (robust against artifact
    peaks); the same adaptive Wiener rule as the wavelet stage runs on the
    magnitude plane. Multiplicative spectral gains preserve the zero row/col
    means established beforehand.
    """
    h, w = res.shape
    F = sfft.fft2(res)
    mag = np.abs(F) / np.sqrt(h * w)
    noise_var = float(np.median(mag * mag))
    if noise_var == 0.0:
        return res.copy()
    mag_noise = _wiener_adaptive(mag, noise_var)
    gain = np.divide(mag_noise, mag, out=np.zeros_like(mag), where=mag > 0)
    return np.real(sfft.ifft2(F * gain))


def postprocess(residual: GrayImage) -> NoiseResidual:
    """Zero-average rows then columns, Wiener-filter the spectrum, re-zero."""
    residual = validate_image(residual).astype(np.float64, copy=False)
    out = _zero_mean_rows_cols(residual)
    out = _wiener_dft(out)
    out = _zero_mean_rows_cols(out)
    return NoiseResidual(out, source_dims=residual.shape)


def extract(img: GrayImage, sigma0: float = SIGMA0) -> NoiseResidual:
    """Noise residual of a frame: img - denoise(img), post-processed."""
    img = validate_image(img)
    return postprocess(img - denoise(img, sigma0))
