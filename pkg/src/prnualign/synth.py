"""Seeded synthetic fixtures for the benchmark and the test suite.

Fingerprints are zero-mean multiplicative patterns with a mild band-pass
spectral shape (the analog of demosaicking correlation in real sensor
noise; a strictly white pattern makes energy-peak crop centering
degenerate). Frames follow the multiplicative model I*(1+K) plus additive
read noise, on a 0-255 luminance scale.
"""
from __future__ import annotations

import numpy as np
from scipy.ndimage import gaussian_filter

from .imgcore import GrayImage, SearchRanges, SimilarityParams, compose_shift_first, warp


def make_fingerprint(
    size: int,
    rng: np.random.Generator,
    sigma_k: float = 0.02,
    band: tuple[float, float] = (0.8, 2.2),
) -> GrayImage:
    """Band-passed zero-mean fingerprint with RMS sigma_k.

    band gives the (inner, outer) Gaussian blur widths of the
    difference-of-Gaussians shaping; wider pairs push the spectral energy
    peak toward lower frequencies.
    """
    k = rng.standard_normal((size, size))
    k = gaussian_filter(k, band[0]) - gaussian_filter(k, band[1])
    k -= k.mean()
    return k * (sigma_k / k.std())


def make_texture(
    size: int,
    rng: np.random.Generator,
    level: float = 140.0,
    contrast: float = 40.0,
    smoothness: float = 8.0,
) -> GrayImage:
    """Smooth scene content (flat/indoor analog), clipped to sane luminance."""
    t = gaussian_filter(rng.standard_normal((size, size)), smoothness)
    t = level + contrast * t / t.std()
    return np.clip(t, 5.0, 250.0)


def make_field(
    size: int,
    rng: np.random.Generator,
    smoothness: float = 2.0,
    grain: float = 0.35,
) -> GrayImage:
    """Zero-mean broadband field (residual-like), for registration fixtures."""
    t = gaussian_filter(rng.standard_normal((size, size)), smoothness)
    t = t / t.std() + grain * gaussian_filter(rng.standard_normal((size, size)), 0.8)
    return t - t.mean()


def make_flat(
    size: int,
    K: GrayImage,
    rng: np.random.Generator,
    level: float = 160.0,
    read_noise: float = 2.0,
) -> GrayImage:
    """Flat-field frame carrying the fingerprint: level*(1+K) + noise."""
    shade = gaussian_filter(rng.standard_normal((size, size)), size / 4.0)
    base = level * (1.0 + 0.03 * shade / (shade.std() + 1e-12))
    return base * (1.0 + K) + read_noise * rng.standard_normal((size, size))


def make_frame(
    K: GrayImage,
    rng: np.random.Generator,
    level: float = 140.0,
    contrast: float = 40.0,
    read_noise: float = 2.0,
) -> GrayImage:
    """Scene frame carrying the fingerprint."""
    tex = make_texture(K.shape[0], rng, level, contrast)
    return tex * (1.0 + K) + read_noise * rng.standard_normal(K.shape)


def draw_params(
    ranges: SearchRanges,
    rng: np.random.Generator,
    scale_rotation_only: bool = False,
) -> SimilarityParams:
    """Random similarity parameters; the shift is integer per axis.

    The shift is drawn in the search parameterization (applied before the
    scale/rotation), matching what the optimizer estimates.
    """
    s = float(rng.uniform(*ranges.scale_range))
    a = float(rng.uniform(*ranges.angle_range))
    if scale_rotation_only:
        cx = cy = 0
    else:
        cx = int(rng.integers(ranges.shift_range[0], ranges.shift_range[1] + 1))
        cy = int(rng.integers(ranges.shift_range[0], ranges.shift_range[1] + 1))
    return SimilarityParams(s, a, cx, cy)


def apply_warp(frame: GrayImage, params: SimilarityParams) -> GrayImage:
    """Warp a frame by shift-then-scale/rotation in a single resampling pass."""
    composed = compose_shift_first(
        params.scale, params.angle, params.shift_x, params.shift_y
    )
    return warp(frame, composed)
