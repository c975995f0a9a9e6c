"""Image containers, similarity-transform algebra, resampling and raster I/O.

A grayscale image is a plain 2-D float ndarray (row-major, any real range;
residuals are signed). Transforms are similarities (isotropic scale s,
rotation angle alpha in degrees, translation in pixels) applied about the
integer image center pixel (h//2, w//2); positive shift_x moves content
rightward, positive shift_y moves it downward. The same center convention
is shared by the spectral modules so that a centered scale/rotation stays
a pure spectral remap.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.ndimage import map_coordinates

from .exceptions import DimensionMismatchError

GrayImage = np.ndarray  # 2-D float array


def validate_image(img: np.ndarray) -> np.ndarray:
    """Check the GrayImage contract: 2-D, at least 1x1, all samples finite."""
    img = np.asarray(img)
    if img.ndim != 2 or img.shape[0] < 1 or img.shape[1] < 1:
        raise DimensionMismatchError(f"expected 2-D image, got shape {img.shape}")
    if not np.all(np.isfinite(img)):
        raise ValueError("image contains non-finite samples")
    return img


def _norm_angle(angle: float) -> float:
    """Normalize an angle in degrees to (-180, 180]."""
    a = math.fmod(angle, 360.0)
    if a > 180.0:
        a -= 360.0
    elif a <= -180.0:
        a += 360.0
    return a


@dataclass(frozen=True)
class SimilarityParams:
    """Similarity transform: scale s, rotation angle (degrees), shift (px).

    Maps x -> s*R(angle)*x + c about the image center. Shifts are integers
    when produced by the shift search, real otherwise.
    """

    scale: float = 1.0
    angle: float = 0.0
    shift_x: float = 0.0
    shift_y: float = 0.0

    def __post_init__(self):
        if not self.scale > 0:
            raise ValueError(f"scale must be positive, got {self.scale}")
        object.__setattr__(self, "angle", _norm_angle(float(self.angle)))

    @property
    def shift(self) -> tuple[float, float]:
        return (self.shift_x, self.shift_y)


@dataclass(frozen=True)
class SearchRanges:
    """Closed parameter intervals for the alignment search.

    Defaults are the realistic stabilization ranges: scale [0.9, 1.1],
    angle [-3, 3] degrees, shift [-90, 90] pixels per axis.
    """

    scale_range: tuple[float, float] = (0.9, 1.1)
    angle_range: tuple[float, float] = (-3.0, 3.0)
    shift_range: tuple[int, int] = (-90, 90)

    def __post_init__(self):
        for name in ("scale_range", "angle_range", "shift_range"):
            lo, hi = getattr(self, name)
            if lo > hi:
                raise ValueError(f"{name} is empty: {lo} > {hi}")

    @property
    def shift_degenerate(self) -> bool:
        return self.shift_range[0] == self.shift_range[1]


def to_matrix(p: SimilarityParams) -> np.ndarray:
    """2x3 affine matrix [[s*cos, -s*sin, cx], [s*sin, s*cos, cy]]."""
    a = math.radians(p.angle)
    c, s = math.cos(a), math.sin(a)
    return np.array(
        [
            [p.scale * c, -p.scale * s, p.shift_x],
            [p.scale * s, p.scale * c, p.shift_y],
        ]
    )


def invert(p: SimilarityParams) -> SimilarityParams:
    """Parameters of the inverse transform: to_matrix(invert(p)) undoes to_matrix(p)."""
    a = math.radians(p.angle)
    c, s = math.cos(a), math.sin(a)
    # inverse translation: -R(-a)/s @ c
    ix = -(c * p.shift_x + s * p.shift_y) / p.scale
    iy = -(-s * p.shift_x + c * p.shift_y) / p.scale
    return SimilarityParams(1.0 / p.scale, -p.angle, ix, iy)


def compose_shift_first(scale: float, angle: float, cx: float, cy: float) -> SimilarityParams:
    """Matrix-convention params of scalerot(s, angle) applied AFTER a shift by c.

    The alignment search estimates its shift in the pre-scale/rotation frame
    (the fingerprint is shifted before the spectral comparison); the composed
    affine is [sR | sR c].
    """
    a = math.radians(angle)
    ca, sa = math.cos(a), math.sin(a)
    return SimilarityParams(
        scale,
        angle,
        scale * (ca * cx - sa * cy),
        scale * (sa * cx + ca * cy),
    )


def warp(
    img: GrayImage,
    p: SimilarityParams,
    out_size: tuple[int, int] | None = None,
) -> GrayImage:
    """Apply a similarity transform with inverse-mapped bilinear resampling.

    out_size is (height, width); defaults to the input size. Output pixel
    (x, y) samples the input at the inverse-mapped coordinate about the
    center pixel; samples falling outside the input are zero.
    """
    img = validate_image(img)
    h, w = img.shape
    if out_size is None:
        oh, ow = h, w
    else:
        oh, ow = out_size
        if oh < 1 or ow < 1:
            raise ValueError(f"bad out_size {out_size}")
    a = math.radians(p.angle)
    ca, sa = math.cos(a), math.sin(a)
    yy, xx = np.mgrid[0:oh, 0:ow].astype(np.float64)
    xc = xx - (ow // 2) - p.shift_x
    yc = yy - (oh // 2) - p.shift_y
    xs = (ca * xc + sa * yc) / p.scale + (w // 2)
    ys = (-sa * xc + ca * yc) / p.scale + (h // 2)
    out = map_coordinates(
        img.astype(np.float64, copy=False), [ys, xs], order=1, mode="constant", cval=0.0
    )
    return out.astype(img.dtype, copy=False) if img.dtype == np.float32 else out


def shift_zerofill(img: GrayImage, cx: int, cy: int) -> GrayImage:
    """Integer translation img(x - c) with zero fill: content moves by +c.

    Pixels pushed past the canvas edge are lost (the physical fingerprint
    has no wraparound), matching the stabilization model.
    """
    img = np.asarray(img)
    h, w = img.shape
    out = np.zeros_like(img)
    hh, ww = h - abs(int(cy)), w - abs(int(cx))
    if hh > 0 and ww > 0:
        dy0, dx0 = max(0, int(cy)), max(0, int(cx))
        sy0, sx0 = max(0, -int(cy)), max(0, -int(cx))
        out[dy0 : dy0 + hh, dx0 : dx0 + ww] = img[sy0 : sy0 + hh, sx0 : sx0 + ww]
    return out


# ---------------------------------------------------------------------------
# raster persistence: raw little-endian float32 + JSON sidecar
# ---------------------------------------------------------------------------

def sidecar_path(path: str | Path) -> Path:
    return Path(path).with_suffix(".json")


def save_raster(path: str | Path, img: GrayImage, kind: str, **meta) -> None:
    """Write a real-valued raster as raw little-endian f32 plus a JSON sidecar."""
    img = validate_image(img)
    path = Path(path)
    img.astype("<f4").tofile(path)
    side = {"width": int(img.shape[1]), "height": int(img.shape[0]), "kind": kind}
    side.update(meta)
    sidecar_path(path).write_text(json.dumps(side, indent=1))


def load_raster(path: str | Path) -> tuple[GrayImage, dict]:
    """Read a raw-f32 raster; returns (float32 image, sidecar dict)."""
    path = Path(path)
    meta = json.loads(sidecar_path(path).read_text())
    w, h = int(meta["width"]), int(meta["height"])
    data = np.fromfile(path, dtype="<f4")
    if data.size != w * h:
        raise DimensionMismatchError(
            f"{path}: raw size {data.size} does not match sidecar {w}x{h}"
        )
    return data.reshape(h, w), meta


def load_image(path: str | Path) -> GrayImage:
    """Read an 8/16-bit grayscale (or color) PNG/PGM as float32 on a 0-255 scale.

    Color inputs are converted to luminance with ITU-R BT.601 weights.
    """
    from PIL import Image

    with Image.open(path) as im:
        if im.mode in ("RGB", "RGBA", "P"):
            im = im.convert("RGB")
            arr = np.asarray(im, dtype=np.float32)
            arr = arr[..., 0] * 0.299 + arr[..., 1] * 0.587 + arr[..., 2] * 0.114
        else:
            arr = np.asarray(im, dtype=np.float32)
            if im.mode in ("I", "I;16") and arr.max() > 255.0:
                arr = arr / 257.0  # 16-bit to the 0-255 scale
    if arr.ndim != 2:
        raise DimensionMismatchError(f"{path}: expected single-channel image")
    return np.ascontiguousarray(arr, dtype=np.float32)


def save_image_png(path: str | Path, img: GrayImage) -> None:
    """Write a raster as an 8-bit PNG, min-max scaled (debug/inspection aid)."""
    from PIL import Image

    img = validate_image(img).astype(np.float64)
    lo, hi = float(img.min()), float(img.max())
    scale = 255.0 / (hi - lo) if hi > lo else 0.0
    Image.fromarray(((img - lo) * scale).astype(np.uint8), mode="L").save(path)
