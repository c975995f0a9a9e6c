"""Device reference fingerprint estimation from flat-field images."""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .exceptions import DimensionMismatchError, TooFewImagesError
from .imgcore import GrayImage, load_raster, save_raster, validate_image
from .noise import extract, postprocess

#: pixels whose flat-field energy falls below this get a zero fingerprint sample
DENOM_GUARD = 1e-6


@dataclass(frozen=True)
class Fingerprint:
    """Multiplicative PRNU estimate with its provenance."""

    raster: GrayImage
    n_images: int
    device_id: str = ""

    @property
    def shape(self) -> tuple[int, int]:
        return self.raster.shape


def estimate(flats: list, device_id: str = "", sigma0: float | None = None) -> Fingerprint:
    """Maximum-likelihood fingerprint from flat-field frames.

    K = sum_i W_i * I_i / sum_i I_i^2 with W_i the extracted residuals
    (the ML estimator of the multiplicative model), then the standard
    residual post-processing. Pixels with near-zero denominator are zeroed.
    """
    if not flats:
        raise TooFewImagesError("fingerprint estimation needs at least one image")
    shape = np.asarray(flats[0]).shape
    num = np.zeros(shape, np.float64)
    den = np.zeros(shape, np.float64)
    for img in flats:
        img = validate_image(img)
        if img.shape != shape:
            raise DimensionMismatchError(
                f"flat-field sizes differ: {img.shape} vs {shape}"
            )
        w = extract(img).raster if sigma0 is None else extract(img, sigma0).raster
        img64 = img.astype(np.float64, copy=False)
        num += w * img64
        den += img64 * img64
    k = np.divide(num, den, out=np.zeros(shape, np.float64), where=den >= DENOM_GUARD)
    k = postprocess(k).raster
    return Fingerprint(k, n_images=len(flats), device_id=device_id)


def scale_by_frame(fp: Fingerprint, frame: GrayImage) -> GrayImage:
    """Pixel-wise product K * I, the PCE reference for a given test frame."""
    frame = validate_image(frame)
    if fp.raster.shape != frame.shape:
        raise DimensionMismatchError(
            f"fingerprint {fp.raster.shape} vs frame {frame.shape}"
        )
    return fp.raster * frame


def save(path: str | Path, fp: Fingerprint) -> None:
    save_raster(path, fp.raster, kind="fingerprint",
                device_id=fp.device_id, n_images=fp.n_images)


def load(path: str | Path) -> Fingerprint:
    img, meta = load_raster(path)
    if meta.get("kind") != "fingerprint":
        raise ValueError(f"{path}: sidecar kind is {meta.get('kind')!r}, not 'fingerprint'")
    return Fingerprint(img.astype(np.float64), int(meta.get("n_images", 1)),
                       str(meta.get("device_id", "")))
