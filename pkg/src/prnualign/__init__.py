"""Camera attribution for video frames via PRNU re-alignment with a
phase-bearing, spectrally cropped Fourier-Mellin transform."""

__version__ = "0.1.0"

from .imgcore import GrayImage, SearchRanges, SimilarityParams, invert, to_matrix, warp
from .noise import NoiseResidual, denoise, extract, postprocess
from .fingerprint import Fingerprint, estimate, scale_by_frame
from .spectral import PceResult, Spectrum, fft2_padded, pce, phase_correlate
from .mellin import (
    LogPolarGrid,
    LogPolarSpectrum,
    classic_fm,
    crop_center_from_fingerprint,
    default_grid,
    estimate_scale_rotation,
    log_polar_map,
    mfm,
)
from .search import (
    AlignmentResult,
    GaConfig,
    MfmContext,
    align,
    compensate_and_test,
    fitness,
    fuse_frames,
    ga_search,
)
