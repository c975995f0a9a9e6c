"""Error types raised by the alignment pipeline."""


class PrnuAlignError(ValueError):
    """Base class for all pipeline errors."""


class TooSmallError(PrnuAlignError):
    """Image too small for the wavelet decomposition depth."""


class DimensionMismatchError(PrnuAlignError):
    """Operands have incompatible shapes."""


class TooFewImagesError(PrnuAlignError):
    """Fingerprint estimation requires at least one image."""


class SizeTooSmallError(PrnuAlignError):
    """Requested FFT size cannot hold the image."""


class DegenerateInputError(PrnuAlignError):
    """Input carries no energy (identically zero)."""


class BadCropError(PrnuAlignError):
    """Requested crop exceeds the log-polar grid."""


class EmptyListError(PrnuAlignError):
    """Operation needs a non-empty sequence."""
