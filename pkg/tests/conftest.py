import numpy as np
import pytest

from prnualign import synth
from prnualign.imgcore import SearchRanges


@pytest.fixture(scope="session")
def planted_pair_256():
    """Clean planted-fingerprint pair at 256 px with a known full similarity.

    Returns (K, warped frame, true params); the shift is in the search
    parameterization (applied before scale/rotation).
    """
    r = np.random.default_rng(2024)
    K = synth.make_fingerprint(256, r)
    frame0 = synth.make_frame(K, r)
    p = synth.SimilarityParams(1.04, -1.5, 37, -12)
    return K, synth.apply_warp(frame0, p), p


@pytest.fixture(scope="session")
def ranges_small():
    return SearchRanges(shift_range=(-60, 60))
