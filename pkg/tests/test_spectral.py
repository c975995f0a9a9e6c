import numpy as np
import pytest

from prnualign.exceptions import (
    DegenerateInputError,
    DimensionMismatchError,
    SizeTooSmallError,
)
from prnualign.spectral import fft2_padded, pce, phase_correlate


class TestFft2Padded:
    def test_impulse_flat_magnitude(self):
        img = np.zeros((16, 16))
        img[0, 0] = 1.0
        spec = fft2_padded(img, 32)
        assert np.allclose(np.abs(spec.data), 1.0, atol=1e-12)

    def test_constant_all_energy_at_dc(self):
        spec = fft2_padded(np.ones((32, 32)), 32)
        mag = np.abs(spec.data)
        dc = mag[16, 16]
        mag[16, 16] = 0.0
        assert dc == pytest.approx(32 * 32)
        assert mag.max() < 1e-9 * dc

    def test_parseval(self):
        rng = np.random.default_rng(0)
        x = rng.standard_normal((40, 56))
        spec = fft2_padded(x, 64)
        lhs = np.sum(x**2)
        rhs = np.sum(np.abs(spec.data) ** 2) / 64**2
        assert abs(lhs - rhs) <= 1e-6 * lhs

    def test_conjugate_symmetry(self):
        rng = np.random.default_rng(1)
        spec = fft2_padded(rng.standard_normal((32, 32)), 64)
        full = np.fft.ifftshift(spec.data)
        flipped = np.conj(full[(-np.arange(64)) % 64][:, (-np.arange(64)) % 64])
        assert np.allclose(full, flipped, atol=1e-9 * np.abs(full).max())

    def test_size_errors(self):
        with pytest.raises(SizeTooSmallError):
            fft2_padded(np.ones((65, 65)), 64)
        with pytest.raises(ValueError):
            fft2_padded(np.ones((8, 8)), 24)


class TestPhaseCorrelate:
    def test_self_peak_at_zero(self):
        rng = np.random.default_rng(2)
        spec = fft2_padded(rng.standard_normal((48, 48)), 64)
        peak, value, plane = phase_correlate(spec, spec)
        assert peak == (0, 0)
        assert value == pytest.approx(1.0, abs=1e-3)

    def test_circular_shift_recovery(self):
        rng = np.random.default_rng(3)
        a = rng.standard_normal((64, 64))
        b = np.roll(a, (5, -3), axis=(0, 1))
        peak, value, _ = phase_correlate(fft2_padded(a, 64), fft2_padded(b, 64))
        assert peak == (5, -3)
        assert value > 0.9

    def test_antisymmetry(self):
        rng = np.random.default_rng(4)
        a = fft2_padded(rng.standard_normal((64, 64)), 64)
        b = fft2_padded(np.roll(rng.standard_normal((64, 64)), 7, axis=1), 64)
        pab, _, _ = phase_correlate(a, b)
        pba, _, _ = phase_correlate(b, a)
        assert pab == (-pba[0], -pba[1])

    def test_null_peak_distribution(self):
        # independent white noise: peak value stays small in >= 99% of trials
        rng = np.random.default_rng(5)
        small = 0
        for _ in range(200):
            a = fft2_padded(rng.standard_normal((256, 256)), 256)
            b = fft2_padded(rng.standard_normal((256, 256)), 256)
            _, value, _ = phase_correlate(a, b)
            small += value < 0.1
        assert small >= 198

    def test_degenerate(self):
        z = fft2_padded(np.zeros((16, 16)), 16)
        good = fft2_padded(np.ones((16, 16)), 16)
        with pytest.raises(DegenerateInputError):
            phase_correlate(z, good)


class TestPce:
    def test_self_match_large(self):
        rng = np.random.default_rng(6)
        w = rng.standard_normal((512, 512))
        r = pce(w, w)
        assert r.pce > 1e4
        assert r.peak_pos == (0, 0)

    def test_scalar_invariance(self):
        rng = np.random.default_rng(7)
        w = rng.standard_normal((128, 128))
        ref = w + 0.5 * rng.standard_normal((128, 128))
        r1 = pce(w, ref)
        r2 = pce(w * 37.5, ref)
        r3 = pce(w, ref * 0.003)
        assert r2.pce == pytest.approx(r1.pce, rel=1e-6)
        assert r3.pce == pytest.approx(r1.pce, rel=1e-6)

    def test_shift_invariance(self):
        rng = np.random.default_rng(8)
        w = rng.standard_normal((256, 256))
        base = pce(w, w).pce
        shifted = pce(w, np.roll(w, (17, -9), axis=(0, 1)))
        assert shifted.pce == pytest.approx(base, rel=0.05)
        assert shifted.peak_pos != (0, 0)

    def test_false_positive_tail(self):
        # independent inputs stay below the decision threshold (60)
        rng = np.random.default_rng(9)
        below = 0
        for _ in range(1000):
            w = rng.standard_normal((128, 128))
            ref = rng.standard_normal((128, 128))
            below += pce(w, ref).pce < 60.0
        assert below >= 999

    def test_errors(self):
        with pytest.raises(DimensionMismatchError):
            pce(np.ones((8, 8)), np.ones((8, 9)))
        with pytest.raises(DegenerateInputError):
            pce(np.zeros((8, 8)), np.ones((8, 8)))
