"""Global shift search with closed-form scale/rotation per candidate.

The optimizer walks integer shift candidates c; for each, the fingerprint is
shifted (zero-fill) by c, both sides are mapped through the rho-cropped
phase-bearing log-polar transform, and the phase-correlation peak value is
the fitness. Scale/rotation come for free from the peak location. The shift
therefore parameterizes the transform as scalerot(s, a) AFTER the shift
(equivalent affine [sR | sRc]); compensation composes in that order.

Per frame, the residual's transform is cached; only the fingerprint side is
recomputed per candidate, against precomputed bilinear sampling tables, so a
fitness evaluation costs a few FFTs of the cropped array.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, replace

import numpy as np
import scipy.fft as sfft

from . import mellin
from .exceptions import DegenerateInputError, DimensionMismatchError, EmptyListError
from .imgcore import (
    GrayImage,
    SearchRanges,
    SimilarityParams,
    compose_shift_first,
    shift_zerofill,
    validate_image,
    warp,
)
from .spectral import PceResult, fft2_padded, pce, phase_correlate

#: rho-crop fraction of the default pipeline (the 800-of-2896 operating point)
DEFAULT_DELTA_FRACTION = 800.0 / 2896.0
#: alpha samples of the coarse fitness-stage grid (final estimates use the
#: full default grid)
FITNESS_N_ALPHA = 256
#: alpha samples used for the fingerprint energy scan that centers the crop
CENTERING_N_ALPHA = 180


@dataclass(frozen=True)
class GaConfig:
    """Integer-coded genetic algorithm parameters.

    Defaults follow the reference configuration (population 50, at most 50
    iterations); selection is tournament of 3, crossover uniform, mutation
    per-gene uniform within bounds, with elitism. stall_generations stops
    the loop early when the incumbent stops improving; seed_candidates are
    injected into the initial population (the classic-path pre-alignment
    lands here).
    """

    population: int = 50
    max_iterations: int = 50
    mutation_rate: float = 0.1
    crossover_rate: float = 0.8
    elite_count: int = 2
    rng_seed: int = 0
    stall_generations: int = 50
    confidence_floor: float = 0.0
    seed_candidates: tuple = ()

    def __post_init__(self):
        if self.population < 4 or self.population % 2:
            raise ValueError("population must be even and at least 4")
        if not 0 <= self.elite_count < self.population:
            raise ValueError("elite_count must be below population")
        for name in ("mutation_rate", "crossover_rate"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must be in [0, 1]")


@dataclass(frozen=True)
class AlignmentResult:
    """Estimated similarity parameters with the search diagnostics.

    params holds the integer searched shift; the transform it names is
    scalerot(scale, angle) applied after that shift (see compensation).
    pce is attached after geometric compensation.
    """

    params: SimilarityParams
    fitness: float
    evaluations: int
    elapsed: float
    low_confidence: bool = False
    pce: PceResult | None = None


def default_fft_size(shape: tuple[int, int]) -> int:
    """Power of two at least twice the longest image side (zero-padding
    avoids border wrap effects; 1920x1080 frames land on 4096)."""
    return 1 << int(math.ceil(math.log2(2 * max(shape))))


def _raster(x) -> np.ndarray:
    return np.asarray(getattr(x, "raster", x), dtype=np.float64)


class MfmContext:
    """Precomputed state for fitness evaluations of one (residual, fingerprint) pair."""

    def __init__(
        self,
        W,
        K,
        ranges: SearchRanges = SearchRanges(),
        fft_size: int | None = None,
        delta_rho: int | None = None,
        fitness_n_alpha: int = FITNESS_N_ALPHA,
        crop_center: int | None = None,
    ):
        self.W = validate_image(_raster(W))
        self.K = validate_image(_raster(K))
        if self.W.shape != self.K.shape:
            raise DimensionMismatchError(
                f"residual {self.W.shape} and fingerprint {self.K.shape} must be pre-registered"
            )
        self.ranges = ranges
        self.fft_size = fft_size or default_fft_size(self.W.shape)
        self.full_grid = mellin.default_grid(self.fft_size)
        self.fit_grid = self.full_grid.with_alpha(fitness_n_alpha)
        n_rho = self.full_grid.n_rho
        self.delta_rho = delta_rho or max(2, round(n_rho * DEFAULT_DELTA_FRACTION))

        if crop_center is None:
            scan_grid = self.full_grid.with_alpha(CENTERING_N_ALPHA)
            lp = mellin.LogPolarSpectrum(
                mellin._table(self.fft_size, scan_grid, 0, n_rho).sample(self._half_plane(self.K)),
                scan_grid,
            )
            crop_center = mellin.crop_center_from_fingerprint(lp)
        self.crop_center = crop_center
        self.lo, self.hi = mellin.crop_window(n_rho, self.delta_rho, crop_center)
        self._nfft_fit = sfft.next_fast_len(self.hi - self.lo + 1)
        # fit-grid assets build lazily: the known-shift fast path never needs them
        self._w_half = None
        self._lw_fit = None
        self._fw_fit = None
        self._lw_full = None

    @property
    def w_half(self) -> np.ndarray:
        if self._w_half is None:
            self._w_half = self._half_plane(self.W)
        return self._w_half

    @property
    def LW_fit(self) -> np.ndarray:
        if self._lw_fit is None:
            self._lw_fit = self._sample(self.w_half, self.fit_grid)
        return self._lw_fit

    @property
    def FW_fit(self) -> np.ndarray:
        if self._fw_fit is None:
            self._fw_fit = sfft.fft2(
                self.LW_fit, s=(self._nfft_fit, self.fit_grid.n_alpha)
            )
        return self._fw_fit

    @property
    def LW_full(self) -> np.ndarray:
        if self._lw_full is None:
            self._lw_full = self._sample(self.w_half, self.full_grid)
        return self._lw_full

    # -- spectral plumbing -------------------------------------------------
    def _half_plane(self, img: np.ndarray) -> np.ndarray:
        """Upper half-plane of the center-referenced padded spectrum."""
        n = self.fft_size
        h, w = img.shape
        buf = np.zeros((n, n), np.float32)
        cy, cx = h // 2, w // 2
        buf[: h - cy, : w - cx] = img[cy:, cx:]
        buf[: h - cy, n - cx :] = img[cy:, :cx]
        buf[n - cy :, : w - cx] = img[:cy, cx:]
        buf[n - cy :, n - cx :] = img[:cy, :cx]
        return mellin.upper_half_from_rfft2(sfft.rfft2(buf), n)

    def _sample(self, half: np.ndarray, grid: mellin.LogPolarGrid) -> np.ndarray:
        return mellin._table(self.fft_size, grid, self.lo, self.hi).sample(half)

    def fingerprint_map(self, shift: tuple[int, int], grid: mellin.LogPolarGrid) -> np.ndarray:
        ks = shift_zerofill(self.K, int(shift[0]), int(shift[1]))
        return self._sample(self._half_plane(ks), grid)

    # -- estimates ---------------------------------------------------------
    def evaluate(self, shift: tuple[int, int]):
        """Fitness of one shift candidate: (peak value, scale, angle)."""
        LK = self.fingerprint_map(shift, self.fit_grid)
        FK = sfft.fft2(LK, s=(self._nfft_fit, self.fit_grid.n_alpha))
        cross = self.FW_fit * np.conj(FK)
        mag = np.abs(cross)
        peak = mag.max()
        if peak == 0.0:
            raise DegenerateInputError("zero cross-spectrum in fitness")
        cross /= mag + np.float32(1e-12) * peak
        plane = np.real(sfft.ifft2(cross))
        scale, angle, value = mellin.peak_scale_rotation(
            plane, self.fit_grid, self.ranges.scale_range, self.ranges.angle_range
        )
        return value, scale, angle

    def estimate_full(self, shift: tuple[int, int]):
        """Full-alpha-resolution closed-form estimate at one shift."""
        W_lp = mellin.LogPolarSpectrum(self.LW_full, self.full_grid, self.lo)
        K_lp = mellin.LogPolarSpectrum(
            self.fingerprint_map(shift, self.full_grid), self.full_grid, self.lo
        )
        return mellin.estimate_scale_rotation(
            W_lp, K_lp, self.ranges.scale_range, self.ranges.angle_range
        )

    def classic_seed(self) -> tuple[int, int] | None:
        """Shift candidate from the magnitude-only (shift-invariant) path.

        Estimates (s0, a0) from the classic maps, pre-warps the fingerprint,
        and reads the residual shift off a pixel-domain phase correlation.
        Returns None when the correlation is degenerate.
        """
        try:
            tab = mellin._table(self.fft_size, self.fit_grid, self.lo, self.hi)
            MK = mellin.standardize_rows(tab.sample(np.abs(self._half_plane(self.K))).real)
            MW = mellin.standardize_rows(tab.sample(np.abs(self.w_half)).real)
            plane = mellin.correlation_plane(MW, MK)
            s0, a0, _ = mellin.peak_scale_rotation(
                plane, self.fit_grid, self.ranges.scale_range, self.ranges.angle_range
            )
            k_rot = warp(self.K, SimilarityParams(s0, a0))
            (dy, dx), _, _ = phase_correlate(
                fft2_padded(self.W, self.fft_size), fft2_padded(k_rot, self.fft_size)
            )
            # W = K_rot rolled by s0*R0*c, and the peak reports -that roll
            a = math.radians(a0)
            ca, sa = math.cos(a), math.sin(a)
            cx = -(ca * dx + sa * dy) / s0
            cy = -(-sa * dx + ca * dy) / s0
            lo, hi = self.ranges.shift_range
            return (
                int(np.clip(round(cx), lo, hi)),
                int(np.clip(round(cy), lo, hi)),
            )
        except DegenerateInputError:
            return None


def fitness(ctx: MfmContext, shift: tuple[int, int]):
    """Phase-correlation peak for one integer shift candidate.

    Translates the fingerprint content by the candidate (zero fill), maps
    both sides through the cropped transform (the residual's map is cached
    in ctx) and returns (value, scale, angle) from the windowed correlation
    peak.
    """
    return ctx.evaluate(shift)


@dataclass
class _GaState:
    best_shift: tuple[int, int]
    best_value: float
    best_scale: float
    best_angle: float
    evaluations: int = 0


def ga_search(ctx: MfmContext, cfg: GaConfig = GaConfig()) -> AlignmentResult:
    """Integer-coded GA over shift candidates; deterministic given rng_seed."""
    t0 = time.perf_counter()
    lo, hi = ctx.ranges.shift_range
    rng = np.random.default_rng(cfg.rng_seed)
    cache: dict = {}
    state = _GaState((0, 0), -np.inf, 1.0, 0.0)

    def evaluate(ind) -> float:
        key = (int(ind[0]), int(ind[1]))
        hit = cache.get(key)
        if hit is None:
            state.evaluations += 1
            hit = cache[key] = ctx.evaluate(key)
        value, scale, angle = hit
        if value > state.best_value:
            state.best_shift, state.best_value = key, value
            state.best_scale, state.best_angle = scale, angle
        return value

    if lo == hi:
        # degenerate range: a single candidate
        evaluate(np.array([lo, lo]))
        return AlignmentResult(
            SimilarityParams(state.best_scale, state.best_angle, lo, lo),
            state.best_value,
            state.evaluations,
            time.perf_counter() - t0,
            low_confidence=state.best_value < cfg.confidence_floor,
        )

    pop = rng.integers(lo, hi + 1, size=(cfg.population, 2))
    seeds = [s for s in cfg.seed_candidates if s is not None]
    for i, (sx, sy) in enumerate(seeds[: cfg.population]):
        pop[i] = (int(np.clip(sx, lo, hi)), int(np.clip(sy, lo, hi)))

    scores = np.array([evaluate(ind) for ind in pop])
    stall = 0
    for _ in range(cfg.max_iterations):
        if stall >= cfg.stall_generations:
            break
        prev_best = state.best_value
        elite_idx = np.argsort(scores)[::-1][: cfg.elite_count]
        elite = pop[elite_idx].copy()

        n_children = cfg.population - cfg.elite_count
        children = np.empty((n_children, 2), dtype=pop.dtype)
        for i in range(0, n_children, 2):
            p1 = pop[_tournament(scores, rng)]
            p2 = pop[_tournament(scores, rng)]
            c1, c2 = p1.copy(), p2.copy()
            if rng.random() < cfg.crossover_rate:
                swap = rng.random(2) < 0.5
                c1[swap], c2[swap] = p2[swap], p1[swap]
            children[i] = c1
            if i + 1 < n_children:
                children[i + 1] = c2
        mutate = rng.random(children.shape) < cfg.mutation_rate
        children[mutate] = rng.integers(lo, hi + 1, size=int(mutate.sum()))

        pop = np.concatenate([elite, children])
        scores = np.array([evaluate(ind) for ind in pop])
        stall = stall + 1 if state.best_value <= prev_best else 0

    return AlignmentResult(
        SimilarityParams(
            state.best_scale, state.best_angle, state.best_shift[0], state.best_shift[1]
        ),
        state.best_value,
        state.evaluations,
        time.perf_counter() - t0,
        low_confidence=state.best_value < cfg.confidence_floor,
    )


def _tournament(scores: np.ndarray, rng, k: int = 3) -> int:
    idx = rng.integers(0, len(scores), size=k)
    return int(idx[np.argmax(scores[idx])])


def _clamp(x: float, lo: float, hi: float) -> float:
    return float(min(max(x, lo), hi))


def align(
    W,
    K,
    ranges: SearchRanges = SearchRanges(),
    cfg: GaConfig = GaConfig(),
    *,
    fft_size: int | None = None,
    delta_rho: int | None = None,
    fitness_n_alpha: int = FITNESS_N_ALPHA,
    crop_center: int | None = None,
    classic_seeding: bool = True,
) -> AlignmentResult:
    """Estimate the similarity transform between a residual and a fingerprint.

    With a degenerate shift range the optimizer is skipped entirely (the
    known-shift fast path: one closed-form estimate at full resolution).
    Otherwise the GA searches the shift plane; scale and rotation are then
    re-estimated at the winning shift on the full-resolution grid. Scale and
    angle are clamped into the configured ranges.
    """
    t0 = time.perf_counter()
    ctx = MfmContext(
        W, K, ranges,
        fft_size=fft_size, delta_rho=delta_rho,
        fitness_n_alpha=fitness_n_alpha, crop_center=crop_center,
    )
    if ranges.shift_degenerate:
        v = ranges.shift_range[0]
        scale, angle, value = ctx.estimate_full((v, v))
        result = AlignmentResult(
            SimilarityParams(
                _clamp(scale, *ranges.scale_range),
                _clamp(angle, *ranges.angle_range),
                v, v,
            ),
            value, 0, time.perf_counter() - t0,
            low_confidence=value < cfg.confidence_floor,
        )
        return result

    if classic_seeding and not cfg.seed_candidates:
        seed = ctx.classic_seed()
        seeds = [seed, (0, 0)] if seed is not None else [(0, 0)]
        cfg = replace(cfg, seed_candidates=tuple(seeds))
    result = ga_search(ctx, cfg)
    scale, angle, _ = ctx.estimate_full(result.params.shift)
    params = SimilarityParams(
        _clamp(scale, *ranges.scale_range),
        _clamp(angle, *ranges.angle_range),
        result.params.shift_x,
        result.params.shift_y,
    )
    return replace(result, params=params, elapsed=time.perf_counter() - t0)


def compensate_and_test(W, K, params: SimilarityParams, frame: GrayImage | None = None) -> PceResult:
    """Warp the fingerprint by the estimated transform and run the PCE test.

    params follow the search convention (shift applied before scale/rotation);
    the fingerprint is warped by the composed affine and, when the query frame
    is supplied, scaled pixel-wise by it (the K*I reference convention).
    """
    w = _raster(W)
    k = _raster(K)
    composed = compose_shift_first(params.scale, params.angle, params.shift_x, params.shift_y)
    ref = warp(k, composed, out_size=w.shape)
    if frame is not None:
        frame = validate_image(frame)
        if frame.shape != w.shape:
            raise DimensionMismatchError(
                f"frame {frame.shape} does not match residual {w.shape}"
            )
        ref = ref * frame
    return pce(W, ref)


def fuse_frames(results: list) -> tuple[float, int]:
    """Max-PCE fusion over per-frame results: (decision PCE, frame index)."""
    if not results:
        raise EmptyListError("no per-frame results to fuse")
    values = [r.pce if isinstance(r, PceResult) else float(r) for r in results]
    idx = int(np.argmax(values))
    return float(values[idx]), idx
