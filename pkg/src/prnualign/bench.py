"""Synthetic controlled-scenario benchmark.

Each trial plants a fresh fingerprint into a rendered frame, warps the frame
by a random similarity drawn from the configured ranges, extracts the
residual and runs the alignment pipeline, recording parameter recovery and
the PCE decision. Results are written as a per-trial CSV (fully
deterministic for a given config+seed: timing lives in the JSON summary,
not the CSV), an aggregate JSON, and matplotlib figures.

Modes mirror the two controlled scenarios: 'scale-rot' draws
scale/rotation-only warps and runs the known-shift fast path; 'full' draws
complete similarities and runs the shift search; 'both' draws
scale/rotation-only warps and runs the two paths side by side (the timing
comparison).
"""
from __future__ import annotations

import dataclasses
import json
import time
from dataclasses import dataclass
from multiprocessing import get_context
from pathlib import Path

import numpy as np

from . import mellin, noise, search, synth
from .imgcore import SearchRanges

#: the reference grid the reference-scale delta-rho values are quoted against
REFERENCE_N_RHO = 2896

MODES = ("scale-rot", "full", "both")


@dataclass(frozen=True)
class BenchConfig:
    trials: int = 50
    image_size: int = 512
    ranges: SearchRanges = SearchRanges()
    delta_rho: tuple = (800,)  # reference-grid units (of 2896)
    pce_threshold: float = 60.0
    mode: str = "full"
    sigma_k: float = 0.02
    read_noise: float = 2.0
    texture_contrast: float = 40.0
    fingerprint_band: tuple = (0.8, 2.2)
    rng_seed: int = 0
    threads: int = 1
    ga: search.GaConfig = search.GaConfig(
        population=24, max_iterations=20, stall_generations=6
    )
    classic_seeding: bool = True
    matching: bool = True  # False plants an independent fingerprint in the frame

    def __post_init__(self):
        if self.trials < 1:
            raise ValueError("trials must be at least 1")
        if self.pce_threshold <= 0:
            raise ValueError("pce_threshold must be positive")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if self.image_size < 64:
            raise ValueError("image_size must be at least 64")


def delta_rho_rows(delta_ref: float, n_rho: int) -> int:
    """Reference-grid delta-rho converted to this grid's equivalent fraction."""
    return max(2, round(n_rho * float(delta_ref) / REFERENCE_N_RHO))


COLUMNS_COMMON = ["trial", "delta_rho", "true_scale", "true_angle"]
COLUMNS_FAST = [
    "est_scale", "est_angle", "err_scale", "err_angle",
    "fitness", "evaluations", "pce", "matched",
]
COLUMNS_GA = [
    "true_cx", "true_cy", "est_scale", "est_angle", "est_cx", "est_cy",
    "err_scale", "err_angle", "err_cx", "err_cy",
    "fitness", "evaluations", "pce", "matched",
]


def csv_header(mode: str) -> list[str]:
    if mode == "scale-rot":
        return COLUMNS_COMMON + COLUMNS_FAST
    if mode == "full":
        return COLUMNS_COMMON + COLUMNS_GA
    return COLUMNS_COMMON + COLUMNS_FAST + ["ga_" + c for c in COLUMNS_GA[2:]]


def _fmt(x) -> str:
    if isinstance(x, bool):
        return "1" if x else "0"
    if isinstance(x, float):
        return f"{x:.9g}"
    return str(x)


def _run_trial(args):
    """One seeded trial; returns (key, csv row dict, timings dict)."""
    cfg, trial, delta_ref, entropy = args
    rng = np.random.default_rng(entropy)
    n = cfg.image_size
    K = synth.make_fingerprint(n, rng, cfg.sigma_k, cfg.fingerprint_band)
    planted = K if cfg.matching else synth.make_fingerprint(n, rng, cfg.sigma_k, cfg.fingerprint_band)
    frame0 = synth.make_frame(K=planted, rng=rng, contrast=cfg.texture_contrast,
                              read_noise=cfg.read_noise)
    scale_rot_only = cfg.mode in ("scale-rot", "both")
    p_true = synth.draw_params(cfg.ranges, rng, scale_rotation_only=scale_rot_only)
    frame = synth.apply_warp(frame0, p_true)

    t0 = time.perf_counter()
    W = noise.extract(frame)
    t_extract = time.perf_counter() - t0

    fft_size = search.default_fft_size(frame.shape)
    n_rho = mellin.default_grid(fft_size).n_rho
    rows = delta_rho_rows(delta_ref, n_rho)
    ga_cfg = dataclasses.replace(cfg.ga, rng_seed=cfg.ga.rng_seed + trial)

    row = {"trial": trial, "delta_rho": delta_ref,
           "true_scale": p_true.scale, "true_angle": p_true.angle}
    timings = {"extract": t_extract}

    def decide(res):
        t0 = time.perf_counter()
        r = search.compensate_and_test(W, K, res.params, frame)
        timings.setdefault("pce", time.perf_counter() - t0)
        return r

    if cfg.mode in ("scale-rot", "both"):
        t0 = time.perf_counter()
        res = search.align(W, K, dataclasses.replace(cfg.ranges, shift_range=(0, 0)),
                           ga_cfg, delta_rho=rows)
        timings["fast_align"] = time.perf_counter() - t0
        r = decide(res)
        row.update(
            est_scale=res.params.scale, est_angle=res.params.angle,
            err_scale=res.params.scale - p_true.scale,
            err_angle=res.params.angle - p_true.angle,
            fitness=res.fitness, evaluations=res.evaluations,
            pce=r.pce, matched=r.pce >= cfg.pce_threshold,
        )
    if cfg.mode in ("full", "both"):
        t0 = time.perf_counter()
        res = search.align(W, K, cfg.ranges, ga_cfg, delta_rho=rows,
                           classic_seeding=cfg.classic_seeding)
        timings["ga_align"] = time.perf_counter() - t0
        timings.pop("pce", None)
        r = decide(res)
        prefix = "ga_" if cfg.mode == "both" else ""
        row.update({
            "true_cx": int(p_true.shift_x), "true_cy": int(p_true.shift_y),
            prefix + "est_scale": res.params.scale,
            prefix + "est_angle": res.params.angle,
            prefix + "est_cx": int(res.params.shift_x),
            prefix + "est_cy": int(res.params.shift_y),
            prefix + "err_scale": res.params.scale - p_true.scale,
            prefix + "err_angle": res.params.angle - p_true.angle,
            prefix + "err_cx": int(res.params.shift_x - p_true.shift_x),
            prefix + "err_cy": int(res.params.shift_y - p_true.shift_y),
            prefix + "fitness": res.fitness,
            prefix + "evaluations": res.evaluations,
            prefix + "pce": r.pce,
            prefix + "matched": r.pce >= cfg.pce_threshold,
        })
    return (delta_ref, trial), row, timings


@dataclass
class BenchResult:
    config: BenchConfig
    rows: list
    timings: list
    summary: dict


def run_bench(cfg: BenchConfig, progress=None) -> BenchResult:
    """Run all trials (possibly across processes); results are ordered and
    byte-deterministic regardless of the worker count."""
    ss = np.random.SeedSequence(cfg.rng_seed)
    children = ss.spawn(cfg.trials)
    tasks = [
        (cfg, trial, delta, children[trial])
        for delta in cfg.delta_rho
        for trial in range(cfg.trials)
    ]
    t_start = time.perf_counter()
    if cfg.threads > 1:
        # fork inherits warmed JIT state; results are reduced by task key
        with get_context("fork").Pool(cfg.threads) as pool:
            results = pool.map(_run_trial, tasks, chunksize=1)
    else:
        results = []
        for t in tasks:
            results.append(_run_trial(t))
            if progress:
                progress(len(results), len(tasks))
    results.sort(key=lambda kr: (kr[0][0], kr[0][1]))
    rows = [r for _, r, _ in results]
    timings = [dict(t, delta_rho=k[0]) for k, _, t in results]
    wall = time.perf_counter() - t_start
    return BenchResult(cfg, rows, timings, _summarize(cfg, rows, timings, wall))


def _summarize(cfg: BenchConfig, rows, timings, wall: float) -> dict:
    per_delta = {}
    for delta in cfg.delta_rho:
        sel = [r for r in rows if r["delta_rho"] == delta]
        tsel = [t for t in timings if t["delta_rho"] == delta]
        entry: dict = {"trials": len(sel)}
        for prefix in ("", "ga_"):
            key = prefix + "matched"
            if sel and key in sel[0]:
                entry[prefix + "match_rate"] = float(np.mean([r[key] for r in sel]))
                entry[prefix + "median_abs_err_scale"] = float(
                    np.median([abs(r[prefix + "err_scale"]) for r in sel])
                )
                entry[prefix + "median_abs_err_angle"] = float(
                    np.median([abs(r[prefix + "err_angle"]) for r in sel])
                )
            ck = prefix + "err_cx"
            if sel and ck in sel[0]:
                hits = [
                    max(abs(r[prefix + "err_cx"]), abs(r[prefix + "err_cy"])) <= 1
                    for r in sel
                ]
                entry[prefix + "shift_hit_rate"] = float(np.mean(hits))
        for name in ("extract", "fast_align", "ga_align", "pce"):
            vals = [t[name] for t in tsel if name in t]
            if vals:
                entry["median_" + name + "_s"] = float(np.median(vals))
        per_delta[str(delta)] = entry
    return {
        "mode": cfg.mode,
        "seed": cfg.rng_seed,
        "trials": cfg.trials,
        "image_size": cfg.image_size,
        "pce_threshold": cfg.pce_threshold,
        "matching": cfg.matching,
        "threads": cfg.threads,
        "delta_rho": list(cfg.delta_rho),
        "per_delta_rho": per_delta,
        "wall_time_s": wall,
    }


def write_csv(path: str | Path, result: BenchResult) -> None:
    header = csv_header(result.config.mode)
    lines = [",".join(header)]
    for row in result.rows:
        lines.append(",".join(_fmt(row.get(c, "")) for c in header))
    Path(path).write_text("\n".join(lines) + "\n")


def write_json(path: str | Path, result: BenchResult) -> None:
    Path(path).write_text(json.dumps(result.summary, indent=1, sort_keys=True))


def write_figures(out_dir: str | Path, result: BenchResult) -> list[Path]:
    """Render the report figures next to the delimited output."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    out_dir = Path(out_dir)
    cfg = result.config
    made = []
    summary = result.summary["per_delta_rho"]
    deltas = [float(d) for d in cfg.delta_rho]

    time_key = "median_ga_align_s" if cfg.mode != "scale-rot" else "median_fast_align_s"
    times = [summary[str(int(d))].get(time_key) for d in deltas]
    if all(t is not None for t in times):
        fig, ax = plt.subplots(figsize=(5, 3.2))
        ax.plot(deltas, times, "o-", color="tab:orange", label="measured")
        if len(deltas) >= 2:
            coef = np.polyfit(deltas, times, 1)
            xs = np.linspace(min(deltas), max(deltas), 50)
            ax.plot(xs, np.polyval(coef, xs), "--", color="gray", label="linear fit")
        ax.set_xlabel(r"$\Delta_\rho$ (reference-grid samples)")
        ax.set_ylabel("median align time [s]")
        ax.legend(frameon=False)
        fig.tight_layout()
        p = out_dir / "bench_timing.png"
        fig.savefig(p, dpi=120)
        plt.close(fig)
        made.append(p)

    pce_key = "ga_pce" if cfg.mode == "both" else "pce"
    if result.rows and pce_key not in result.rows[0]:
        pce_key = "pce"
    fig, ax = plt.subplots(figsize=(5, 3.2))
    for d in deltas:
        vals = [r[pce_key] for r in result.rows if r["delta_rho"] == d and pce_key in r]
        if vals:
            ax.scatter([d] * len(vals), vals, s=12, alpha=0.6)
    ax.axhline(cfg.pce_threshold, color="tab:red", ls=":", label=f"threshold {cfg.pce_threshold:g}")
    ax.set_yscale("log")
    ax.set_xlabel(r"$\Delta_\rho$ (reference-grid samples)")
    ax.set_ylabel("PCE")
    ax.legend(frameon=False)
    fig.tight_layout()
    p = out_dir / "bench_pce.png"
    fig.savefig(p, dpi=120)
    plt.close(fig)
    made.append(p)

    err_key = "ga_err_cx" if cfg.mode == "both" else "err_cx"
    fig, ax = plt.subplots(figsize=(4.2, 4.0))
    if result.rows and err_key in result.rows[0]:
        xs = [r[err_key] for r in result.rows]
        ys = [r[err_key.replace("cx", "cy")] for r in result.rows]
        ax.scatter(xs, ys, s=14, alpha=0.6, color="tab:blue")
        ax.set_xlabel("shift error x [px]")
        ax.set_ylabel("shift error y [px]")
    else:
        xs = [r["err_scale"] for r in result.rows]
        ys = [r["err_angle"] for r in result.rows]
        ax.scatter(xs, ys, s=14, alpha=0.6, color="tab:blue")
        ax.set_xlabel("scale error")
        ax.set_ylabel("angle error [deg]")
    ax.axhline(0, color="gray", lw=0.5)
    ax.axvline(0, color="gray", lw=0.5)
    fig.tight_layout()
    p = out_dir / "bench_errors.png"
    fig.savefig(p, dpi=120)
    plt.close(fig)
    made.append(p)
    return made
