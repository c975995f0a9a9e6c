"""Command-line orchestration: fingerprint building, residual extraction,
alignment, matching and the synthetic benchmark.

Frames are ingested as decoded still images (PNG/PGM; color converts to
BT.601 luminance). Video demuxing and I-frame selection belong to external
tooling, e.g.:

    ffmpeg -i query.mp4 -vf "select='eq(pict_type,I)'" -vsync vfr frame_%04d.png

Exit codes for `match`: 0 = matched, 1 = unmatched, 2 = error.
"""
from __future__ import annotations

import argparse
import configparser
import dataclasses
import json
import sys
import time
from dataclasses import dataclass, asdict
from multiprocessing import get_context
from pathlib import Path

from . import __version__, bench, fingerprint, mellin, noise, search
from .exceptions import DimensionMismatchError, PrnuAlignError
from .imgcore import (
    SearchRanges,
    SimilarityParams,
    load_image,
    save_raster,
    warp,
)

DEFAULTS = {
    "delta_rho": 800,  # reference-grid units; the accuracy/speed sweet spot
    "threshold": 60.0,
    "sigma0": 5.0,  # wavelet Wiener noise floor, 0-255 intensity scale
    "seed": 0,
    "threads": 1,
    "scale_min": 0.9,
    "scale_max": 1.1,
    "angle_min": -3.0,
    "angle_max": 3.0,
    "shift_min": -90,
    "shift_max": 90,
    "population": 50,
    "max_iterations": 50,
    "mutation_rate": 0.1,
    "crossover_rate": 0.8,
    "elite_count": 2,
    "stall_generations": 50,
}


@dataclass(frozen=True)
class AttributionReport:
    """One frame's attribution outcome; serializes losslessly to JSON lines."""

    frame_id: str
    device_id: str
    scale: float
    angle: float
    shift_x: float
    shift_y: float
    pce: float
    decision: bool
    threshold: float
    delta_rho: int
    time_transform: float
    time_search: float
    time_total: float
    seed: int

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)

    @classmethod
    def from_json(cls, line: str) -> "AttributionReport":
        return cls(**json.loads(line))


def load_config(path: str | Path) -> dict:
    """Key-value config file (INI, section [prnualign]); keys mirror DEFAULTS."""
    parser = configparser.ConfigParser()
    read = parser.read(path)
    if not read:
        raise FileNotFoundError(path)
    section = parser["prnualign"] if parser.has_section("prnualign") else parser["DEFAULT"]
    out = {}
    for key, default in DEFAULTS.items():
        if key in section:
            out[key] = type(default)(section[key])
    return out


def _settings(args) -> dict:
    cfg = dict(DEFAULTS)
    if getattr(args, "config", None):
        cfg.update(load_config(args.config))
    for key in DEFAULTS:
        flag = getattr(args, key, None)
        if flag is not None:
            cfg[key] = flag
    return cfg


def _ranges(cfg: dict) -> SearchRanges:
    return SearchRanges(
        (cfg["scale_min"], cfg["scale_max"]),
        (cfg["angle_min"], cfg["angle_max"]),
        (cfg["shift_min"], cfg["shift_max"]),
    )


def _ga(cfg: dict) -> search.GaConfig:
    return search.GaConfig(
        population=cfg["population"],
        max_iterations=cfg["max_iterations"],
        mutation_rate=cfg["mutation_rate"],
        crossover_rate=cfg["crossover_rate"],
        elite_count=cfg["elite_count"],
        rng_seed=cfg["seed"],
        stall_generations=cfg["stall_generations"],
    )


def _delta_rows(delta_ref: int, frame_shape) -> int:
    n_rho = mellin.default_grid(search.default_fft_size(frame_shape)).n_rho
    return bench.delta_rho_rows(delta_ref, n_rho)


def _register_fingerprint(fp: fingerprint.Fingerprint, frame_shape):
    """Center-crop the reference to the frame size (it may not be smaller)."""
    kh, kw = fp.raster.shape
    fh, fw = frame_shape
    if kh < fh or kw < fw:
        raise DimensionMismatchError(
            f"fingerprint {kh}x{kw} smaller than frame {fh}x{fw}"
        )
    y0, x0 = (kh - fh) // 2, (kw - fw) // 2
    if (y0, x0) == (0, 0) and (kh, kw) == (fh, fw):
        return fp
    return dataclasses.replace(fp, raster=fp.raster[y0 : y0 + fh, x0 : x0 + fw])


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_fingerprint(args) -> int:
    flats = []
    shape = None
    for path in args.images:
        try:
            img = load_image(path)
        except Exception as e:
            print(f"error: cannot read {path}: {e}", file=sys.stderr)
            return 2
        if shape is None:
            shape = img.shape
        elif img.shape != shape:
            print(
                f"error: {path} is {img.shape[1]}x{img.shape[0]}, "
                f"expected {shape[1]}x{shape[0]}",
                file=sys.stderr,
            )
            return 2
        flats.append(img)
    fp = fingerprint.estimate(flats, device_id=args.device_id,
                               sigma0=_settings(args)["sigma0"])
    raster = fp.raster
    if args.pre_warp:
        s, a, cx, cy = (float(v) for v in args.pre_warp.split(","))
        raster = warp(raster, SimilarityParams(s, a, cx, cy))
    if args.crop:
        x, y, w, h = (int(v) for v in args.crop.split(","))
        raster = raster[y : y + h, x : x + w]
    fp = dataclasses.replace(fp, raster=raster)
    fingerprint.save(args.output, fp)
    print(f"fingerprint {fp.device_id or '(unnamed)'}: {raster.shape[1]}x{raster.shape[0]} "
          f"from {fp.n_images} image(s) -> {args.output}")
    return 0


def cmd_extract_noise(args) -> int:
    img = load_image(args.image)
    res = noise.extract(img, sigma0=_settings(args)["sigma0"])
    save_raster(args.output, res.raster, kind="residual",
                source_dims=list(res.source_dims))
    print(f"residual {img.shape[1]}x{img.shape[0]} -> {args.output}")
    return 0


def _match_one(task):
    """Extract, align, compensate, decide for a single frame."""
    (path, fp_path, cfg, seed) = task
    t_start = time.perf_counter()
    frame = load_image(path)
    fp = _register_fingerprint(fingerprint.load(fp_path), frame.shape)
    t0 = time.perf_counter()
    W = noise.extract(frame, sigma0=cfg["sigma0"])
    t_transform = time.perf_counter() - t0
    t0 = time.perf_counter()
    res = search.align(
        W, fp, _ranges(cfg), _ga(cfg),
        delta_rho=_delta_rows(cfg["delta_rho"], frame.shape),
    )
    t_search = time.perf_counter() - t0
    r = search.compensate_and_test(W, fp, res.params, frame)
    return AttributionReport(
        frame_id=str(path),
        device_id=fp.device_id,
        scale=res.params.scale,
        angle=res.params.angle,
        shift_x=res.params.shift_x,
        shift_y=res.params.shift_y,
        pce=r.pce,
        decision=bool(r.pce >= cfg["threshold"]),
        threshold=cfg["threshold"],
        delta_rho=cfg["delta_rho"],
        time_transform=t_transform,
        time_search=t_search,
        time_total=time.perf_counter() - t_start,
        seed=seed,
    )


def cmd_match(args) -> int:
    cfg = _settings(args)
    out = open(args.json, "w") if args.json else sys.stdout
    tasks = [(p, args.fingerprint, cfg, cfg["seed"]) for p in args.frames]
    reports: list = []
    failures = 0
    try:
        if cfg["threads"] > 1 and len(tasks) > 1:
            with get_context("fork").Pool(cfg["threads"]) as pool:
                outcomes = pool.map(_match_one_safe, tasks, chunksize=1)
        else:
            outcomes = [_match_one_safe(t) for t in tasks]
        for path, outcome in zip(args.frames, outcomes):
            if isinstance(outcome, AttributionReport):
                reports.append(outcome)
                print(outcome.to_json(), file=out)
            else:
                failures += 1
                print(json.dumps({"frame_id": str(path), "error": outcome}), file=out)
        if not reports:
            return 2
        fused_pce, idx = search.fuse_frames(
            [r.pce for r in reports]
        )
        decision = fused_pce >= cfg["threshold"]
        print(
            json.dumps(
                {
                    "fused": True,
                    "pce": fused_pce,
                    "frame_index": idx,
                    "frame_id": reports[idx].frame_id,
                    "decision": bool(decision),
                    "threshold": cfg["threshold"],
                    "frames": len(reports),
                    "failed_frames": failures,
                },
                sort_keys=True,
            ),
            file=out,
        )
        return 0 if decision else 1
    finally:
        if out is not sys.stdout:
            out.close()


def _match_one_safe(task):
    try:
        return _match_one(task)
    except (PrnuAlignError, OSError, ValueError) as e:
        return f"{type(e).__name__}: {e}"


def cmd_align(args) -> int:
    cfg = _settings(args)
    frame = load_image(args.frame)
    fp = _register_fingerprint(fingerprint.load(args.fingerprint), frame.shape)
    W = noise.extract(frame, sigma0=cfg["sigma0"])
    res = search.align(
        W, fp, _ranges(cfg), _ga(cfg),
        delta_rho=_delta_rows(cfg["delta_rho"], frame.shape),
    )
    r = search.compensate_and_test(W, fp, res.params, frame)
    payload = {
        "frame_id": str(args.frame),
        "scale": res.params.scale,
        "angle": res.params.angle,
        "shift_x": res.params.shift_x,
        "shift_y": res.params.shift_y,
        "fitness": res.fitness,
        "evaluations": res.evaluations,
        "elapsed": res.elapsed,
        "low_confidence": res.low_confidence,
        "pce": r.pce,
        "decision": bool(r.pce >= cfg["threshold"]),
    }
    text = json.dumps(payload, sort_keys=True)
    if args.json:
        Path(args.json).write_text(text + "\n")
    print(text)
    return 0


def cmd_bench(args) -> int:
    cfg = _settings(args)
    deltas = tuple(int(v) for v in str(args.delta_rho_list or cfg["delta_rho"]).split(","))
    ga = dataclasses.replace(
        _ga(cfg),
        population=args.population or 24,
        max_iterations=args.max_iterations or 20,
        stall_generations=args.stall or 6,
    )
    bc = bench.BenchConfig(
        trials=args.trials,
        image_size=args.size,
        ranges=_ranges(cfg),
        delta_rho=deltas,
        pce_threshold=cfg["threshold"],
        mode=args.mode,
        rng_seed=cfg["seed"],
        threads=cfg["threads"],
        ga=ga,
        matching=not args.non_matching,
    )
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    result = bench.run_bench(bc)
    csv_path = Path(args.csv) if args.csv else out_dir / "bench.csv"
    json_path = Path(args.json) if args.json else out_dir / "bench.json"
    bench.write_csv(csv_path, result)
    bench.write_json(json_path, result)
    made = [csv_path, json_path]
    if not args.no_figures:
        made += bench.write_figures(out_dir, result)
    for d, entry in result.summary["per_delta_rho"].items():
        rates = {k: round(v, 4) for k, v in entry.items() if k.endswith("rate")}
        print(f"delta_rho {d}: {entry['trials']} trials {rates}")
    print("wrote: " + " ".join(str(p) for p in made))
    return 0


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    shared = argparse.ArgumentParser(add_help=False)
    shared.add_argument("--config", help="key-value config file ([prnualign] section)")
    shared.add_argument("--seed", type=int, help="RNG seed (logged into reports)")
    shared.add_argument("--threads", type=int, help="worker processes")
    shared.add_argument("--delta-rho", dest="delta_rho", type=int,
                        help="rho crop in reference-grid samples (of 2896)")
    shared.add_argument("--threshold", type=float, help="PCE decision threshold")
    shared.add_argument("--sigma0", type=float,
                        help="wavelet Wiener noise floor (0-255 scale, default 5)")
    shared.add_argument("--scale-min", dest="scale_min", type=float,
                        help="search bound: minimum scale (default 0.9)")
    shared.add_argument("--scale-max", dest="scale_max", type=float,
                        help="search bound: maximum scale (default 1.1)")
    shared.add_argument("--angle-min", dest="angle_min", type=float,
                        help="search bound: minimum rotation, degrees (default -3)")
    shared.add_argument("--angle-max", dest="angle_max", type=float,
                        help="search bound: maximum rotation, degrees (default 3)")
    shared.add_argument("--shift-min", dest="shift_min", type=int,
                        help="search bound: minimum shift per axis, px (default -90)")
    shared.add_argument("--shift-max", dest="shift_max", type=int,
                        help="search bound: maximum shift per axis, px (default 90)")
    for key in ("population", "max_iterations", "elite_count", "stall_generations"):
        shared.add_argument(f"--{key.replace('_', '-')}", dest=key, type=int,
                            help=argparse.SUPPRESS)
    for key in ("mutation_rate", "crossover_rate"):
        shared.add_argument(f"--{key.replace('_', '-')}", dest=key, type=float,
                            help=argparse.SUPPRESS)

    p = argparse.ArgumentParser(
        prog="prnualign",
        description="Camera attribution for video frames by PRNU re-alignment "
        "(phase-bearing Fourier-Mellin + global shift search).",
    )
    p.add_argument("--version", action="version", version=f"prnualign {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    f = sub.add_parser("fingerprint", parents=[shared],
                       help="estimate a device fingerprint from flat-field images")
    f.add_argument("images", nargs="+", help="flat-field PNG/PGM files, equal sizes")
    f.add_argument("-o", "--output", required=True, help="output .f32 path")
    f.add_argument("--device-id", default="", help="device label for the sidecar")
    f.add_argument("--pre-warp", help="post-estimation warp 's,angle,cx,cy'")
    f.add_argument("--crop", help="post-warp crop 'x,y,w,h'")
    f.set_defaults(func=cmd_fingerprint)

    e = sub.add_parser("extract-noise", parents=[shared],
                       help="extract the noise residual from one frame")
    e.add_argument("image")
    e.add_argument("-o", "--output", required=True, help="output .f32 path")
    e.set_defaults(func=cmd_extract_noise)

    a = sub.add_parser("align", parents=[shared],
                       help="estimate the similarity transform for one frame")
    a.add_argument("frame")
    a.add_argument("fingerprint", help="fingerprint .f32 path")
    a.add_argument("--json", help="also write the report to this path")
    a.set_defaults(func=cmd_align)

    m = sub.add_parser("match", parents=[shared],
                       help="attribute frames to a device (JSON-lines report)")
    m.add_argument("frames", nargs="+", help="query frame images")
    m.add_argument("fingerprint", help="fingerprint .f32 path")
    m.add_argument("--json", help="write JSON-lines here instead of stdout")
    m.set_defaults(func=cmd_match)

    b = sub.add_parser("bench", parents=[shared],
                       help="synthetic controlled-scenario benchmark")
    b.add_argument("--trials", type=int, default=50)
    b.add_argument("--size", type=int, default=512, help="frame size in pixels")
    b.add_argument("--mode", choices=bench.MODES, default="full")
    b.add_argument("--delta-rho-list", dest="delta_rho_list",
                   help="comma list of reference-grid delta-rho values")
    b.add_argument("--non-matching", action="store_true",
                   help="plant an independent fingerprint (false-positive runs)")
    b.add_argument("--out-dir", default="bench_out")
    b.add_argument("--csv", help="per-trial CSV path (default <out-dir>/bench.csv)")
    b.add_argument("--json", help="summary JSON path (default <out-dir>/bench.json)")
    b.add_argument("--no-figures", action="store_true")
    b.add_argument("--stall", type=int, help="bench GA stall generations")
    b.set_defaults(func=cmd_bench)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (PrnuAlignError, FileNotFoundError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
