import json

import numpy as np
import pytest
from PIL import Image

from prnualign import synth
from prnualign.cli import AttributionReport, load_config, main
from prnualign.imgcore import SimilarityParams, load_raster


def save_u8(path, img):
    Image.fromarray(np.clip(img, 0, 255).astype(np.uint8), mode="L").save(path)


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    """Flat-field PNGs, a matching warped query, and a non-matching frame."""
    d = tmp_path_factory.mktemp("cli")
    rng = np.random.default_rng(7)
    K = synth.make_fingerprint(256, rng)
    for i in range(30):
        save_u8(d / f"flat{i:02d}.png", synth.make_flat(256, K, rng))
    p = SimilarityParams(0.97, 1.2, -14, 23)
    save_u8(d / "query.png", synth.apply_warp(synth.make_frame(K, rng), p))
    other = synth.make_fingerprint(256, np.random.default_rng(99))
    save_u8(d / "other.png", synth.apply_warp(synth.make_frame(other, rng), p))
    # PGM flavor of one flat
    Image.open(d / "flat00.png").save(d / "flat00.pgm")
    return d


GA_FLAGS = [
    "--shift-min", "-40", "--shift-max", "40",
    "--population", "16", "--max-iterations", "12", "--stall-generations", "5",
]


@pytest.fixture(scope="module")
def fingerprint_file(workdir):
    out = workdir / "dev.f32"
    flats = [str(p) for p in sorted(workdir.glob("flat*.png"))]
    rc = main(["fingerprint", *flats, "-o", str(out), "--device-id", "camA"])
    assert rc == 0
    return out


class TestFingerprintCmd:
    def test_single_pgm(self, workdir):
        out = workdir / "single.f32"
        rc = main(["fingerprint", str(workdir / "flat00.pgm"), "-o", str(out)])
        assert rc == 0
        img, meta = load_raster(out)
        assert meta["kind"] == "fingerprint" and meta["n_images"] == 1
        assert img.shape == (256, 256)

    def test_mixed_dimensions_rejected(self, workdir, capsys, tmp_path):
        bad = tmp_path / "small.png"
        save_u8(bad, np.zeros((64, 64)))
        rc = main(["fingerprint", str(workdir / "flat00.png"), str(bad),
                   "-o", str(tmp_path / "x.f32")])
        assert rc == 2
        assert "small.png" in capsys.readouterr().err

    def test_pre_warp_and_crop(self, workdir, tmp_path):
        out = tmp_path / "warped.f32"
        rc = main(["fingerprint", str(workdir / "flat00.png"), "-o", str(out),
                   "--pre-warp", "1.0,0.0,4,2", "--crop", "8,8,128,120"])
        assert rc == 0
        img, _ = load_raster(out)
        assert img.shape == (120, 128)


class TestExtractNoiseCmd:
    def test_roundtrip(self, workdir, tmp_path):
        out = tmp_path / "w.f32"
        rc = main(["extract-noise", str(workdir / "query.png"), "-o", str(out)])
        assert rc == 0
        img, meta = load_raster(out)
        assert meta["kind"] == "residual"
        assert np.abs(img.mean(axis=1)).max() < 1e-4


class TestMatchCmd:
    def test_matching_frame_exit0(self, workdir, fingerprint_file, tmp_path):
        out = tmp_path / "report.jsonl"
        rc = main(["match", str(workdir / "query.png"), str(fingerprint_file),
                   "--json", str(out)] + GA_FLAGS)
        assert rc == 0
        lines = out.read_text().strip().splitlines()
        assert len(lines) == 2
        rep = AttributionReport.from_json(lines[0])
        assert rep.decision and rep.pce >= 60.0
        assert rep.device_id == "camA"
        assert (rep.shift_x, rep.shift_y) == (-14, 23)
        fused = json.loads(lines[1])
        assert fused["fused"] and fused["decision"]

    def test_report_roundtrip(self, workdir, fingerprint_file, tmp_path):
        out = tmp_path / "report.jsonl"
        main(["match", str(workdir / "query.png"), str(fingerprint_file),
              "--json", str(out)] + GA_FLAGS)
        line = out.read_text().splitlines()[0]
        rep = AttributionReport.from_json(line)
        assert rep.to_json() == json.dumps(json.loads(line), sort_keys=True)

    def test_non_matching_exit1(self, workdir, fingerprint_file, tmp_path):
        rc = main(["match", str(workdir / "other.png"), str(fingerprint_file),
                   "--json", str(tmp_path / "r.jsonl")] + GA_FLAGS)
        assert rc == 1

    def test_failed_frame_skipped(self, workdir, fingerprint_file, tmp_path):
        out = tmp_path / "r.jsonl"
        rc = main(["match", str(tmp_path / "missing.png"), str(workdir / "query.png"),
                   str(fingerprint_file), "--json", str(out)] + GA_FLAGS)
        assert rc == 0  # surviving frame still matches
        lines = out.read_text().strip().splitlines()
        assert "error" in json.loads(lines[0])
        assert json.loads(lines[-1])["failed_frames"] == 1

    def test_all_failed_exit2(self, fingerprint_file, tmp_path):
        rc = main(["match", str(tmp_path / "nope.png"), str(fingerprint_file),
                   "--json", str(tmp_path / "r.jsonl")])
        assert rc == 2

    def test_delta_rho_timing_ordering(self, workdir, fingerprint_file, tmp_path):
        # a wider rho crop correlates more samples and must cost more time
        def search_time(delta):
            times = []
            for i in range(2):
                out = tmp_path / f"d{delta}_{i}.jsonl"
                main(["match", str(workdir / "query.png"), str(fingerprint_file),
                      "--json", str(out), "--delta-rho", str(delta)] + GA_FLAGS)
                times.append(AttributionReport.from_json(
                    out.read_text().splitlines()[0]).time_search)
            return min(times)

        assert search_time(800) > search_time(200)


class TestAlignCmd:
    def test_reports_transform(self, workdir, fingerprint_file, capsys):
        rc = main(["align", str(workdir / "query.png"), str(fingerprint_file)] + GA_FLAGS)
        assert rc == 0
        payload = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
        assert (payload["shift_x"], payload["shift_y"]) == (-14, 23)
        assert payload["evaluations"] > 0 and payload["decision"]


class TestConfig:
    def test_load_and_precedence(self, tmp_path, workdir, fingerprint_file, capsys):
        cfg = tmp_path / "prnualign.ini"
        cfg.write_text(
            "[prnualign]\nthreshold = 45\ndelta_rho = 400\n"
            "population = 16\nmax_iterations = 12\nstall_generations = 5\n"
            "shift_min = -40\nshift_max = 40\n"
        )
        loaded = load_config(cfg)
        assert loaded["threshold"] == 45.0 and loaded["delta_rho"] == 400
        rc = main(["align", str(workdir / "query.png"), str(fingerprint_file),
                   "--config", str(cfg), "--threshold", "70"])
        assert rc == 0  # flag overrides config; config overrides defaults

    def test_missing_config_errors(self, tmp_path):
        assert main(["bench", "--config", str(tmp_path / "nope.ini"),
                     "--trials", "1", "--out-dir", str(tmp_path)]) == 2


class TestBenchCmd:
    def test_scale_rot_mode_columns(self, tmp_path):
        rc = main(["bench", "--trials", "2", "--size", "128", "--mode", "scale-rot",
                   "--delta-rho-list", "400", "--out-dir", str(tmp_path),
                   "--no-figures", "--seed", "3"])
        assert rc == 0
        header = (tmp_path / "bench.csv").read_text().splitlines()[0].split(",")
        assert "err_scale" in header and "err_cx" not in header

    def test_full_mode_outputs_and_figures(self, tmp_path):
        rc = main(["bench", "--trials", "2", "--size", "128", "--mode", "full",
                   "--delta-rho-list", "400", "--out-dir", str(tmp_path),
                   "--seed", "3", "--shift-min", "-20", "--shift-max", "20"])
        assert rc == 0
        header = (tmp_path / "bench.csv").read_text().splitlines()[0].split(",")
        assert "err_cx" in header and "evaluations" in header
        summary = json.loads((tmp_path / "bench.json").read_text())
        assert summary["per_delta_rho"]["400"]["trials"] == 2
        for name in ("bench_timing.png", "bench_pce.png", "bench_errors.png"):
            assert (tmp_path / name).stat().st_size > 0

    def test_trials_validation(self, tmp_path):
        assert main(["bench", "--trials", "0", "--out-dir", str(tmp_path)]) == 2
