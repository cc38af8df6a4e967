"""Command-line surface: exit codes, determinism, manifests, file formats."""
import json
from pathlib import Path

import numpy as np
import pytest

from outpainter import metrics
from outpainter.cli import main
from outpainter.scene import CameraKey, SceneSpec
from outpainter.video import read_mask, read_ppm, read_raw, write_raw, VideoTensor


@pytest.fixture(autouse=True)
def _no_env_seed(monkeypatch):
    monkeypatch.delenv("HLOP_SEED", raising=False)


def _write_scene(path: Path, seed=17, frames=None) -> Path:
    spec = SceneSpec(seed=seed, world_extent=1024, texture_octaves=2,
                     texture_base_freq=1.0 / 16.0, sprites=(),
                     camera=(CameraKey(0, 64.0, 64.0),))
    path.write_text(spec.to_json())
    return path


def _config(tmp_path: Path, **overrides) -> Path:
    doc = {
        "pad": {"target_height": 16, "target_width": 24,
                "offset_y": 0, "offset_x": 0},
        "mode": "full",
        "seed": 0,
        "sampler": {"total_steps": 2, "swap_steps": 1},
        "gcg": {"keyframes": 3, "delta": 1, "tau": 5},
        "tiling": {"tile_t": 8, "overlap_t": 2, "tile_y": 16, "tile_x": 24,
                   "overlap_y": 4, "overlap_x": 6},
        "denoiser": {"radius": 3},
    }
    doc.update(overrides)
    path = tmp_path / "config.json"
    path.write_text(json.dumps(doc))
    return path


def _synth(tmp_path: Path, prefix="case", seed=3, frames=8) -> Path:
    scene_file = _write_scene(tmp_path / "scene.json")
    out = tmp_path / prefix
    assert main(["synth", "--scene", str(scene_file), "--frames", str(frames),
                 "--crop=-8,-12,16,16", "--full=-8,-12,16,24",
                 "--seed", str(seed), "--out-prefix", str(out)]) == 0
    return out


class TestSynth:
    def test_writes_triplet_deterministically(self, tmp_path):
        a = _synth(tmp_path, "a")
        b = _synth(tmp_path, "b")
        for suffix in (".input.hlvd", ".truth.hlvd", ".mask.hlvd"):
            assert Path(f"{a}{suffix}").read_bytes() == Path(f"{b}{suffix}").read_bytes()
        clip = read_raw(f"{a}.input.hlvd")
        truth = read_raw(f"{a}.truth.hlvd")
        mask = read_mask(f"{a}.mask.hlvd")
        assert clip.shape == (8, 16, 16, 3)
        assert truth.shape == (8, 16, 24, 3)
        assert mask.data.shape == (8, 16, 24, 1)

    def test_crop_equals_full_identical_files(self, tmp_path):
        scene_file = _write_scene(tmp_path / "scene.json")
        out = tmp_path / "same"
        assert main(["synth", "--scene", str(scene_file), "--frames", "4",
                     "--crop=-8,-8,16,16", "--full=-8,-8,16,16",
                     "--out-prefix", str(out)]) == 0
        assert Path(f"{out}.input.hlvd").read_bytes() == \
            Path(f"{out}.truth.hlvd").read_bytes()

    def test_preset_smoke(self, tmp_path):
        out = tmp_path / "preset"
        assert main(["synth", "--preset", "textured", "--seed", "1",
                     "--out-prefix", str(out)]) == 0
        assert read_raw(f"{out}.input.hlvd").frames == 32

    def test_scene_without_rects_is_usage_error(self, tmp_path):
        scene_file = _write_scene(tmp_path / "scene.json")
        assert main(["synth", "--scene", str(scene_file),
                     "--out-prefix", str(tmp_path / "x")]) == 2

    def test_missing_spec_is_usage_error(self, tmp_path):
        assert main(["synth", "--out-prefix", str(tmp_path / "x")]) == 2


class TestOutpaint:
    def test_run_writes_output_and_manifest(self, tmp_path):
        prefix = _synth(tmp_path)
        config = _config(tmp_path)
        out = tmp_path / "out.hlvd"
        assert main(["outpaint", str(config), f"{prefix}.input.hlvd", str(out)]) == 0
        assert read_raw(out).shape == (8, 16, 24, 3)
        manifest = json.loads(out.with_suffix(".hlvd.manifest.json").read_text())
        assert manifest["mode"] == "full"
        assert manifest["keyframes"]
        assert set(manifest["stage_seconds"]) == {"pad", "downsample", "guidance",
                                                  "completion", "refinement", "trim"}

    def test_manifest_rerun_is_bit_identical(self, tmp_path):
        prefix = _synth(tmp_path)
        config = _config(tmp_path)
        out1 = tmp_path / "out1.hlvd"
        main(["outpaint", str(config), f"{prefix}.input.hlvd", str(out1)])
        manifest = json.loads(out1.with_suffix(".hlvd.manifest.json").read_text())
        config2 = tmp_path / "config2.json"
        config2.write_text(json.dumps(manifest["config"]))
        out2 = tmp_path / "out2.hlvd"
        main(["outpaint", str(config2), f"{prefix}.input.hlvd", str(out2)])
        assert out1.read_bytes() == out2.read_bytes()

    def test_modes_differ(self, tmp_path):
        prefix = _synth(tmp_path)
        config = _config(tmp_path)
        outs = {}
        for mode in ("full", "baseline"):
            out = tmp_path / f"{mode}.hlvd"
            assert main(["outpaint", str(config), f"{prefix}.input.hlvd",
                         str(out), "--mode", mode]) == 0
            outs[mode] = read_raw(out).data
        assert not np.array_equal(outs["full"], outs["baseline"])

    def test_missing_config_field_exit_2(self, tmp_path):
        prefix = _synth(tmp_path)
        bad = tmp_path / "bad.json"
        bad.write_text(json.dumps({"mode": "full"}))
        assert main(["outpaint", str(bad), f"{prefix}.input.hlvd",
                     str(tmp_path / "o.hlvd")]) == 2

    def test_invalid_json_exit_2(self, tmp_path):
        prefix = _synth(tmp_path)
        bad = tmp_path / "bad.json"
        bad.write_text("{not json")
        assert main(["outpaint", str(bad), f"{prefix}.input.hlvd",
                     str(tmp_path / "o.hlvd")]) == 2

    def test_bad_input_file_exit_2(self, tmp_path):
        config = _config(tmp_path)
        bad = tmp_path / "bad.hlvd"
        bad.write_bytes(b"XXXX" + b"\x00" * 20)
        assert main(["outpaint", str(config), str(bad),
                     str(tmp_path / "o.hlvd")]) == 2

    def test_env_seed_overrides_flag(self, tmp_path, monkeypatch):
        prefix = _synth(tmp_path)
        config = _config(tmp_path)
        out_env = tmp_path / "env.hlvd"
        out_flag = tmp_path / "flag.hlvd"
        monkeypatch.setenv("HLOP_SEED", "9")
        main(["outpaint", str(config), f"{prefix}.input.hlvd", str(out_env),
              "--seed", "4"])
        monkeypatch.delenv("HLOP_SEED")
        main(["outpaint", str(config), f"{prefix}.input.hlvd", str(out_flag),
              "--seed", "9"])
        assert out_env.read_bytes() == out_flag.read_bytes()

    def test_bad_env_seed_exit_2(self, tmp_path, monkeypatch):
        prefix = _synth(tmp_path)
        config = _config(tmp_path)
        monkeypatch.setenv("HLOP_SEED", "not-a-number")
        assert main(["outpaint", str(config), f"{prefix}.input.hlvd",
                     str(tmp_path / "o.hlvd")]) == 2


class TestEval:
    def test_perfect_match_report(self, tmp_path):
        prefix = _synth(tmp_path)
        report_path = tmp_path / "report.json"
        assert main(["eval", f"{prefix}.truth.hlvd", f"{prefix}.truth.hlvd",
                     f"{prefix}.mask.hlvd", str(report_path)]) == 0
        rep = json.loads(report_path.read_text())
        assert rep["psnr"]["all"] == "+inf"
        assert rep["ssim"] == 1.0

    def test_values_match_library(self, tmp_path):
        prefix = _synth(tmp_path)
        config = _config(tmp_path)
        out = tmp_path / "out.hlvd"
        main(["outpaint", str(config), f"{prefix}.input.hlvd", str(out)])
        report_path = tmp_path / "report.json"
        assert main(["eval", str(out), f"{prefix}.truth.hlvd",
                     f"{prefix}.mask.hlvd", str(report_path)]) == 0
        rep = json.loads(report_path.read_text())
        expected = metrics.report(read_raw(out), read_raw(f"{prefix}.truth.hlvd"),
                                  read_mask(f"{prefix}.mask.hlvd"))
        assert rep == json.loads(json.dumps(expected))


class TestExportPpm:
    def test_every_frame_and_mapping(self, tmp_path):
        frame = np.zeros((2, 4, 4, 3), np.float32)
        frame[0] = 1.0
        frame[1] = -1.0
        src = tmp_path / "v.hlvd"
        write_raw(src, VideoTensor(frame))
        outdir = tmp_path / "frames"
        assert main(["export-ppm", str(src), str(outdir)]) == 0
        files = sorted(outdir.glob("*.ppm"))
        assert len(files) == 2
        assert (read_ppm(files[0]).data == 1.0).all()
        assert (read_ppm(files[1]).data == -1.0).all()

    def test_every_exceeding_frames_exports_first_only(self, tmp_path):
        prefix = _synth(tmp_path)
        outdir = tmp_path / "frames"
        assert main(["export-ppm", f"{prefix}.input.hlvd", str(outdir),
                     "--every", "100"]) == 0
        assert [p.name for p in sorted(outdir.glob("*.ppm"))] == ["frame_00000.ppm"]

    def test_round_trip_quantization(self, tmp_path):
        prefix = _synth(tmp_path)
        outdir = tmp_path / "frames"
        main(["export-ppm", f"{prefix}.input.hlvd", str(outdir), "--every", "8"])
        original = read_raw(f"{prefix}.input.hlvd")
        back = read_ppm(outdir / "frame_00000.ppm")
        assert np.abs(back.data - original.data[:1]).max() <= 1.0 / 127.5


class TestAblate:
    def test_all_modes_with_metrics(self, tmp_path):
        prefix = _synth(tmp_path)
        config = _config(tmp_path)
        outdir = tmp_path / "ablation"
        assert main(["ablate", str(config), f"{prefix}.input.hlvd", str(outdir),
                     "--truth", f"{prefix}.truth.hlvd",
                     "--mask", f"{prefix}.mask.hlvd"]) == 0
        table = json.loads((outdir / "ablation.json").read_text())["modes"]
        assert set(table) == {"full", "spatial_only", "temporal_only", "baseline"}
        for row in table.values():
            assert "psnr_outpainted" in row and "ssim" in row
        for mode in table:
            assert (outdir / f"{mode}.hlvd").exists()
