"""Command-line surface: synthesize scenes, outpaint, evaluate, export, ablate.

Exit codes: 0 success, 1 runtime/stage error, 2 configuration or usage error.
The environment variable HLOP_SEED overrides any configured seed.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
import tempfile
from pathlib import Path

from . import metrics, pipeline, scene, video

FORMAT_VERSION = 1


def _atomic_write_json(path: Path, payload: dict) -> None:
    fd, tmp = tempfile.mkstemp(dir=str(path.parent), suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True)
            fh.write("\n")
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _parse_rect(text: str) -> tuple[int, int, int, int]:
    parts = [int(v) for v in text.split(",")]
    if len(parts) != 4:
        raise pipeline.ConfigError(f"rectangle must be 'y,x,h,w', got {text!r}")
    return tuple(parts)


def _resolve_seed(config_seed: int, flag_seed: int | None) -> int:
    env = os.environ.get("HLOP_SEED")
    if env is not None:
        try:
            return int(env)
        except ValueError as exc:
            raise pipeline.ConfigError(f"HLOP_SEED={env!r} is not an integer") from exc
    if flag_seed is not None:
        return flag_seed
    return config_seed


def cmd_synth(args) -> int:
    seed = _resolve_seed(0, args.seed)
    if args.preset:
        case = scene.preset_case(args.preset, seed)
    else:
        if not args.scene:
            raise pipeline.ConfigError("synth needs --preset or --scene")
        try:
            spec = scene.SceneSpec.from_json(Path(args.scene).read_text())
        except (OSError, ValueError, KeyError) as exc:
            raise pipeline.ConfigError(f"bad scene file {args.scene}: {exc}") from exc
        if args.crop is None or args.full is None:
            raise pipeline.ConfigError("--scene requires --crop and --full")
        geometry = scene.CaseGeometry(full=_parse_rect(args.full),
                                      crop=_parse_rect(args.crop))
        case = scene.make_case(spec, args.frames, geometry)
    prefix = Path(args.out_prefix)
    prefix.parent.mkdir(parents=True, exist_ok=True)
    video.write_raw(f"{prefix}.input.hlvd", case.input)
    video.write_raw(f"{prefix}.truth.hlvd", case.ground_truth)
    video.write_raw(f"{prefix}.mask.hlvd", scene.case_mask(case))
    print(f"synth: wrote {prefix}.input.hlvd / .truth.hlvd / .mask.hlvd "
          f"({case.input.frames} frames)")
    return 0


def _load_config(path: str, mode: str | None, seed: int | None,
                 workers: int | None) -> pipeline.PipelineConfig:
    try:
        raw = json.loads(Path(path).read_text())
    except OSError as exc:
        raise pipeline.ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise pipeline.ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    if mode is not None:
        raw["mode"] = mode
    raw["seed"] = _resolve_seed(int(raw.get("seed", 0)), seed)
    if workers is not None:
        raw["workers"] = workers
    return pipeline.PipelineConfig.from_dict(raw)


def _run_one(config: pipeline.PipelineConfig, in_path: str, out_path: str) -> pipeline.RunResult:
    clip = video.read_raw(in_path)
    result = pipeline.run(config, clip)
    out = Path(out_path)
    out.parent.mkdir(parents=True, exist_ok=True)
    video.write_raw(out, result.output)
    manifest = {
        "format_version": FORMAT_VERSION,
        "config": config.to_dict(),
        "seed": config.seed,
        "mode": result.mode,
        "keyframes": list(result.keyframes) if result.keyframes else None,
        "stage_seconds": {k: round(v, 6) for k, v in result.timings.items()},
        "input": str(in_path),
        "output": str(out),
    }
    _atomic_write_json(out.with_suffix(out.suffix + ".manifest.json"), manifest)
    return result


def cmd_outpaint(args) -> int:
    config = _load_config(args.config, args.mode, args.seed, args.workers)
    result = _run_one(config, args.input, args.output)
    total = sum(result.timings.values())
    print(f"outpaint[{result.mode}]: {args.input} -> {args.output} "
          f"({result.output.frames} frames, {total:.2f}s)")
    return 0


def cmd_eval(args) -> int:
    out = video.read_raw(args.output)
    truth = video.read_raw(args.truth)
    mask = video.read_mask(args.mask)
    rep = metrics.report(out, truth, mask)
    _atomic_write_json(Path(args.report), rep)
    print(f"eval: psnr(all)={rep['psnr']['all']} ssim={rep['ssim']} -> {args.report}")
    return 0


def cmd_export_ppm(args) -> int:
    clip = video.read_raw(args.input)
    outdir = Path(args.dir)
    outdir.mkdir(parents=True, exist_ok=True)
    every = max(1, args.every)
    count = 0
    for f in range(0, clip.frames, every):
        video.write_ppm(outdir / f"frame_{f:05d}.ppm", clip, f)
        count += 1
    print(f"export-ppm: wrote {count} frames to {outdir}")
    return 0


def cmd_ablate(args) -> int:
    outdir = Path(args.dir)
    outdir.mkdir(parents=True, exist_ok=True)
    truth = video.read_raw(args.truth) if args.truth else None
    mask = video.read_mask(args.mask) if args.mask else None
    table = {}
    for mode in pipeline.MODES:
        config = _load_config(args.config, mode, args.seed, args.workers)
        result = _run_one(config, args.input, str(outdir / f"{mode}.hlvd"))
        row = {"seconds": round(sum(result.timings.values()), 3)}
        if truth is not None and mask is not None:
            rep = metrics.report(result.output, truth, mask)
            row["psnr_outpainted"] = rep["psnr"]["outpainted"]
            row["ssim"] = rep["ssim"]
        table[mode] = row
    _atomic_write_json(outdir / "ablation.json", {"format_version": FORMAT_VERSION,
                                                  "modes": table})
    for mode, row in table.items():
        print(f"ablate[{mode}]: " + " ".join(f"{k}={v}" for k, v in row.items()))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="outpainter",
                                     description="Coarse-to-fine video outpainting toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="render a synthetic scene to HLVD files")
    p.add_argument("--preset", choices=sorted(scene.PRESETS))
    p.add_argument("--scene", help="scene spec JSON file")
    p.add_argument("--frames", type=int, default=48)
    p.add_argument("--crop", help="crop rect 'y,x,h,w' relative to camera")
    p.add_argument("--full", help="full rect 'y,x,h,w' relative to camera")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out-prefix", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("outpaint", help="run the outpainting pipeline")
    p.add_argument("config", help="pipeline config JSON")
    p.add_argument("input", help="input HLVD video")
    p.add_argument("output", help="output HLVD video")
    p.add_argument("--mode", choices=pipeline.MODES)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--workers", type=int, default=None)
    p.set_defaults(func=cmd_outpaint)

    p = sub.add_parser("eval", help="compute metrics against ground truth")
    p.add_argument("output", help="generated HLVD video")
    p.add_argument("truth", help="ground-truth HLVD video")
    p.add_argument("mask", help="outpainting mask HLVD")
    p.add_argument("report", help="metrics report JSON path")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("export-ppm", help="export frames as P6 PPM previews")
    p.add_argument("input", help="HLVD video")
    p.add_argument("dir", help="output directory")
    p.add_argument("--every", type=int, default=1)
    p.set_defaults(func=cmd_export_ppm)

    p = sub.add_parser("ablate", help="run all ablation modes and compare")
    p.add_argument("config", help="pipeline config JSON")
    p.add_argument("input", help="input HLVD video")
    p.add_argument("dir", help="output directory")
    p.add_argument("--truth")
    p.add_argument("--mask")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--workers", type=int, default=None)
    p.set_defaults(func=cmd_ablate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (pipeline.ConfigError, video.FormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except pipeline.StageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (ValueError, OSError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
