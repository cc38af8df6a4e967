"""End-to-end outpainting orchestration.

Stages: length/spatial padding, downsampling to a working resolution,
multi-scale keyframe guidance, guidance insertion, temporally tiled
completion, and noise-injected spatial refinement back at target resolution.
Ablation modes selectively disable the guidance and refinement stages.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field, asdict

import numpy as np

from . import gcg as gcg_mod
from . import rng
from .denoiser import DenoiserConfig, ToyDenoiser
from .sampler import SampleSchedule, sdedit_start
from .tiling import ConfigError, SpatiallyTiledDenoiser, TilePlan, plan, tiled_denoise_pass
from .video import (MaskVideo, PadSpec, VideoTensor, downsample_mask, pad_length,
                    pad_video, resize_bicubic, trim_length)

MODES = ("full", "spatial_only", "temporal_only", "baseline")


class StageError(RuntimeError):
    """Wraps a failure with the pipeline stage where it occurred."""

    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"stage '{stage}' failed: {cause}")
        self.stage = stage
        self.cause = cause


@dataclass(frozen=True)
class SamplerParams:
    total_steps: int = 40
    swap_steps: int = 8
    refine_strength: float = 0.5

    def __post_init__(self):
        if self.total_steps < 1:
            raise ConfigError("sampler.total_steps must be >= 1")
        if not 0 <= self.swap_steps <= self.total_steps:
            raise ConfigError("sampler.swap_steps must be in [0, total_steps]")
        if not 0.0 < self.refine_strength <= 1.0:
            raise ConfigError("sampler.refine_strength must be in (0, 1]")


@dataclass(frozen=True)
class GcgParams:
    keyframes: int = 13
    delta: int = 5
    delta_auto: bool = False
    tau: int = 20

    def __post_init__(self):
        if self.keyframes < 1 or self.delta < 1 or self.tau < 1:
            raise ConfigError("gcg parameters must be positive")


@dataclass(frozen=True)
class TilingParams:
    tile_t: int = 49
    overlap_t: int = 12
    tile_y: int = 96
    tile_x: int = 96
    overlap_y: int = 24
    overlap_x: int = 24

    def __post_init__(self):
        if not 0 <= self.overlap_t < self.tile_t:
            raise ConfigError("tiling.overlap_t must be in [0, tile_t)")
        if not 0 <= self.overlap_y < self.tile_y:
            raise ConfigError("tiling.overlap_y must be in [0, tile_y)")
        if not 0 <= self.overlap_x < self.tile_x:
            raise ConfigError("tiling.overlap_x must be in [0, tile_x)")


def _denoiser_from_dict(d: dict) -> DenoiserConfig:
    kind = d.get("kind", "toy")
    if kind != "toy":
        raise ConfigError(f"unknown denoiser kind {kind!r}")
    try:
        return DenoiserConfig(
            lambda_sparse=float(d.get("lambda_sparse", 8.0)),
            lambda_dense=float(d.get("lambda_dense", 2.0)),
            neighbor_radius=int(d.get("radius", 6)),
            fill_floor=float(d.get("fill_floor", 0.0)),
            latent_carryover=float(d.get("latent_carryover", 0.5)))
    except ValueError as exc:
        raise ConfigError(f"denoiser config: {exc}") from exc


@dataclass(frozen=True)
class PipelineConfig:
    pad: PadSpec
    mode: str = "full"
    seed: int = 0
    working_height: int | None = None
    working_width: int | None = None
    sampler: SamplerParams = field(default_factory=SamplerParams)
    gcg: GcgParams = field(default_factory=GcgParams)
    tiling: TilingParams = field(default_factory=TilingParams)
    denoiser: DenoiserConfig = field(default_factory=DenoiserConfig)
    workers: int = 1
    codec_factor: int = 1

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        if self.codec_factor < 1:
            raise ConfigError("codec_factor must be >= 1")
        wh, ww = self.working_resolution()
        if wh > self.pad.target_height or ww > self.pad.target_width:
            raise ConfigError("working resolution exceeds target resolution")
        if self.codec_factor > 1 and (wh % self.codec_factor or ww % self.codec_factor):
            raise ConfigError("working resolution must be divisible by codec_factor")

    def working_resolution(self) -> tuple[int, int]:
        """Configured working size, else longest target side mapped to 768."""
        th, tw = self.pad.target_height, self.pad.target_width
        if self.working_height is not None and self.working_width is not None:
            return self.working_height, self.working_width
        longest = max(th, tw)
        if longest <= 768:
            return th, tw
        scale = 768.0 / longest
        return max(1, round(th * scale)), max(1, round(tw * scale))

    @classmethod
    def from_dict(cls, d: dict) -> "PipelineConfig":
        try:
            pad_d = d["pad"]
            pad = PadSpec(int(pad_d["target_height"]), int(pad_d["target_width"]),
                          int(pad_d.get("offset_y", 0)), int(pad_d.get("offset_x", 0)))
        except KeyError as exc:
            raise ConfigError(f"missing config field: pad.{exc.args[0]}") from exc
        working = d.get("working", {})
        try:
            return cls(
                pad=pad,
                mode=d.get("mode", "full"),
                seed=int(d.get("seed", 0)),
                working_height=working.get("height"),
                working_width=working.get("width"),
                sampler=SamplerParams(**d.get("sampler", {})),
                gcg=GcgParams(**d.get("gcg", {})),
                tiling=TilingParams(**d.get("tiling", {})),
                denoiser=_denoiser_from_dict(d.get("denoiser", {})),
                workers=int(d.get("workers", 1)),
                codec_factor=int(d.get("codec", {}).get("factor", 1)))
        except TypeError as exc:
            raise ConfigError(f"bad config field: {exc}") from exc

    def to_dict(self) -> dict:
        wh, ww = self.working_resolution()
        return {
            "pad": asdict(self.pad),
            "mode": self.mode,
            "seed": self.seed,
            "working": {"height": wh, "width": ww},
            "sampler": asdict(self.sampler),
            "gcg": asdict(self.gcg),
            "tiling": asdict(self.tiling),
            "denoiser": {
                "kind": "toy",
                "lambda_sparse": self.denoiser.lambda_sparse,
                "lambda_dense": self.denoiser.lambda_dense,
                "radius": self.denoiser.neighbor_radius,
                "fill_floor": self.denoiser.fill_floor,
                "latent_carryover": self.denoiser.latent_carryover,
            },
            "workers": self.workers,
            "codec": {"kind": "identity" if self.codec_factor == 1 else "avgpool",
                      "factor": self.codec_factor},
        }


def codec_encode(video: VideoTensor, factor: int) -> VideoTensor:
    """Average-pool each frame by `factor` along both spatial axes."""
    if factor == 1:
        return video
    f, h, w, c = video.shape
    if h % factor or w % factor:
        raise ConfigError(f"({h}, {w}) not divisible by codec factor {factor}")
    blocks = video.data.reshape(f, h // factor, factor, w // factor, factor, c)
    return VideoTensor(blocks.mean(axis=(2, 4), dtype=np.float64).astype(np.float32))


def codec_encode_mask(mask: MaskVideo, factor: int) -> MaskVideo:
    """A pooled cell counts as observed only if every source pixel is observed."""
    if factor == 1:
        return mask
    f, h, w, c = mask.data.shape
    if h % factor or w % factor:
        raise ConfigError(f"({h}, {w}) not divisible by codec factor {factor}")
    blocks = mask.data.reshape(f, h // factor, factor, w // factor, factor, c)
    return MaskVideo(blocks.max(axis=(2, 4)))


def codec_decode(video: VideoTensor, factor: int) -> VideoTensor:
    """Nearest-neighbor expansion back to pixel resolution."""
    if factor == 1:
        return video
    return VideoTensor(np.repeat(np.repeat(video.data, factor, axis=1), factor, axis=2))


@dataclass(frozen=True)
class RunResult:
    output: VideoTensor
    mode: str
    seed: int
    timings: dict[str, float]
    keyframes: tuple[int, ...] | None


def insert_guidance(video_ds: VideoTensor, mask_ds: MaskVideo, guidance: VideoTensor,
                    keys: tuple[int, ...]) -> tuple[VideoTensor, MaskVideo]:
    """Replace keyframe frames with their guidance content and mark them as
    fully trusted (all-ones mask); every other frame is untouched."""
    if guidance.frames != len(keys):
        raise ConfigError(f"{guidance.frames} guidance frames for {len(keys)} keyframes")
    cond = video_ds.data.copy()
    msk = mask_ds.data.copy()
    for i, k in enumerate(keys):
        if not 0 <= k < video_ds.frames:
            raise IndexError(f"keyframe {k} out of range [0, {video_ds.frames})")
        cond[k] = guidance.data[i]
        msk[k] = 1.0
    return VideoTensor(cond), MaskVideo(msk)


def temporal_completion(guided: VideoTensor, guided_mask: MaskVideo, denoiser,
                        plan_t: TilePlan, sample: SampleSchedule, rng_seed: int,
                        workers: int = 1) -> VideoTensor:
    """Full denoising from pure noise over the tile plan with per-step
    blending, conditioned on the guidance-augmented video."""
    z = VideoTensor(rng.normals(rng_seed, "completion:init", guided.shape))
    times = sample.times
    for s in range(sample.total_steps):
        z = tiled_denoise_pass(z, guided, guided_mask, plan_t, denoiser,
                               float(times[s]), float(times[s + 1]), "dense", workers)
    return z


def spatial_refinement(completed_ds: VideoTensor, padded: VideoTensor,
                       mask: MaskVideo, denoiser, plan_st: TilePlan,
                       sample: SampleSchedule, strength: float, rng_seed: int,
                       workers: int = 1) -> VideoTensor:
    """Upsample the completed working-resolution video to target resolution,
    composite observed pixels back in, inject moderate noise, and re-denoise
    over spatio-temporal tiles anchored on the composite."""
    target = VideoTensor(resize_bicubic(completed_ds, padded.height, padded.width).data)
    composite = VideoTensor(np.where(mask.data > 0.0, target.data, padded.data))
    z, start_step = sdedit_start(composite, strength, sample, rng_seed, "refine")
    zero_mask = MaskVideo(np.zeros(mask.data.shape, dtype=np.float32))
    times = sample.times
    for s in range(sample.total_steps - start_step, sample.total_steps):
        z = tiled_denoise_pass(z, composite, zero_mask, plan_st, denoiser,
                               float(times[s]), float(times[s + 1]), "dense", workers)
    return z


def _stage(timings: dict, name: str):
    class _Timer:
        def __enter__(self):
            self.t0 = time.perf_counter()
            return self

        def __exit__(self, exc_type, exc, tb):
            timings[name] = time.perf_counter() - self.t0
            if exc is not None and not isinstance(exc, StageError):
                raise StageError(name, exc) from exc
            return False
    return _Timer()


def run(config: PipelineConfig, video: VideoTensor) -> RunResult:
    timings: dict[str, float] = {}
    sample = SampleSchedule(config.sampler.total_steps, config.sampler.swap_steps)
    til = config.tiling
    denoiser = ToyDenoiser(config.denoiser)

    with _stage(timings, "pad"):
        extended, orig_frames = pad_length(video, til.tile_t)
        padded, mask = pad_video(extended, config.pad)

    use_gcg = config.mode in ("full", "temporal_only")
    use_downsample = config.mode in ("full", "spatial_only")
    use_refine = config.mode in ("full", "spatial_only")

    with _stage(timings, "downsample"):
        if use_downsample:
            wh, ww = config.working_resolution()
            video_ds = resize_bicubic(padded, wh, ww)
            # re-zero surviving mask pixels so conditions stay blank where generated
            mask_ds = downsample_mask(mask, wh, ww)
            video_ds = VideoTensor(np.where(mask_ds.data > 0.0, 0.0, video_ds.data))
        else:
            wh, ww = padded.height, padded.width
            video_ds, mask_ds = padded, mask
        factor = config.codec_factor if use_downsample else 1
        if factor > 1:
            mask_ds = codec_encode_mask(mask_ds, factor)
            video_ds = codec_encode(video_ds, factor)
            video_ds = VideoTensor(np.where(mask_ds.data > 0.0, 0.0, video_ds.data))
            wh, ww = wh // factor, ww // factor

    keys = None
    guided, guided_mask = video_ds, mask_ds
    with _stage(timings, "guidance"):
        if use_gcg:
            g = config.gcg
            delta = gcg_mod.auto_delta(video_ds) if g.delta_auto else g.delta
            kcount = min(g.keyframes, video_ds.frames)
            initial = gcg_mod.select_keyframes(video_ds.frames, kcount)
            stage1 = denoiser
            if not use_downsample and (wh > til.tile_y or ww > til.tile_x):
                spatial = plan((1, wh, ww), 1, til.tile_y, til.tile_x,
                               0, til.overlap_y, til.overlap_x)
                stage1 = SpatiallyTiledDenoiser(denoiser, spatial)
            guidance, keys = gcg_mod.multiscale_gcg(
                video_ds, mask_ds, initial, g.tau, stage1, sample,
                config.seed, kcount, delta)
            guided, guided_mask = insert_guidance(video_ds, mask_ds, guidance, keys)

    with _stage(timings, "completion"):
        if use_downsample:
            plan_t = plan((guided.frames, wh, ww), til.tile_t, wh, ww, til.overlap_t, 0, 0)
        else:
            plan_t = plan((guided.frames, wh, ww), til.tile_t, til.tile_y, til.tile_x,
                          til.overlap_t, til.overlap_y, til.overlap_x)
        completed = temporal_completion(guided, guided_mask, denoiser, plan_t,
                                        sample, config.seed, config.workers)
        if factor > 1:
            completed = codec_decode(completed, factor)

    with _stage(timings, "refinement"):
        if use_refine:
            plan_st = plan(padded.shape[:3], til.tile_t, til.tile_y, til.tile_x,
                           til.overlap_t, til.overlap_y, til.overlap_x)
            result = spatial_refinement(completed, padded, mask, denoiser, plan_st,
                                        sample, config.sampler.refine_strength,
                                        config.seed, config.workers)
        else:
            result = completed

    with _stage(timings, "trim"):
        output = trim_length(result, orig_frames)
    return RunResult(output, config.mode, config.seed, timings, keys)
