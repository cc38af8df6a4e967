"""Global coarse guidance: keyframe selection, local temporal windows,
global-local frame swapping during sampling, and multi-scale densification.

Stage 1 denoises a sparse keyframe stack together with one short-stride local
window per keyframe; during the first ``swap_steps`` denoising steps the
global stack's latent for frame k_i is overwritten by the latent of the same
frame inside its local window, injecting short-range temporal cues into the
global trajectory.  Midpoint keyframes are then inserted until the largest
inter-keyframe gap falls below tau, with previously generated keyframes kept
bit-identical as trusted anchors.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import rng
from .sampler import SampleSchedule, step
from .denoiser import DenoiseRequest
from .tiling import ConfigError, Tile, TilePlan, blend
from .video import MaskVideo, ShapeError, VideoTensor


class GcgError(RuntimeError):
    """Raised when densification fails to terminate within the round cap."""


@dataclass(frozen=True)
class KeyframeSchedule:
    indices: tuple[int, ...]
    K: int
    delta: int
    windows: tuple[tuple[int, ...], ...]
    swap_steps: int
    tau: int

    def __post_init__(self):
        if list(self.indices) != sorted(set(self.indices)):
            raise ConfigError("keyframe indices must be strictly increasing")
        if len(self.windows) != len(self.indices):
            raise ConfigError("one window per keyframe required")
        for k, win in zip(self.indices, self.windows):
            if len(win) != self.K:
                raise ConfigError(f"window for keyframe {k} has {len(win)} != K={self.K} frames")
            strides = {b - a for a, b in zip(win, win[1:])}
            if len(win) > 1 and (len(strides) != 1 or min(strides) < 1):
                raise ConfigError(f"window {win} lacks a constant positive stride")
            if k not in win:
                raise ConfigError(f"window {win} does not contain its keyframe {k}")
            if win[0] < 0:
                raise ConfigError(f"window {win} has negative indices")


def select_keyframes(total_frames: int, count: int) -> tuple[int, ...]:
    """count evenly spaced indices over [0, total_frames), endpoints included."""
    if count < 1:
        raise ConfigError("keyframe count must be >= 1")
    if count > total_frames:
        raise ConfigError(f"cannot pick {count} keyframes from {total_frames} frames")
    if count == 1:
        return (0,)
    raw = np.round(np.arange(count) * (total_frames - 1) / (count - 1)).astype(int)
    return tuple(dict.fromkeys(int(v) for v in raw))


def build_window(k: int, count: int, delta: int, total_frames: int) -> tuple[int, ...]:
    """Arithmetic progression of `count` frames containing k, centered when
    possible; shifted to fit [0, total_frames), with the stride reduced to the
    largest feasible value if the requested one cannot fit."""
    if delta < 1:
        raise ConfigError("delta must be >= 1")
    if total_frames < count:
        raise ConfigError(f"cannot fit a {count}-frame window in {total_frames} frames")
    center = count // 2
    for stride in range(delta, 0, -1):
        if stride * (count - 1) > total_frames - 1:
            continue
        for pos in sorted(range(count), key=lambda j: (abs(j - center), j)):
            start = k - stride * pos
            if start >= 0 and start + stride * (count - 1) <= total_frames - 1:
                return tuple(start + stride * j for j in range(count))
    raise ConfigError(f"no feasible window for k={k}, K={count}, F={total_frames}")


def make_schedule(total_frames: int, count: int, delta: int, swap_steps: int,
                  tau: int, indices: tuple[int, ...] | None = None) -> KeyframeSchedule:
    if indices is None:
        indices = select_keyframes(total_frames, count)
    windows = tuple(build_window(k, count, delta, total_frames) for k in indices)
    return KeyframeSchedule(tuple(indices), count, delta, windows, swap_steps, tau)


def swap_globals(global_latents: VideoTensor, window_latents: list[VideoTensor],
                 sched: KeyframeSchedule, step_index: int) -> VideoTensor:
    """During the first swap_steps steps, replace each global slot with the
    same frame's latent from its local window; a no-op afterwards."""
    if step_index >= sched.swap_steps:
        return global_latents
    out = global_latents.data.copy()
    for i, (k, win) in enumerate(zip(sched.indices, sched.windows)):
        if k not in win:
            raise ConfigError(f"keyframe {k} missing from its window {win}")
        out[i] = window_latents[i].data[win.index(k)]
    return VideoTensor(out)


def _stack(video: np.ndarray, idx: tuple[int, ...]) -> np.ndarray:
    return video[list(idx)].copy()


def _init_noise(rng_seed: int, tag: str, idx: tuple[int, ...],
                frame_shape: tuple[int, ...]) -> VideoTensor:
    # Per-frame noise keyed by the original frame index so the global stack
    # and every window slot referring to the same frame start from identical
    # latents; this makes the swap ablation a controlled comparison.
    frames = [rng.normals(rng_seed, f"{tag}:init:{f}", (1,) + frame_shape)
              for f in idx]
    return VideoTensor(np.concatenate(frames, axis=0))


def construct_gcg(video_ds: VideoTensor, mask_ds: MaskVideo, sched: KeyframeSchedule,
                  denoiser, sample: SampleSchedule, rng_seed: int,
                  noise_tag: str = "gcg") -> VideoTensor:
    """Denoise the keyframe stack and all local windows in lockstep, swapping
    window latents into the global stack for the first swap_steps steps."""
    frame_shape = video_ds.shape[1:]
    cond_g = VideoTensor(_stack(video_ds.data, sched.indices))
    mask_g = MaskVideo(_stack(mask_ds.data, sched.indices))
    cond_w = [VideoTensor(_stack(video_ds.data, win)) for win in sched.windows]
    mask_w = [MaskVideo(_stack(mask_ds.data, win)) for win in sched.windows]
    z_g = _init_noise(rng_seed, noise_tag, sched.indices, frame_shape)
    z_w = [_init_noise(rng_seed, noise_tag, win, frame_shape) for win in sched.windows]
    times = sample.times
    for s in range(sample.total_steps):
        t_from, t_to = float(times[s]), float(times[s + 1])
        v_g = denoiser.denoise(DenoiseRequest(z_g, cond_g, mask_g, t_from, "sparse"))
        z_g = step(z_g, v_g, t_from, t_to)
        new_w = []
        for zi, ci, mi in zip(z_w, cond_w, mask_w):
            v_i = denoiser.denoise(DenoiseRequest(zi, ci, mi, t_from, "sparse"))
            new_w.append(step(zi, v_i, t_from, t_to))
        z_w = new_w
        z_g = swap_globals(z_g, z_w, sched, s)
    return z_g


def max_index_gap(indices) -> int:
    idx = sorted(indices)
    if len(idx) < 2:
        raise ValueError("need at least 2 indices")
    return max(b - a for a, b in zip(idx, idx[1:]))


def midpoints(indices, tau: int) -> tuple[int, ...]:
    """Floor midpoints of every adjacent pair whose gap exceeds tau."""
    idx = list(indices)
    mids = {(a + b) // 2 for a, b in zip(idx, idx[1:]) if b - a > tau}
    return tuple(sorted(mids - set(idx)))


def _segment_starts(length: int, size: int, overlap: int) -> list[int]:
    if length <= size:
        return [0]
    stride = size - overlap
    starts = list(range(0, length - size, stride))
    starts.append(length - size)
    return starts


def _run_segments(keys: list[int], cond_v: VideoTensor, msk_v: MaskVideo,
                  denoiser, sample: SampleSchedule, rng_seed: int, count: int,
                  delta: int, swap_steps: int, tau: int, tag: str) -> np.ndarray:
    """Construct guidance for `keys`, split into overlapping capacity-K
    segments blended along the keyframe-index axis; returns len(keys) frames."""
    total_frames = cond_v.frames
    h, w = cond_v.shape[1:3]
    seg_size = min(count, len(keys))
    seg_outputs = []
    for start in _segment_starts(len(keys), seg_size, min(2, seg_size - 1) if seg_size > 1 else 0):
        seg_keys = tuple(keys[start:start + seg_size])
        sched = make_schedule(total_frames, seg_size, delta, swap_steps, tau, seg_keys)
        out = construct_gcg(cond_v, msk_v, sched, denoiser, sample, rng_seed,
                            noise_tag=tag)
        seg_outputs.append((Tile(start, start + seg_size, 0, h, 0, w), out))
    seg_plan = TilePlan((len(keys), h, w), tuple(t for t, _ in seg_outputs), 0, 0, 0)
    return blend(seg_outputs, seg_plan).data.copy()


def multiscale_gcg(video_ds: VideoTensor, mask_ds: MaskVideo,
                   initial: tuple[int, ...], tau: int, denoiser,
                   sample: SampleSchedule, rng_seed: int, count: int,
                   delta: int, swap_steps: int | None = None,
                   history: list | None = None
                   ) -> tuple[VideoTensor, tuple[int, ...]]:
    """Iteratively densify keyframes via midpoints until the maximum gap is at
    most tau; keyframes from earlier rounds stay bit-identical.

    If `history` is given, (keys, frames) snapshots are appended per round.
    """
    total_frames = video_ds.frames
    if swap_steps is None:
        swap_steps = sample.swap_steps
    keys = sorted(set(initial))
    merged = _run_segments(keys, video_ds, mask_ds, denoiser, sample, rng_seed,
                           count, delta, swap_steps, tau, "gcg:r0")
    known: dict[int, np.ndarray] = {k: merged[i] for i, k in enumerate(keys)}
    if history is not None:
        history.append((tuple(keys), merged.copy()))
    cap = math.ceil(math.log2(max(total_frames / max(tau, 1), 1.0))) + 2
    rounds = 0
    while len(keys) >= 2 and max_index_gap(keys) > tau:
        rounds += 1
        if rounds > cap:
            raise GcgError(f"densification did not converge within {cap} rounds")
        keys = sorted(set(keys) | set(midpoints(keys, tau)))
        cond = video_ds.data.copy()
        msk = mask_ds.data.copy()
        for k, content in known.items():
            cond[k] = content
            msk[k] = 1.0
        merged = _run_segments(keys, VideoTensor(cond), MaskVideo(msk), denoiser,
                               sample, rng_seed, count, delta, swap_steps, tau,
                               f"gcg:r{rounds}")
        for pos, k in enumerate(keys):
            if k in known:
                merged[pos] = known[k]
            else:
                known[k] = merged[pos]
        if history is not None:
            history.append((tuple(keys), merged.copy()))
    result = np.stack([known[k] for k in keys], axis=0)
    return VideoTensor(result), tuple(keys)


def auto_delta(video_ds: VideoTensor, threshold: float = 0.05,
               sparse_delta: int = 5, dense_delta: int = 1) -> int:
    """Motion proxy: stride 1 for dynamic content, a wider stride otherwise."""
    if video_ds.frames < 2:
        return sparse_delta
    diff = np.abs(np.diff(video_ds.data.astype(np.float64), axis=0))
    return dense_delta if float(diff.mean()) > threshold else sparse_delta
