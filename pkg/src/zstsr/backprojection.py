"""Iterative back-projection onto spatial (bicubic) and temporal (rect)
consistency constraints."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .resample import resize_spatial, temporal_rect_downsample
from .volume import VideoVolume, VolumeError

DIVERGENCE_STREAK = 3


class BackProjectionError(RuntimeError):
    pass


@dataclass
class BackProjectionConfig:
    iterations: int = 10
    tolerance: float = 1e-4  # residual RMSE at which iteration stops
    mode: str = "spatial"

    def __post_init__(self):
        if self.iterations < 1 or not self.tolerance > 0:
            raise VolumeError("back-projection needs iterations >= 1 and tolerance > 0")
        if self.mode not in ("spatial", "temporal"):
            raise VolumeError(f"unknown back-projection mode {self.mode!r}")


def _rmse(r):
    return float(np.sqrt(np.mean(np.square(r, dtype=np.float64))))


def _track(history, rmse):
    history.append(rmse)
    tail = history[-(DIVERGENCE_STREAK + 1):]
    if len(tail) == DIVERGENCE_STREAK + 1 and all(b > a for a, b in zip(tail, tail[1:])):
        raise BackProjectionError(
            f"back-projection diverging: residual grew {DIVERGENCE_STREAK} times in a row {tail}")


def spatial_backproject(high: VideoVolume, low_ref: VideoVolume, scale=2,
                        cfg: BackProjectionConfig | None = None, history=None) -> VideoVolume:
    """Correct ``high`` until its bicubic downscale matches ``low_ref``.

    ``scale`` is the spatial factor from ``low_ref`` up to ``high`` (None skips
    the size check, for pyramids whose rounded sizes are not exact doubles). The
    residual RMSE before each update is appended to ``history`` (final entry is
    the residual of the returned volume).
    """
    cfg = cfg or BackProjectionConfig()
    if high.T != low_ref.T or high.C != low_ref.C:
        raise VolumeError(f"spatial back-projection: T/C mismatch {high.shape} vs {low_ref.shape}")
    if scale is not None and (round(high.Y / float(scale)),
                              round(high.X / float(scale))) != (low_ref.Y, low_ref.X):
        raise VolumeError(f"spatial back-projection: {high.shape} at 1/{scale} != {low_ref.shape}")
    history = [] if history is None else history
    low = low_ref.data.astype(np.float64)
    cur = high
    for _ in range(cfg.iterations):
        r = low - resize_spatial(cur, low_ref.Y, low_ref.X).data
        rmse = _rmse(r)
        _track(history, rmse)
        if rmse <= cfg.tolerance:
            return cur
        up = resize_spatial(VideoVolume._wrap(r.astype(np.float32)), high.Y, high.X)
        cur = VideoVolume._wrap(cur.data + up.data)
    _track(history, _rmse(low - resize_spatial(cur, low_ref.Y, low_ref.X).data))
    return cur


def expand_temporal(low, s):
    """Adjoint-shaped expansion: repeat each frame ``s`` times (weight 1)."""
    return np.repeat(low, s, axis=0)


def temporal_backproject(high: VideoVolume, low_ref: VideoVolume, s: int,
                         cfg: BackProjectionConfig | None = None, history=None) -> VideoVolume:
    """Correct ``high`` until rect-downsampling by ``s`` reproduces ``low_ref``.

    Replicating the residual over each run of ``s`` frames zeroes it in one
    step; at least one correction is always applied.
    """
    cfg = cfg or BackProjectionConfig(mode="temporal")
    s = int(s)
    if high.T != s * low_ref.T or high.shape[1:] != low_ref.shape[1:]:
        raise VolumeError(f"temporal back-projection: {high.shape} is not x{s} of {low_ref.shape}")
    history = [] if history is None else history
    low = low_ref.data.astype(np.float64)
    cur = high
    for i in range(cfg.iterations):
        r = low - temporal_rect_downsample(cur, s).data
        rmse = _rmse(r)
        _track(history, rmse)
        if rmse == 0 or (i > 0 and rmse <= cfg.tolerance):
            return cur
        cur = VideoVolume._wrap((cur.data + expand_temporal(r, s)).astype(np.float32))
    _track(history, _rmse(low - temporal_rect_downsample(cur, s).data))
    return cur
