"""Scaling in space and time.

Temporal degradation is a full-exposure rect blur followed by subsampling.
Spatial scaling and temporal interpolation share one cubic convolution
kernel (a = -0.5) with pixel-centre alignment and clamp-to-edge borders.
"""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from . import kernels
from .volume import VideoVolume, VolumeError

CUBIC_A = -0.5


@dataclass(frozen=True)
class TemporalDegradation:
    factor: int

    def __post_init__(self):
        if int(self.factor) < 2:
            raise VolumeError(f"temporal factor must be >= 2, got {self.factor}")

    @property
    def kernel(self):
        return np.full(self.factor, 1.0 / self.factor)


def cubic_kernel(x, a=CUBIC_A):
    x = np.abs(np.asarray(x, dtype=np.float64))
    x2, x3 = x * x, x * x * x
    near = (a + 2) * x3 - (a + 3) * x2 + 1
    far = a * x3 - 5 * a * x2 + 8 * a * x - 4 * a
    return np.where(x <= 1, near, np.where(x < 2, far, 0.0))


def cubic_taps(n_in, n_out, positions=None):
    """Clamped source indices and weights (n_out, 4) for cubic resampling.

    ``positions`` are source coordinates of the output samples in input-sample
    units; by default output pixel centres are mapped onto input pixel centres.
    """
    if positions is None:
        j = np.arange(n_out, dtype=np.float64)
        positions = (j + 0.5) * (n_in / n_out) - 0.5
    positions = np.asarray(positions, dtype=np.float64)
    base = np.floor(positions).astype(np.int64)
    offs = np.arange(-1, 3)
    idx = base[:, None] + offs[None, :]
    wts = cubic_kernel(positions[:, None] - idx)
    return np.clip(idx, 0, n_in - 1), wts


def temporal_rect_downsample(vol: VideoVolume, s: int) -> VideoVolume:
    """Average each run of ``s`` frames (full-exposure rect) and keep one per run.

    Trailing frames that do not fill a run are dropped.
    """
    s = int(s)
    if s < 2:
        raise VolumeError(f"temporal factor must be >= 2, got {s}")
    if vol.T < s:
        raise VolumeError(f"need at least {s} frames, volume has {vol.T}")
    t_out = vol.T // s
    d = vol.data[:t_out * s].astype(np.float64)
    d = d.reshape((t_out, s) + d.shape[1:]).mean(axis=1)
    return VideoVolume._wrap(d.astype(np.float32))


def output_size(n, scale):
    return int(round(n * float(scale)))


def spatial_scale_bicubic(vol: VideoVolume, scale) -> VideoVolume:
    """Resample every frame by ``scale`` (plain cubic kernel, no anti-alias blur)."""
    if float(scale) <= 0:
        raise VolumeError(f"scale must be positive, got {scale}")
    ny, nx = output_size(vol.Y, scale), output_size(vol.X, scale)
    return resize_spatial(vol, ny, nx)


def resize_spatial(vol: VideoVolume, ny: int, nx: int) -> VideoVolume:
    if ny < 1 or nx < 1:
        raise VolumeError(f"spatial output size {ny}x{nx} is empty")
    data = vol.data
    if ny != vol.Y:
        idx, wts = cubic_taps(vol.Y, ny)
        data = kernels.resample_axis(data, 1, idx, wts)
    if nx != vol.X:
        idx, wts = cubic_taps(vol.X, nx)
        data = kernels.resample_axis(data, 2, idx, wts)
    if data is vol.data:
        data = data.copy()
    return VideoVolume._wrap(data)


def upsample_positions(t_in: int, r: int):
    """Source times of the r*t_in output frames: centres split each input interval."""
    j = np.arange(r * t_in, dtype=np.float64)
    return (j + 0.5) / r - 0.5


def temporal_cubic_upsample(vol: VideoVolume, r: int) -> VideoVolume:
    r = int(r)
    if r < 2:
        raise VolumeError(f"upsampling factor must be >= 2, got {r}")
    if vol.T < 2:
        raise VolumeError(f"temporal interpolation needs >= 2 frames, got {vol.T}")
    idx, wts = cubic_taps(vol.T, r * vol.T, upsample_positions(vol.T, r))
    return VideoVolume._wrap(kernels.resample_axis(vol.data, 0, idx, wts))


def as_fraction(scale) -> Fraction:
    if isinstance(scale, str):
        return Fraction(scale)
    return Fraction(scale).limit_denominator(1000)
