"""Full-reference quality metrics (PSNR, SSIM) over video volumes.

Both metrics are computed on every channel and averaged. SSIM uses the
standard 11x11 Gaussian window (sigma 1.5, K1=0.01, K2=0.03, L=1) and averages
over valid window positions only (no border padding).
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .volume import VideoVolume, VolumeError

SSIM_WIN = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03
INF_SENTINEL = "inf"


def _check_pair(a, b):
    if a.shape != b.shape:
        raise VolumeError(f"dimension mismatch: {a.shape} vs {b.shape}")


def _psnr_from_mse(mse, peak):
    if mse == 0:
        return math.inf
    return 10.0 * math.log10(peak * peak / mse)


def psnr(a: VideoVolume, b: VideoVolume, peak: float = 1.0) -> float:
    """PSNR in dB over all samples; ``math.inf`` when the volumes are identical."""
    _check_pair(a, b)
    diff = a.data.astype(np.float64) - b.data.astype(np.float64)
    return _psnr_from_mse(float(np.mean(diff * diff)), peak)


def gaussian_window(size=SSIM_WIN, sigma=SSIM_SIGMA):
    r = np.arange(size, dtype=np.float64) - (size - 1) / 2
    g = np.exp(-(r * r) / (2 * sigma * sigma))
    return g / g.sum()


def _filter_valid(img, g):
    # separable valid-mode correlation over the last two axes
    tmp = sliding_window_view(img, g.size, axis=-1) @ g
    return sliding_window_view(tmp, g.size, axis=-2) @ g


def ssim_map(a, b, data_range=1.0):
    """SSIM map(s) for arrays (..., Y, X)."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    g = gaussian_window()
    c1 = (SSIM_K1 * data_range) ** 2
    c2 = (SSIM_K2 * data_range) ** 2
    mu_a = _filter_valid(a, g)
    mu_b = _filter_valid(b, g)
    saa = _filter_valid(a * a, g) - mu_a * mu_a
    sbb = _filter_valid(b * b, g) - mu_b * mu_b
    sab = _filter_valid(a * b, g) - mu_a * mu_b
    num = (2 * mu_a * mu_b + c1) * (2 * sab + c2)
    den = (mu_a * mu_a + mu_b * mu_b + c1) * (saa + sbb + c2)
    return num / den


def _ssim_frames(a: VideoVolume, b: VideoVolume):
    _check_pair(a, b)
    if a.Y < SSIM_WIN or a.X < SSIM_WIN:
        raise VolumeError(f"SSIM needs frames of at least {SSIM_WIN}x{SSIM_WIN}, got {a.Y}x{a.X}")
    # (T, C, Y, X) -> per-frame mean over channels and windows
    m = ssim_map(np.moveaxis(a.data, 3, 1), np.moveaxis(b.data, 3, 1))
    return m.mean(axis=(1, 2, 3))


def ssim(a: VideoVolume, b: VideoVolume) -> float:
    return float(np.mean(_ssim_frames(a, b)))


@dataclass
class MetricsReport:
    psnr_db: float
    ssim: float
    per_frame: list = field(default_factory=list)

    def to_dict(self):
        def enc(v):
            return INF_SENTINEL if math.isinf(v) else float(v)
        return {
            "psnr_db": enc(self.psnr_db),
            "ssim": float(self.ssim),
            "per_frame": [{"t": int(r["t"]), "psnr_db": enc(r["psnr_db"]), "ssim": float(r["ssim"])}
                          for r in self.per_frame],
            "channels": "all (metrics averaged over channels)",
        }

    def to_json(self, **kw):
        return json.dumps(self.to_dict(), **kw)

    @classmethod
    def from_dict(cls, d):
        def dec(v):
            return math.inf if v == INF_SENTINEL else float(v)
        frames = [{"t": int(r["t"]), "psnr_db": dec(r["psnr_db"]), "ssim": float(r["ssim"])}
                  for r in d.get("per_frame", [])]
        return cls(dec(d["psnr_db"]), float(d["ssim"]), frames)

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))


def evaluate(pred: VideoVolume, gt: VideoVolume) -> MetricsReport:
    """PSNR/SSIM of ``pred`` against ``gt`` with per-frame series."""
    _check_pair(pred, gt)
    diff = pred.data.astype(np.float64) - gt.data.astype(np.float64)
    frame_mse = np.mean(diff * diff, axis=(1, 2, 3))
    frame_ssim = _ssim_frames(pred, gt)
    per_frame = [{"t": t, "psnr_db": _psnr_from_mse(float(frame_mse[t]), 1.0),
                  "ssim": float(frame_ssim[t])} for t in range(pred.T)]
    return MetricsReport(psnr(pred, gt), float(np.mean(frame_ssim)), per_frame)
