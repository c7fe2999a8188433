"""Within- vs across-dimension patch recurrence.

Every query patch on one t-slice of the video is matched exhaustively (SSD)
against candidate pools built from space-time rescalings of the video, in its
original orientation and with a spatial axis swapped into time. The heat map
holds, per query, the fraction of its k best matches that came from an
across-dimension pool.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from . import kernels
from .resample import spatial_scale_bicubic, temporal_rect_downsample
from .volume import IDENTITY, SWAP_TX, SWAP_TY, VideoVolume, VolumeError, transpose

POOL_ORIENTATIONS = {"xyt": IDENTITY, "tyx": SWAP_TX, "xty": SWAP_TY}


@dataclass
class PatchSearchConfig:
    patch: tuple = (3, 5, 5)  # (dt, dy, dx)
    k: int = 10
    # (spatial scale, temporal factor) pairs searched in every orientation.
    # The unscaled pair (1, 1) is left out by default: a rigidly moving object
    # has exact copies of each patch along its own trajectory a few frames
    # away, outside any exclusion radius, and those would win every query.
    scales: list = field(default_factory=lambda: [(0.5, 1), (1.0, 2), (0.5, 2)])
    orientations: tuple = ("xyt", "tyx", "xty")
    exclusion_radius: int = 2
    stride: int = 2
    slice_t: int | None = None

    def __post_init__(self):
        self.patch = tuple(int(p) for p in self.patch)
        self.scales = [(float(s), int(f)) for s, f in self.scales]
        if self.k < 1:
            raise VolumeError("k must be >= 1")
        if self.exclusion_radius < max(p // 2 for p in self.patch):
            raise VolumeError("exclusion radius must cover the patch radius")
        for o in self.orientations:
            if o not in POOL_ORIENTATIONS:
                raise VolumeError(f"unknown orientation {o!r}")
        if "xyt" not in self.orientations:
            raise VolumeError("the original orientation 'xyt' must be searched")


@dataclass
class HeatMap:
    values: np.ndarray  # (ny, nx) fractions in [0, 1]
    ys: np.ndarray      # query centre rows
    xs: np.ndarray      # query centre columns
    t: int              # queried slice
    winners: np.ndarray | None = None  # (ny*nx, k) global candidate indices
    pools: list | None = None


@dataclass
class CandidatePool:
    name: str
    across: bool
    identity: bool
    patches: np.ndarray    # (n, D)
    centres: np.ndarray    # (n, 3) in the pool's own coordinates


def extract_patches(data, patch):
    """All fully contained patches of a (T, Y, X, C) array, scan order, with centres."""
    dt, dy, dx = patch
    T, Y, X, C = data.shape
    if T < dt or Y < dy or X < dx:
        return np.zeros((0, dt * dy * dx * C), np.float32), np.zeros((0, 3), np.int64)
    win = sliding_window_view(data, (dt, dy, dx), axis=(0, 1, 2))  # (nt, ny, nx, C, dt, dy, dx)
    win = np.moveaxis(win, 3, -1)
    nt, ny, nx = win.shape[:3]
    patches = np.ascontiguousarray(win.reshape(nt * ny * nx, -1), dtype=np.float32)
    t, y, x = np.meshgrid(np.arange(nt), np.arange(ny), np.arange(nx), indexing="ij")
    centres = np.stack([t.ravel() + dt // 2, y.ravel() + dy // 2, x.ravel() + dx // 2], axis=1)
    return patches, centres.astype(np.int64)


def build_pools(vol: VideoVolume, cfg: PatchSearchConfig):
    """Pools in tie-break order: all original-orientation pools, then each
    swapped orientation in declared order; scales in declared order."""
    ordered = ["xyt"] + [o for o in cfg.orientations if o != "xyt"]
    pools = []
    for orient in ordered:
        for scale, factor in cfg.scales:
            v = spatial_scale_bicubic(vol, scale) if scale != 1 else vol
            v = transpose(v, POOL_ORIENTATIONS[orient])
            if factor > 1:
                if v.T < factor:
                    continue
                v = temporal_rect_downsample(v, factor)
            patches, centres = extract_patches(v.data, cfg.patch)
            if len(patches) == 0:
                continue
            identity = orient == "xyt" and scale == 1 and factor == 1
            pools.append(CandidatePool(f"{orient}_s{scale:g}_t{factor}", orient != "xyt",
                                       identity, patches, centres))
    return pools


def query_grid(vol: VideoVolume, cfg: PatchSearchConfig):
    dt, dy, dx = cfg.patch
    t = vol.T // 2 if cfg.slice_t is None else cfg.slice_t
    t = min(max(t, dt // 2), vol.T - 1 - dt // 2)
    ys = np.arange(dy // 2, vol.Y - dy // 2, cfg.stride)
    xs = np.arange(dx // 2, vol.X - dx // 2, cfg.stride)
    return t, ys, xs


def _query_patches(vol, t, ys, xs, patch):
    dt, dy, dx = patch
    out = []
    for y in ys:
        for x in xs:
            p = vol.data[t - dt // 2:t + dt // 2 + 1, y - dy // 2:y + dy // 2 + 1,
                         x - dx // 2:x + dx // 2 + 1]
            out.append(p.reshape(-1))
    return np.asarray(out, dtype=np.float32)


def patch_nn_heatmap(vol: VideoVolume, cfg: PatchSearchConfig | None = None) -> HeatMap:
    cfg = cfg or PatchSearchConfig()
    dt, dy, dx = cfg.patch
    if vol.T < dt or vol.Y < dy or vol.X < dx:
        raise VolumeError(f"volume {vol.shape[:3]} smaller than patch {cfg.patch}")
    pools = build_pools(vol, cfg)
    if not pools:
        raise VolumeError("no candidate pool can hold a patch")
    cands = np.concatenate([p.patches for p in pools])
    cpos = np.concatenate([p.centres for p in pools])
    pool_id = np.concatenate([np.full(len(p.patches), i, np.int32) for i, p in enumerate(pools)])
    identity_ids = [i for i, p in enumerate(pools) if p.identity]
    excl = identity_ids[0] if identity_ids else -1
    t, ys, xs = query_grid(vol, cfg)
    queries = _query_patches(vol, t, ys, xs, cfg.patch)
    qpos = np.array([(t, y, x) for y in ys for x in xs], dtype=np.int64)
    idx, _ = kernels.ssd_topk(queries, cands, cfg.k, qpos, cpos, pool_id, excl,
                              cfg.exclusion_radius)
    if np.any(idx < 0):
        raise VolumeError("candidate pool has fewer than k admissible patches")
    across = np.array([p.across for p in pools])[pool_id[idx]]
    values = across.mean(axis=1).reshape(len(ys), len(xs))
    return HeatMap(values, ys, xs, t, idx, pools)


def colormap(values):
    """Linear blue (0) to red (1): value v -> (round(255 v), 0, round(255 (1 - v)))."""
    v = np.clip(np.asarray(values, dtype=np.float64), 0.0, 1.0)
    red = np.floor(255.0 * v + 0.5)
    blue = np.floor(255.0 * (1.0 - v) + 0.5)
    return np.stack([red, np.zeros_like(v), blue], axis=-1).astype(np.uint8)


def render_heatmap(hm: HeatMap, path) -> None:
    from PIL import Image

    try:
        Image.fromarray(colormap(hm.values)).save(path)
    except OSError as exc:
        raise VolumeError(f"cannot write heat map to {path}: {exc}") from exc


def heatmap_volume(hm: HeatMap) -> VideoVolume:
    return VideoVolume(hm.values[None, :, :, None])
