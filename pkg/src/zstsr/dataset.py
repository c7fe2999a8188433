"""Internal training set: the space-time pyramid, across-dimension views and
the gradient-weighted crop sampler that turns them into LTR/HTR pairs."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .resample import output_size, spatial_scale_bicubic, temporal_rect_downsample
from .volume import (IDENTITY, SWAP_TX, SWAP_TY, VideoVolume, VolumeError, crop, flip,
                     rotate_spatial, transpose)

log = logging.getLogger(__name__)

ORIENTATIONS = {"within": IDENTITY, "across_x": SWAP_TX, "across_y": SWAP_TY}
AUGMENTATIONS = ("flip_t", "flip_x", "flip_y", "rot90", "rot180", "rot270")
DEFAULT_SPATIAL_SCALES = (1.0, 1 / math.sqrt(2), 0.5, 0.25)
DEFAULT_TEMPORAL_FACTORS = (1, 2)
DEFAULT_AUGMENTATIONS = ((), ("flip_x",), ("flip_y",), ("flip_t",),
                         ("rot90",), ("rot180",), ("rot270",))
PAIR_FACTOR = 2


@dataclass
class PyramidLevel:
    spatial_scale: float
    temporal_factor: int
    orientation: str
    augmentation: tuple
    volume: VideoVolume

    @property
    def name(self):
        aug = "+".join(self.augmentation) or "none"
        return f"{self.orientation}_s{self.spatial_scale:.4g}_t{self.temporal_factor}_{aug}"

    @property
    def is_across(self):
        return self.orientation != "within"


@dataclass
class SamplerConfig:
    crop: tuple = (16, 36, 36)  # (dt, dy, dx) of the HTR crop
    across_probability: float = 0.5
    seed: int = 0
    origin_stride: int = 4

    def __post_init__(self):
        self.crop = tuple(int(c) for c in self.crop)
        if len(self.crop) != 3 or min(self.crop) < 1:
            raise VolumeError(f"bad crop size {self.crop}")
        if self.crop[0] % PAIR_FACTOR:
            raise VolumeError(f"crop length {self.crop[0]} must be divisible by {PAIR_FACTOR}")
        if not 0.0 <= self.across_probability <= 1.0:
            raise VolumeError("across_probability must lie in [0, 1]")


@dataclass
class ExamplePair:
    ltr: VideoVolume
    htr: VideoVolume
    provenance: dict = field(default_factory=dict)


def augment(vol: VideoVolume, augmentation) -> VideoVolume:
    for a in augmentation:
        if a.startswith("flip_"):
            vol = flip(vol, a[-1])
        elif a.startswith("rot"):
            vol = rotate_spatial(vol, int(a[3:]) // 90)
        else:
            raise VolumeError(f"unknown augmentation {a!r}")
    return vol


def _fits(vol, size):
    return vol.T >= size[0] and vol.Y >= size[1] and vol.X >= size[2]


def build_pyramid(video: VideoVolume, spatial_scales=DEFAULT_SPATIAL_SCALES,
                  temporal_factors=DEFAULT_TEMPORAL_FACTORS,
                  orientations=tuple(ORIENTATIONS), augmentations=DEFAULT_AUGMENTATIONS,
                  seed=0, crop_size=(16, 36, 36)):
    """Materialize every (scale, factor, orientation, augmentation) level.

    Across-dimension levels are built by spatial downscaling, then the axis
    swap, then rect downsampling along the new time axis. ``augmentations`` is
    either a list of augmentation tuples or an int n, meaning n combinations
    drawn (with ``seed``) besides the identity. Levels that cannot hold a crop
    are dropped.
    """
    if isinstance(augmentations, int):
        rng = np.random.default_rng(seed)
        pool = list(DEFAULT_AUGMENTATIONS[1:])
        picks = rng.choice(len(pool), size=min(augmentations, len(pool)), replace=False)
        augmentations = [()] + [pool[i] for i in sorted(picks)]
    for o in orientations:
        if o not in ORIENTATIONS:
            raise VolumeError(f"unknown orientation {o!r}")
    levels, dropped = [], []
    for scale in spatial_scales:
        ny, nx = output_size(video.Y, scale), output_size(video.X, scale)
        if ny < 1 or nx < 1:
            dropped.append(f"scale {scale}: empty frame")
            continue
        scaled = spatial_scale_bicubic(video, scale)
        for orient in orientations:
            base = transpose(scaled, ORIENTATIONS[orient])
            for factor in temporal_factors:
                factor = int(factor)
                if factor > 1:
                    if base.T < factor:
                        dropped.append(f"{orient} s{scale} t{factor}: too few frames")
                        continue
                    vol = temporal_rect_downsample(base, factor)
                else:
                    vol = base
                for aug in augmentations:
                    aug = tuple(aug)
                    lvl_vol = augment(vol, aug)
                    level = PyramidLevel(float(scale), factor, orient, aug, lvl_vol)
                    if not _fits(lvl_vol, crop_size):
                        dropped.append(f"{level.name}: {lvl_vol.shape[:3]} < crop {tuple(crop_size)}")
                        continue
                    levels.append(level)
    for reason in dropped:
        log.info("dropping pyramid level %s", reason)
    if not levels:
        raise VolumeError(
            f"input {video.shape[:3]} too small for any pyramid level; every level needs at "
            f"least T={crop_size[0]}, Y={crop_size[1]}, X={crop_size[2]}")
    return levels


def gradient_magnitude(vol: VideoVolume) -> np.ndarray:
    """|dv/dy| + |dv/dx| (forward differences, zero past the last row/column), channel mean."""
    d = vol.data.astype(np.float64)
    g = np.zeros(d.shape, dtype=np.float64)
    g[:, :-1] += np.abs(d[:, 1:] - d[:, :-1])
    g[:, :, :-1] += np.abs(d[:, :, 1:] - d[:, :, :-1])
    return g.mean(axis=3)


def _axis_origins(n, size, stride):
    last = n - size
    pts = list(range(0, last + 1, stride))
    if pts[-1] != last:
        pts.append(last)
    return np.asarray(pts, dtype=np.int64)


def crop_weights(level, crop_size=(16, 36, 36), stride=4):
    """Candidate origins and their weights (mean gradient magnitude over the box).

    Origins lie on a ``stride`` grid plus the last valid origin per axis.
    Returns (origins (n, 3), weights (n,)).
    """
    vol = level.volume if isinstance(level, PyramidLevel) else level
    if not _fits(vol, crop_size):
        raise VolumeError(f"crop {tuple(crop_size)} does not fit level {vol.shape[:3]}")
    g = gradient_magnitude(vol)
    sat = np.zeros(tuple(s + 1 for s in g.shape))
    sat[1:, 1:, 1:] = g.cumsum(0).cumsum(1).cumsum(2)
    ot, oy, ox = (_axis_origins(n, c, stride) for n, c in zip(g.shape, crop_size))
    T, Y, X = np.meshgrid(ot, oy, ox, indexing="ij")
    dt, dy, dx = crop_size
    box = (sat[T + dt, Y + dy, X + dx] - sat[T, Y + dy, X + dx] - sat[T + dt, Y, X + dx]
           - sat[T + dt, Y + dy, X] + sat[T, Y, X + dx] + sat[T, Y + dy, X]
           + sat[T + dt, Y, X] - sat[T, Y, X])
    weights = np.maximum(box / (dt * dy * dx), 0.0).reshape(-1)
    origins = np.stack([T.reshape(-1), Y.reshape(-1), X.reshape(-1)], axis=1)
    return origins, weights


def choose_index(weights, rng):
    """Draw an index proportionally to ``weights``; uniform if all are zero."""
    w = np.asarray(weights, dtype=np.float64)
    total = w.sum()
    if not total > 0:
        return int(rng.integers(len(w)))
    cdf = np.cumsum(w)
    return int(min(np.searchsorted(cdf, rng.random() * cdf[-1], side="right"), len(w) - 1))


def make_pair(level: PyramidLevel, origin, crop_size) -> ExamplePair:
    htr = crop(level.volume, origin, crop_size)
    ltr = temporal_rect_downsample(htr, PAIR_FACTOR)
    prov = {"level": level.name, "orientation": level.orientation,
            "spatial_scale": level.spatial_scale, "temporal_factor": level.temporal_factor,
            "augmentation": list(level.augmentation), "origin": [int(v) for v in origin]}
    return ExamplePair(ltr, htr, prov)


class PairSampler:
    """Deterministic stream of training pairs for a fixed level list and seed."""

    def __init__(self, levels, cfg: SamplerConfig, rng=None):
        self.cfg = cfg
        self.rng = rng if rng is not None else np.random.default_rng(cfg.seed)
        self.levels = [l for l in levels if _fits(l.volume, cfg.crop)]
        if not self.levels:
            raise VolumeError(f"no pyramid level can hold a {cfg.crop} crop")
        self.within = [i for i, l in enumerate(self.levels) if not l.is_across]
        self.across = [i for i, l in enumerate(self.levels) if l.is_across]
        self._tables = {}
        self.draws = 0

    def _table(self, i):
        if i not in self._tables:
            self._tables[i] = crop_weights(self.levels[i], self.cfg.crop, self.cfg.origin_stride)
        return self._tables[i]

    def draw(self) -> ExamplePair:
        want_across = self.rng.random() < self.cfg.across_probability
        pool = self.across if want_across else self.within
        if not pool:
            pool = self.within or self.across
        i = pool[int(self.rng.integers(len(pool)))]
        origins, weights = self._table(i)
        origin = origins[choose_index(weights, self.rng)]
        pair = make_pair(self.levels[i], origin, self.cfg.crop)
        pair.provenance["draw"] = self.draws
        self.draws += 1
        return pair


def sample_pair(levels, cfg: SamplerConfig, rng) -> ExamplePair:
    """One pair from a fresh sampler over ``levels`` using ``rng``."""
    return PairSampler(levels, cfg, rng).draw()

