"""Video volumes: layout, axis manipulation and I/O.

A :class:`VideoVolume` is a float32 array of shape (T, Y, X, C), t-major,
so a frame is a contiguous slab. Volumes are treated as immutable; every
operation returns a fresh volume.
"""
from __future__ import annotations

import os
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

AXES = ("t", "y", "x")
STV_MAGIC = b"STV1"
_STV_HEADER = struct.Struct("<4s5I")
FRAME_SUFFIXES = (".png", ".bmp", ".tif", ".tiff", ".ppm", ".pgm")


class VolumeError(ValueError):
    """Malformed volume, file or argument."""


class VideoVolume:
    """Intensity volume with layout (t, y, x, c)."""

    __slots__ = ("_data",)

    def __init__(self, data):
        arr = np.array(data, dtype=np.float32, copy=True)
        if arr.ndim == 3:
            arr = arr[..., None]
        if arr.ndim != 4:
            raise VolumeError(f"expected (T, Y, X, C) data, got shape {arr.shape}")
        if min(arr.shape[:3]) < 1:
            raise VolumeError(f"empty volume {arr.shape}")
        if arr.shape[3] not in (1, 3):
            raise VolumeError(f"channel count must be 1 or 3, got {arr.shape[3]}")
        if not np.all(np.isfinite(arr)):
            raise VolumeError("volume contains non-finite samples")
        arr.flags.writeable = False
        self._data = arr

    @classmethod
    def _wrap(cls, arr):
        # trusted fast path for arrays produced inside the package
        vol = cls.__new__(cls)
        arr = np.ascontiguousarray(arr, dtype=np.float32)
        if arr.flags.writeable:
            arr.flags.writeable = False
        vol._data = arr
        return vol

    @property
    def data(self) -> np.ndarray:
        return self._data

    @property
    def shape(self):
        return self._data.shape

    @property
    def T(self) -> int:
        return self._data.shape[0]

    @property
    def Y(self) -> int:
        return self._data.shape[1]

    @property
    def X(self) -> int:
        return self._data.shape[2]

    @property
    def C(self) -> int:
        return self._data.shape[3]

    @property
    def flat(self) -> np.ndarray:
        return self._data.reshape(-1)

    def flat_index(self, t, y, x, c) -> int:
        return ((t * self.Y + y) * self.X + x) * self.C + c

    def __getitem__(self, idx):
        return self._data[idx]

    def __eq__(self, other):
        if not isinstance(other, VideoVolume):
            return NotImplemented
        return self.shape == other.shape and np.array_equal(self._data, other._data)

    __hash__ = None

    def __repr__(self):
        return f"VideoVolume(T={self.T}, Y={self.Y}, X={self.X}, C={self.C})"


def as_volume(v) -> VideoVolume:
    return v if isinstance(v, VideoVolume) else VideoVolume(v)


@dataclass(frozen=True)
class AxisPermutation:
    """Bijection on the (t, y, x) axes; ``order[i]`` is the input axis that
    becomes output axis ``i``. The channel axis never moves."""

    order: tuple = (0, 1, 2)

    def __post_init__(self):
        if sorted(self.order) != [0, 1, 2]:
            raise VolumeError(f"not a permutation of (t, y, x): {self.order}")
        object.__setattr__(self, "order", tuple(int(i) for i in self.order))

    @classmethod
    def swap(cls, a: str, b: str) -> "AxisPermutation":
        order = [0, 1, 2]
        i, j = AXES.index(a), AXES.index(b)
        order[i], order[j] = order[j], order[i]
        return cls(tuple(order))

    def inverse(self) -> "AxisPermutation":
        inv = [0, 0, 0]
        for out_axis, in_axis in enumerate(self.order):
            inv[in_axis] = out_axis
        return AxisPermutation(tuple(inv))

    def apply_dims(self, dims):
        return tuple(dims[i] for i in self.order)

    @property
    def is_identity(self):
        return self.order == (0, 1, 2)


IDENTITY = AxisPermutation()
SWAP_TX = AxisPermutation.swap("t", "x")
SWAP_TY = AxisPermutation.swap("t", "y")


def transpose(vol: VideoVolume, perm: AxisPermutation) -> VideoVolume:
    """Permute the space-time axes (materialized copy)."""
    return VideoVolume._wrap(np.transpose(vol.data, perm.order + (3,)).copy())


def flip(vol: VideoVolume, axis: str) -> VideoVolume:
    return VideoVolume._wrap(np.flip(vol.data, AXES.index(axis)).copy())


def rotate_spatial(vol: VideoVolume, quarter_turns: int) -> VideoVolume:
    """Rotate every frame by ``quarter_turns`` x 90 degrees counter-clockwise."""
    if quarter_turns % 4 == 0:
        return VideoVolume._wrap(vol.data.copy())
    return VideoVolume._wrap(np.rot90(vol.data, quarter_turns, axes=(1, 2)).copy())


def crop(vol: VideoVolume, origin, size) -> VideoVolume:
    t0, y0, x0 = (int(v) for v in origin)
    dt, dy, dx = (int(v) for v in size)
    if min(t0, y0, x0) < 0 or min(dt, dy, dx) < 1 or \
            t0 + dt > vol.T or y0 + dy > vol.Y or x0 + dx > vol.X:
        raise VolumeError(f"crop box {origin}+{size} outside volume {vol.shape[:3]}")
    return VideoVolume._wrap(vol.data[t0:t0 + dt, y0:y0 + dy, x0:x0 + dx].copy())


# ---------------------------------------------------------------- frame dirs

def _list_frames(path):
    path = Path(path)
    if not path.is_dir():
        raise VolumeError(f"frame directory not found: {path}")
    names = sorted(p.name for p in path.iterdir()
                   if p.is_file() and p.suffix.lower() in FRAME_SUFFIXES)
    if not names:
        raise VolumeError(f"no image frames in {path}")
    return [path / n for n in names]


def load_frame_dir(path) -> VideoVolume:
    """Load lossless 8-bit frames; lexicographic filename order is time order."""
    from PIL import Image, UnidentifiedImageError

    frames = []
    shape = None
    for f in _list_frames(path):
        try:
            with Image.open(f) as im:
                if im.mode not in ("L", "RGB"):
                    im = im.convert("RGB" if im.mode in ("RGBA", "P", "CMYK") else "L")
                arr = np.asarray(im, dtype=np.uint8)
        except (OSError, UnidentifiedImageError) as exc:
            raise VolumeError(f"unreadable frame {f.name}: {exc}") from exc
        if arr.ndim == 2:
            arr = arr[..., None]
        if shape is None:
            shape = arr.shape
        elif arr.shape != shape:
            raise VolumeError(f"frame {f.name} has shape {arr.shape}, expected {shape}")
        frames.append(arr)
    data = np.stack(frames).astype(np.float32) / np.float32(255.0)
    return VideoVolume._wrap(data)


def quantize8(data) -> np.ndarray:
    """Clamp to [0, 1] and round half up to 8 bits."""
    v = np.clip(np.asarray(data, dtype=np.float64), 0.0, 1.0)
    return np.floor(v * 255.0 + 0.5).astype(np.uint8)


def save_frame_dir(vol: VideoVolume, path) -> None:
    from PIL import Image

    path = Path(path)
    try:
        path.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise VolumeError(f"cannot create {path}: {exc}") from exc
    q = quantize8(vol.data)
    width = max(5, len(str(vol.T - 1)))
    for t in range(vol.T):
        frame = q[t, :, :, 0] if vol.C == 1 else q[t]
        try:
            Image.fromarray(frame).save(path / f"frame_{t:0{width}d}.png")
        except OSError as exc:
            raise VolumeError(f"cannot write frame {t} to {path}: {exc}") from exc


# ---------------------------------------------------------------- .stv files

def write_volume(vol: VideoVolume, path) -> None:
    header = _STV_HEADER.pack(STV_MAGIC, vol.T, vol.Y, vol.X, vol.C, 0)
    payload = vol.data.astype("<f4", copy=False).tobytes()
    try:
        with open(path, "wb") as fh:
            fh.write(header)
            fh.write(payload)
    except OSError as exc:
        raise VolumeError(f"cannot write {path}: {exc}") from exc


def read_volume(path) -> VideoVolume:
    try:
        with open(path, "rb") as fh:
            raw = fh.read()
    except OSError as exc:
        raise VolumeError(f"cannot read {path}: {exc}") from exc
    if len(raw) < _STV_HEADER.size:
        raise VolumeError(f"{path}: truncated header")
    magic, t, y, x, c, _reserved = _STV_HEADER.unpack_from(raw)
    if magic != STV_MAGIC:
        raise VolumeError(f"{path}: bad magic {magic!r}")
    n = t * y * x * c
    if min(t, y, x) < 1 or c not in (1, 3) or n * 4 > 2 ** 40:
        raise VolumeError(f"{path}: invalid dimensions {(t, y, x, c)}")
    need = _STV_HEADER.size + 4 * n
    if len(raw) < need:
        raise VolumeError(f"{path}: truncated payload ({len(raw)} < {need} bytes)")
    data = np.frombuffer(raw, dtype="<f4", count=n, offset=_STV_HEADER.size)
    return VideoVolume(data.astype(np.float32).reshape(t, y, x, c))


def load_any(path) -> VideoVolume:
    """Load a ``.stv`` file or a frame directory."""
    p = Path(path)
    if p.is_dir():
        return load_frame_dir(p)
    if not p.exists():
        raise VolumeError(f"input not found: {p}")
    return read_volume(p)


def save_any(vol: VideoVolume, path) -> None:
    """Write ``.stv`` when the path ends in .stv, otherwise a frame directory."""
    if os.fspath(path).lower().endswith(".stv"):
        write_volume(vol, path)
    else:
        save_frame_dir(vol, path)
