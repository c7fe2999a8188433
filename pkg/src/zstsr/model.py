"""The video-specific TSRx2 network.

Eight stride-1 3D conv layers with replicate padding: layers 1-4 use 3x3x3
kernels, layers 5-8 use 1x3x3. Layers 1-7 have ``width`` output channels and a
ReLU; layer 8 projects back to the video's channel count and has no
activation. The network predicts the residual between the cubic temporal
interpolation of the LTR input and the HTR target.

Activations are held channel-first, (C, T, Y, X). Gradients are derived by
hand; reductions run in a fixed order (kernel taps in (kt, ky, kx) row-major
order, layers last to first), so forward/backward are reproducible.
"""
from __future__ import annotations

import json
import struct
from dataclasses import asdict, dataclass

import numpy as np

from . import kernels
from .resample import temporal_cubic_upsample
from .volume import VideoVolume

N_LAYERS = 8
DEFAULT_WIDTH = 128
FULL_KERNEL = (3, 3, 3)
FLAT_KERNEL = (1, 3, 3)
CKPT_MAGIC = b"TSRC"


class ModelError(ValueError):
    pass


@dataclass(frozen=True)
class ConvLayerSpec:
    in_channels: int
    out_channels: int
    kernel: tuple
    has_relu: bool

    @property
    def pads(self):
        return tuple(k // 2 for k in self.kernel)

    @property
    def fan_in(self):
        return self.in_channels * int(np.prod(self.kernel))

    @property
    def fan_out(self):
        return self.out_channels * int(np.prod(self.kernel))


def architecture(channels: int = 3, width: int = DEFAULT_WIDTH, n_layers: int = N_LAYERS,
                 kernels_per_layer=None):
    """Layer specs; the defaults give the 8-layer TSR network."""
    if kernels_per_layer is None:
        kernels_per_layer = [FULL_KERNEL] * (n_layers // 2) + [FLAT_KERNEL] * (n_layers - n_layers // 2)
    specs = []
    cin = channels
    for i, k in enumerate(kernels_per_layer):
        last = i == len(kernels_per_layer) - 1
        cout = channels if last else width
        specs.append(ConvLayerSpec(cin, cout, tuple(k), not last))
        cin = cout
    return specs


def receptive_field(specs):
    """Input extent (t, y, x) that influences one output sample."""
    return tuple(1 + sum(s.kernel[a] - 1 for s in specs) for a in range(3))


RECEPTIVE_FIELD = receptive_field(architecture())  # (9, 17, 17)


class TsrNet:
    """Parameters of the network. Mutated only by the optimizer, which bumps
    ``version`` so stale forward tapes are detected."""

    def __init__(self, specs, weights, biases, seed=0, iteration=0):
        if len(specs) != len(weights) or len(specs) != len(biases):
            raise ModelError("specs, weights and biases must align")
        for s, w, b in zip(specs, weights, biases):
            if w.shape != (s.out_channels, s.in_channels) + tuple(s.kernel) or b.shape != (s.out_channels,):
                raise ModelError(f"parameter shape mismatch for layer {s}")
        self.specs = list(specs)
        self.weights = [np.ascontiguousarray(w, dtype=np.float32) for w in weights]
        self.biases = [np.ascontiguousarray(b, dtype=np.float32) for b in biases]
        self.seed = seed
        self.iteration = iteration
        self.version = 0

    @property
    def channels(self):
        return self.specs[0].in_channels

    @property
    def width(self):
        return self.specs[0].out_channels

    def params(self):
        """Flat parameter list: w1, b1, w2, b2, ..."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    def copy(self):
        return TsrNet(self.specs, [w.copy() for w in self.weights],
                      [b.copy() for b in self.biases], self.seed, self.iteration)

    def all_finite(self):
        return all(np.all(np.isfinite(p)) for p in self.params())


def init(net_seed: int = 0, channels: int = 3, width: int = DEFAULT_WIDTH, specs=None) -> TsrNet:
    """Glorot-uniform weights, zero biases."""
    specs = specs or architecture(channels, width)
    rng = np.random.default_rng(net_seed)
    weights, biases = [], []
    for s in specs:
        bound = np.sqrt(6.0 / (s.fan_in + s.fan_out))
        shape = (s.out_channels, s.in_channels) + tuple(s.kernel)
        weights.append(rng.uniform(-bound, bound, size=shape).astype(np.float32))
        biases.append(np.zeros(s.out_channels, dtype=np.float32))
    return TsrNet(specs, weights, biases, seed=net_seed)


class ForwardTape:
    __slots__ = ("padded_inputs", "pre_activations", "version", "net_id", "shape")

    def __init__(self, net, shape):
        self.padded_inputs = []
        self.pre_activations = []
        self.version = net.version
        self.net_id = id(net)
        self.shape = shape


def _to_cf(data):
    return np.ascontiguousarray(np.moveaxis(np.asarray(data, dtype=np.float32), 3, 0))


def _from_cf(arr):
    return np.ascontiguousarray(np.moveaxis(arr, 0, 3))


def _check_input(net, shape):
    t, y, x, c = shape
    if c != net.channels:
        raise ModelError(f"network expects {net.channels} channels, input has {c}")
    kt = max(s.kernel[0] for s in net.specs)
    if t < kt or y < 3 or x < 3:
        raise ModelError(f"input {shape[:3]} smaller than kernel support ({kt}, 3, 3)")


def forward_array(net: TsrNet, x, keep_tape=True):
    """Forward on a (T, Y, X, C) array; returns (residual array, tape or None)."""
    x = np.asarray(x, dtype=np.float32)
    _check_input(net, x.shape)
    tape = ForwardTape(net, x.shape) if keep_tape else None
    a = _to_cf(x)
    for spec, w, b in zip(net.specs, net.weights, net.biases):
        apad = kernels.pad_replicate(a, spec.pads)
        z = kernels.conv3d_forward(apad, w, b)
        if keep_tape:
            tape.padded_inputs.append(apad)
            tape.pre_activations.append(z)
        a = np.maximum(z, 0) if spec.has_relu else z
    return _from_cf(a), tape


def forward(net: TsrNet, ltr_interp: VideoVolume):
    """Residual for a temporally interpolated input, plus the tape for backward."""
    res, tape = forward_array(net, ltr_interp.data)
    return VideoVolume._wrap(res), tape


def backward(net: TsrNet, tape: ForwardTape, d_loss_d_pred):
    """Parameter gradients (same order as ``net.params()``).

    The prediction is interp + residual, so d(pred)/d(residual) is the identity
    and the incoming gradient feeds the last layer directly.
    """
    if tape is None or tape.net_id != id(net) or tape.version != net.version:
        raise ModelError("forward tape does not match the current network parameters")
    g = d_loss_d_pred.data if isinstance(d_loss_d_pred, VideoVolume) else d_loss_d_pred
    g = np.asarray(g, dtype=np.float32)
    if g.shape != tape.shape:
        raise ModelError(f"gradient shape {g.shape} does not match tape {tape.shape}")
    g = _to_cf(g)
    grads = [None] * (2 * len(net.specs))
    for i in range(len(net.specs) - 1, -1, -1):
        spec = net.specs[i]
        if spec.has_relu:
            g = g * (tape.pre_activations[i] > 0)
        dw, db, dxpad = kernels.conv3d_backward(tape.padded_inputs[i], net.weights[i], g,
                                                need_dx=i > 0)
        grads[2 * i] = dw
        grads[2 * i + 1] = db
        if i > 0:
            g = kernels.unpad_replicate_adjoint(dxpad, spec.pads)
    return grads


def l2_loss(pred, target):
    """Mean squared error and its gradient 2(pred - target)/N."""
    p = pred.data if isinstance(pred, VideoVolume) else np.asarray(pred)
    t = target.data if isinstance(target, VideoVolume) else np.asarray(target)
    if p.shape != t.shape:
        raise ModelError(f"dimension mismatch: {p.shape} vs {t.shape}")
    diff = p.astype(np.float64) - t.astype(np.float64)
    loss = float(np.mean(diff * diff))
    grad = (2.0 / diff.size) * diff
    return loss, grad.astype(np.float32)


def _tiles(n, tile, halo):
    for start in range(0, n, tile):
        stop = min(n, start + tile)
        yield start, stop, max(0, start - halo), min(n, stop + halo)


def residual_tiled(net: TsrNet, x, tile=(32, 64, 64)):
    """Residual of the whole (T, Y, X, C) array, processed in tiles.

    Each tile carries a halo of the receptive-field radius, so interior
    results equal the untiled forward up to float rounding.
    """
    x = np.asarray(x, dtype=np.float32)
    halo = tuple((r - 1) // 2 for r in receptive_field(net.specs))
    out = np.empty(x.shape, dtype=np.float32)
    kt = max(s.kernel[0] for s in net.specs)
    T, Y, X = x.shape[:3]
    for t0, t1, ta, tb in _tiles(T, tile[0], halo[0]):
        if tb - ta < kt:  # tiny trailing tile: widen into the volume
            ta = max(0, tb - kt)
        for y0, y1, ya, yb in _tiles(Y, tile[1], halo[1]):
            ya = min(ya, max(0, yb - 3))
            for x0, x1, xa, xb in _tiles(X, tile[2], halo[2]):
                xa = min(xa, max(0, xb - 3))
                res, _ = forward_array(net, x[ta:tb, ya:yb, xa:xb], keep_tape=False)
                out[t0:t1, y0:y1, x0:x1] = res[t0 - ta:t1 - ta, y0 - ya:y1 - ya, x0 - xa:x1 - xa]
    return out


def upsample(net: TsrNet, ltr: VideoVolume, factor: int = 2, tile=(32, 64, 64)) -> VideoVolume:
    """TSRx2: cubic temporal interpolation plus the learned residual."""
    if factor != 2:
        raise ModelError("the network upsamples by exactly 2 in time")
    interp = temporal_cubic_upsample(ltr, 2)
    return VideoVolume._wrap(interp.data + residual_tiled(net, interp.data, tile))


def predict(net: TsrNet, ltr_interp: VideoVolume) -> VideoVolume:
    res, _ = forward_array(net, ltr_interp.data, keep_tape=False)
    return VideoVolume._wrap(ltr_interp.data + res)


# ---------------------------------------------------------------- checkpoints

def save_checkpoint(net: TsrNet, path, extra=None) -> None:
    """JSON header then float32 LE payload: w1, b1, ..., w8, b8."""
    header = {
        "format": "zstsr-checkpoint-1",
        "layers": [dict(asdict(s), kernel=list(s.kernel)) for s in net.specs],
        "seed": net.seed,
        "iteration": net.iteration,
    }
    if extra:
        header.update(extra)
    hbytes = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(CKPT_MAGIC)
        fh.write(struct.pack("<I", len(hbytes)))
        fh.write(hbytes)
        for p in net.params():
            fh.write(p.astype("<f4", copy=False).tobytes())


def load_checkpoint(path) -> TsrNet:
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:4] != CKPT_MAGIC or len(raw) < 8:
        raise ModelError(f"{path}: not a checkpoint")
    (hlen,) = struct.unpack_from("<I", raw, 4)
    try:
        header = json.loads(raw[8:8 + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ModelError(f"{path}: corrupt header") from exc
    specs = [ConvLayerSpec(l["in_channels"], l["out_channels"], tuple(l["kernel"]), l["has_relu"])
             for l in header["layers"]]
    pos = 8 + hlen
    weights, biases = [], []
    for s in specs:
        for shape, dest in (((s.out_channels, s.in_channels) + s.kernel, weights),
                            ((s.out_channels,), biases)):
            n = int(np.prod(shape))
            if pos + 4 * n > len(raw):
                raise ModelError(f"{path}: truncated payload")
            dest.append(np.frombuffer(raw, "<f4", n, pos).astype(np.float32).reshape(shape))
            pos += 4 * n
    if pos != len(raw):
        raise ModelError(f"{path}: trailing bytes in checkpoint")
    return TsrNet(specs, weights, biases, header.get("seed", 0), header.get("iteration", 0))
