"""Compare the compiled kernels with the numpy fallback.

    python benchmarks/bench_kernels.py [--repeat N]

Prints the best-of-N wall time per operation and backend, and the speed-up.
"""
import argparse
import timeit

import numpy as np

from zstsr import kernels
from zstsr.analysis import PatchSearchConfig, patch_nn_heatmap
from zstsr.model import backward, forward_array, init, l2_loss
from zstsr.resample import spatial_scale_bicubic
from zstsr.volume import VideoVolume


def cases():
    rng = np.random.default_rng(0)
    net = init(0, 1, 32)
    crop = rng.random((16, 32, 32, 1), dtype=np.float32)
    target = rng.random(crop.shape, dtype=np.float32)
    frames = VideoVolume(rng.random((16, 64, 64, 3), dtype=np.float32))
    scene = VideoVolume(rng.random((8, 24, 24, 1), dtype=np.float32))

    def train_step():
        res, tape = forward_array(net, crop)
        _, grad = l2_loss(crop + res, target)
        backward(net, tape, grad)

    return {
        "net forward 16x32x32, width 32": lambda: forward_array(net, crop, keep_tape=False),
        "net forward+backward": train_step,
        "bicubic x0.5, 16 frames 64x64x3": lambda: spatial_scale_bicubic(frames, 0.5),
        "patch search 8x24x24": lambda: patch_nn_heatmap(scene, PatchSearchConfig(stride=4)),
    }


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    backends = kernels.available_backends()
    results = {}
    for name in backends:
        prev = kernels.use(name)
        try:
            for label, fn in cases().items():
                fn()  # warm up
                results[label, name] = min(timeit.repeat(fn, number=1, repeat=args.repeat))
        finally:
            kernels.use(prev)
    print(f"{'operation':36s}" + "".join(f"{b:>12s}" for b in backends) + "     speed-up")
    for label in cases():
        row = "".join(f"{results[label, b] * 1e3:10.1f}ms" for b in backends)
        speed = ""
        if len(backends) > 1:
            speed = f"{results[label, 'python'] / results[label, 'cython']:10.1f}x"
        print(f"{label:36s}{row}{speed}")


if __name__ == "__main__":
    main()
