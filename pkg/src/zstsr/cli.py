"""Command-line entry point: ``zstsr <subcommand> ...``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .analysis import PatchSearchConfig, heatmap_volume, patch_nn_heatmap, render_heatmap
from .backprojection import BackProjectionError
from .config import ConfigError, load_config, to_dict
from .dataset import PairSampler, build_pyramid
from .model import ModelError, load_checkpoint, upsample
from .optim import TrainingError
from .pipeline import PipelineError, degrade, evaluate, pipeline_report, run_tsr, train_on
from .resample import as_fraction, spatial_scale_bicubic
from .volume import VolumeError, load_any, save_any, write_volume

EXIT_OK, EXIT_BAD_INPUT, EXIT_FAILED = 0, 2, 3

log = logging.getLogger("zstsr")


def _cmd_degrade(a):
    save_any(degrade(load_any(a.inp), a.factor), a.out)


def _cmd_train(a):
    cfg = load_config(a.config, a.seed)
    video = load_any(a.inp)
    if a.scale != "1":
        video = spatial_scale_bicubic(video, as_fraction(a.scale))
    cfg.train.checkpoint = a.out_checkpoint
    if a.loss_log:
        cfg.train.loss_log = a.loss_log
    res = train_on(video, cfg, progress=_progress(a))
    log.info("trained %d iterations (%s), final loss %.3g", len(res.losses), res.stop_reason,
             res.losses[-1] if res.losses else float("nan"))


def _cmd_upsample(a):
    net = load_checkpoint(a.checkpoint)
    vol = load_any(a.inp)
    f = a.factor
    if f < 2 or f & (f - 1):
        raise VolumeError(f"--factor must be a power of 2, got {f}")
    while f > 1:  # repeated x2 steps, as in the coarse-to-fine scheme
        vol = upsample(net, vol, 2)
        f //= 2
    save_any(vol, a.out)


def _cmd_pipeline(a):
    cfg = load_config(a.config, a.seed)
    video = load_any(a.inp)
    try:
        result = run_tsr(video, cfg, progress=_progress(a))
    except PipelineError as exc:
        if a.report:
            Path(a.report).write_text(json.dumps(
                {"error": str(exc), "config": to_dict(cfg),
                 "stages": [r.to_dict() for r in exc.records]}, indent=2))
        raise
    save_any(result.output, a.out)
    if a.report:
        Path(a.report).write_text(json.dumps(pipeline_report(result, cfg), indent=2))


def _cmd_evaluate(a):
    rep = evaluate(load_any(a.pred), load_any(a.gt), a.report)
    print(f"PSNR {rep.to_dict()['psnr_db']} dB, SSIM {rep.ssim:.4f}")


def _cmd_analyze(a):
    cfg = PatchSearchConfig(stride=a.stride, k=a.k, exclusion_radius=a.exclusion_radius,
                            slice_t=a.slice_t)
    hm = patch_nn_heatmap(load_any(a.inp), cfg)
    out = Path(a.out_heatmap)
    out.mkdir(parents=True, exist_ok=True)
    render_heatmap(hm, out / "heatmap.png")
    write_volume(heatmap_volume(hm), out / "heatmap.stv")
    print(f"mean across-dimension fraction {float(np.mean(hm.values)):.3f}")


def _cmd_make_pairs(a):
    cfg = load_config(a.config, a.seed)
    p = cfg.pyramid
    levels = build_pyramid(load_any(a.inp), p.spatial_scales, p.temporal_factors,
                           p.orientations, p.augmentations, p.seed, cfg.train.sampler.crop)
    sampler = PairSampler(levels, cfg.train.sampler, np.random.default_rng(cfg.train.seed))
    out = Path(a.out)
    out.mkdir(parents=True, exist_ok=True)
    manifest = []
    for i in range(a.n):
        pair = sampler.draw()
        write_volume(pair.ltr, out / f"pair{i:05d}_ltr.stv")
        write_volume(pair.htr, out / f"pair{i:05d}_htr.stv")
        manifest.append(dict(pair.provenance, ltr=f"pair{i:05d}_ltr.stv",
                             htr=f"pair{i:05d}_htr.stv"))
    (out / "manifest.json").write_text(json.dumps({"pairs": manifest}, indent=2))


def _progress(a):
    if not a.verbose:
        return None

    def report(it, loss, lr):
        if it % 100 == 0:
            log.info("iteration %d loss %.4g lr %.1e", it, loss, lr)
    return report


def build_parser():
    ap = argparse.ArgumentParser(prog="zstsr", description="Zero-shot temporal super-resolution")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("degrade", help="rect-average every N frames")
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--factor", type=int, default=8)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_degrade)

    p = sub.add_parser("train", help="train a TSRx2 net on the input's own pyramid")
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--config")
    p.add_argument("--out-checkpoint", required=True)
    p.add_argument("--scale", default="1", help="spatial scale to train at, e.g. 1/8")
    p.add_argument("--loss-log")
    p.add_argument("--seed", type=int)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("upsample", help="apply a trained net")
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--factor", type=int, default=2)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_upsample)

    p = sub.add_parser("pipeline", help="full coarse-to-fine TSR")
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--config")
    p.add_argument("--out", required=True)
    p.add_argument("--report")
    p.add_argument("--seed", type=int)
    p.set_defaults(func=_cmd_pipeline)

    p = sub.add_parser("evaluate", help="PSNR / SSIM against ground truth")
    p.add_argument("--pred", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--report")
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("analyze", help="within vs across-dimension patch recurrence heat map")
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--out-heatmap", required=True)
    p.add_argument("--stride", type=int, default=2)
    p.add_argument("--k", type=int, default=10)
    p.add_argument("--exclusion-radius", type=int, default=2)
    p.add_argument("--slice-t", type=int)
    p.set_defaults(func=_cmd_analyze)

    p = sub.add_parser("make-pairs", help="dump sampled training pairs")
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--config")
    p.add_argument("--seed", type=int)
    p.set_defaults(func=_cmd_make_pairs)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except (TrainingError, BackProjectionError, PipelineError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILED
    except (VolumeError, ConfigError, ModelError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BAD_INPUT
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
