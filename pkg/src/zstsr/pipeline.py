"""End-to-end drivers: benchmark degradation and coarse-to-fine TSR x8."""
from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

from . import metrics
from .backprojection import (BackProjectionConfig, spatial_backproject,
                             temporal_backproject)
from .dataset import (DEFAULT_AUGMENTATIONS, DEFAULT_SPATIAL_SCALES, DEFAULT_TEMPORAL_FACTORS,
                      ORIENTATIONS, build_pyramid)
from .model import DEFAULT_WIDTH, TsrNet, init, upsample
from .optim import TrainConfig, TrainResult, train
from .resample import as_fraction, output_size, resize_spatial, temporal_rect_downsample
from .volume import VideoVolume, VolumeError, write_volume

log = logging.getLogger(__name__)

STAGE_GRAPH = (
    "refs[s] = bicubic(input, s) for s = start, 2*start, ..., 1; cur = refs[start]. "
    "Per stage: cur = net_x2(cur); temporal BP of cur against refs[s] at the accumulated factor; "
    "if s < 1: high = bicubic x2 of cur, spatial BP against cur, temporal BP against refs[2s], "
    "final spatial BP against cur; s = 2s. "
    "Finally temporal BP against the input at the target factor."
)


class PipelineError(RuntimeError):
    def __init__(self, message, records=None):
        super().__init__(message)
        self.records = records or []


@dataclass
class PyramidConfig:
    spatial_scales: tuple = DEFAULT_SPATIAL_SCALES
    temporal_factors: tuple = DEFAULT_TEMPORAL_FACTORS
    orientations: tuple = tuple(ORIENTATIONS)
    # list of augmentation tuples, or an int: that many drawn besides identity
    augmentations: object = DEFAULT_AUGMENTATIONS
    seed: int = 0

    def __post_init__(self):
        self.spatial_scales = tuple(float(s) for s in self.spatial_scales)
        self.temporal_factors = tuple(int(f) for f in self.temporal_factors)
        self.orientations = tuple(self.orientations)
        if not isinstance(self.augmentations, int):
            self.augmentations = tuple(tuple(a) for a in self.augmentations)
        if not self.spatial_scales or any(not 0 < s <= 1 for s in self.spatial_scales):
            raise VolumeError("pyramid spatial scales must lie in (0, 1]")
        for o in self.orientations:
            if o not in ORIENTATIONS:
                raise VolumeError(f"unknown orientation {o!r}")


def _default_spatial_bp():
    return BackProjectionConfig(mode="spatial")


def _default_temporal_bp():
    return BackProjectionConfig(mode="temporal")


@dataclass
class PipelineConfig:
    start_spatial_scale: object = "1/8"
    target_factor: int = 8
    width: int = DEFAULT_WIDTH
    seed: int = 0
    tile: tuple = (32, 64, 64)
    fine_tune_iterations: int = 0  # > 0 retrains briefly on each stage's input
    intermediates_dir: str | None = None
    spatial_bp: BackProjectionConfig = field(default_factory=_default_spatial_bp)
    temporal_bp: BackProjectionConfig = field(default_factory=_default_temporal_bp)
    pyramid: PyramidConfig = field(default_factory=PyramidConfig)
    train: TrainConfig = field(default_factory=TrainConfig)

    def __post_init__(self):
        start = as_fraction(self.start_spatial_scale)
        self.start_spatial_scale = str(start)
        t = int(self.target_factor)
        if t < 2 or t & (t - 1):
            raise VolumeError(f"target factor {t} is not a power of 2 >= 2")
        self.target_factor = t
        if not 0 < start <= 1 or start.numerator != 1 or start.denominator & (start.denominator - 1):
            raise VolumeError(f"start scale {start} must be 1/2^k")
        if start * 2 ** (self.stages - 1) > 1:
            raise VolumeError(f"start scale {start} leaves stages beyond full resolution")
        if self.spatial_bp.mode != "spatial" or self.temporal_bp.mode != "temporal":
            raise VolumeError("spatial_bp / temporal_bp modes are swapped")
        self.tile = tuple(int(v) for v in self.tile)
        if self.width < 1 or self.fine_tune_iterations < 0:
            raise VolumeError("width must be >= 1 and fine_tune_iterations >= 0")

    @property
    def stages(self):
        return int(round(math.log2(self.target_factor)))

    @property
    def start(self) -> Fraction:
        return Fraction(self.start_spatial_scale)


@dataclass
class StageRecord:
    stage: int
    spatial_scale: str
    temporal_factor: int
    volumes: dict = field(default_factory=dict)
    residuals: dict = field(default_factory=dict)
    wall_time: float = 0.0
    status: str = "ok"

    def to_dict(self):
        return {"stage": self.stage, "spatial_scale": self.spatial_scale,
                "temporal_factor": self.temporal_factor, "volumes": dict(self.volumes),
                "residuals": {k: list(v) for k, v in self.residuals.items()},
                "wall_time": self.wall_time, "status": self.status}


@dataclass
class PipelineResult:
    output: VideoVolume
    records: list
    net: TsrNet
    training: TrainResult


def degrade(htr: VideoVolume, s: int = 8) -> VideoVolume:
    """Benchmark LTR: average every ``s`` frames (full exposure) and subsample."""
    if int(s) != s or s < 2:
        raise VolumeError(f"degradation factor must be an integer >= 2, got {s}")
    return temporal_rect_downsample(htr, int(s))


def spatial_refs(video: VideoVolume, start: Fraction):
    refs, s = {}, start
    while s <= 1:
        if output_size(video.Y, s) < 1 or output_size(video.X, s) < 1:
            raise VolumeError(f"input {video.shape[1:3]} vanishes at spatial scale {s}")
        refs[s] = video if s == 1 else resize_spatial(
            video, output_size(video.Y, s), output_size(video.X, s))
        s *= 2
    return refs


def train_on(video: VideoVolume, cfg: PipelineConfig, net: TsrNet | None = None,
             train_cfg: TrainConfig | None = None, progress=None) -> TrainResult:
    """Train (or continue training) a TSRx2 net on ``video``'s own pyramid."""
    tc = train_cfg or cfg.train
    p = cfg.pyramid
    levels = build_pyramid(video, p.spatial_scales, p.temporal_factors, p.orientations,
                           p.augmentations, p.seed, tc.sampler.crop)
    if net is None:
        net = init(cfg.seed, video.C, cfg.width)
    return train(net, levels, tc, progress)


def _persist(rec, name, vol, cfg):
    if cfg.intermediates_dir:
        d = Path(cfg.intermediates_dir)
        d.mkdir(parents=True, exist_ok=True)
        path = d / f"stage{rec.stage}_{name}.stv"
        write_volume(vol, path)
        rec.volumes[name] = str(path)


def run_tsr(input_ltr: VideoVolume, cfg: PipelineConfig | None = None, progress=None,
            net: TsrNet | None = None) -> PipelineResult:
    """Coarse-to-fine temporal super-resolution by ``cfg.target_factor``.

    A single net is trained on the input downscaled to the start scale and then
    reused at every stage. Pass ``net`` to skip training. Raises PipelineError
    (carrying the stage records so far) on training or back-projection failure.
    """
    cfg = cfg or PipelineConfig()
    records = []
    refs = spatial_refs(input_ltr, cfg.start)
    scale = cfg.start
    cur = refs[scale]
    t0 = time.perf_counter()
    rec = StageRecord(0, str(scale), 1)
    try:
        if net is None:
            training = train_on(cur, cfg, progress=progress)
            net = training.net
        else:
            training = TrainResult(net, [], [], [], "pretrained")
    except (RuntimeError, VolumeError) as exc:
        rec.status = f"failed: {exc}"
        records.append(rec)
        raise PipelineError(f"training failed: {exc}", records) from exc
    rec.residuals["training_loss"] = training.losses[-1:] if training.losses else []
    rec.wall_time = time.perf_counter() - t0
    records.append(rec)

    factor = 1
    sbp, tbp = cfg.spatial_bp, cfg.temporal_bp
    for stage in range(1, cfg.stages + 1):
        t0 = time.perf_counter()
        rec = StageRecord(stage, str(scale), factor * 2)
        records.append(rec)
        try:
            if cfg.fine_tune_iterations and stage > 1:
                ft = TrainConfig(cfg.fine_tune_iterations, cfg.train.schedule, cfg.train.sampler,
                                 cfg.train.seed + stage)
                try:
                    train_on(cur, cfg, net, ft)
                except VolumeError as exc:  # stage input too small for a pyramid
                    log.info("stage %d: fine-tuning skipped (%s)", stage, exc)
            cur = upsample(net, cur, 2, cfg.tile)
            factor *= 2
            _persist(rec, "net", cur, cfg)
            hist = rec.residuals.setdefault("temporal_after_net", [])
            cur = temporal_backproject(cur, refs[scale], factor, tbp, hist)
            if scale < 1:
                low = cur
                scale *= 2
                ref = refs[scale]
                high = resize_spatial(low, ref.Y, ref.X)
                high = spatial_backproject(high, low, None, sbp,
                                           rec.residuals.setdefault("spatial", []))
                high = temporal_backproject(high, ref, factor, tbp,
                                            rec.residuals.setdefault("temporal", []))
                cur = spatial_backproject(high, low, None, sbp,
                                          rec.residuals.setdefault("spatial_final", []))
                rec.spatial_scale = str(scale)
            _persist(rec, "out", cur, cfg)
        except (RuntimeError, VolumeError) as exc:
            rec.status = f"failed: {exc}"
            raise PipelineError(f"stage {stage} failed: {exc}", records) from exc
        finally:
            rec.wall_time = time.perf_counter() - t0
        log.info("stage %d done: scale %s, x%d, %.1fs", stage, scale, factor, rec.wall_time)

    rec = StageRecord(cfg.stages + 1, str(scale), factor)
    try:
        cur = temporal_backproject(cur, input_ltr, factor, tbp,
                                   rec.residuals.setdefault("temporal", []))
    except (RuntimeError, VolumeError) as exc:
        rec.status = f"failed: {exc}"
        records.append(rec)
        raise PipelineError(f"final back-projection failed: {exc}", records) from exc
    records.append(rec)
    return PipelineResult(cur, records, net, training)


def pipeline_report(result: PipelineResult, cfg: PipelineConfig):
    from .config import to_dict

    return {"stage_graph": STAGE_GRAPH, "config": to_dict(cfg),
            "output_shape": list(result.output.shape),
            "training": {"iterations": len(result.training.losses),
                         "stop_reason": result.training.stop_reason,
                         "lr_drops": [list(d) for d in result.training.drops]},
            "stages": [r.to_dict() for r in result.records]}


def evaluate(pred: VideoVolume, gt: VideoVolume, report_path=None) -> metrics.MetricsReport:
    rep = metrics.evaluate(pred, gt)
    if report_path:
        Path(report_path).write_text(rep.to_json(indent=2))
    return rep
