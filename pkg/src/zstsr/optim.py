"""ADAM with a plateau-driven learning-rate schedule, and the training loop."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dataset import PairSampler, SamplerConfig
from .model import TsrNet, backward, forward_array, l2_loss, save_checkpoint
from .resample import temporal_cubic_upsample

log = logging.getLogger(__name__)


class TrainingError(RuntimeError):
    pass


@dataclass
class AdamState:
    m: list
    v: list
    lr: float = 1e-4
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_params(cls, params, lr=1e-4):
        return cls([np.zeros_like(p) for p in params], [np.zeros_like(p) for p in params], lr)


def adam_step(params, grads, state: AdamState):
    """One bias-corrected ADAM update, applied to ``params`` in place."""
    if len(params) != len(grads) or len(params) != len(state.m):
        raise TrainingError("parameter / gradient / moment counts differ")
    for p, g in zip(params, grads):
        if p.shape != g.shape:
            raise TrainingError(f"gradient shape {g.shape} != parameter shape {p.shape}")
        if not np.all(np.isfinite(g)):
            raise TrainingError("non-finite gradient")
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.step
    c2 = 1.0 - b2 ** state.step
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        m_hat = m / c1
        v_hat = v / c2
        p -= (state.lr * m_hat / (np.sqrt(v_hat) + state.eps)).astype(p.dtype)
    return params, state


@dataclass
class LrSchedule:
    initial_lr: float = 1e-4
    floor: float = 1e-6
    period: int = 100  # iterations between plateau checks
    window: int = 1000  # recent losses fitted at each check
    drop_factor: float = 10.0

    def __post_init__(self):
        if not 0 < self.floor <= self.initial_lr:
            raise TrainingError("need 0 < floor <= initial_lr")
        if self.period < 1 or self.window < 2 or self.drop_factor <= 1:
            raise TrainingError("bad schedule constants")


def is_plateau(history, window) -> bool:
    """Least-squares line through the last ``window`` losses: plateau when the
    total predicted change |slope| * window is below the residual std."""
    y = np.asarray(history[-window:], dtype=np.float64)
    x = np.arange(len(y), dtype=np.float64)
    slope, intercept = np.polyfit(x, y, 1)
    sigma = np.std(y - (slope * x + intercept))
    return abs(slope) * len(y) < sigma


def schedule_check(history, schedule: LrSchedule, lr: float) -> float:
    """Return the (possibly reduced) learning rate; never below the floor."""
    if len(history) < schedule.window:
        return lr
    if is_plateau(history, schedule.window):
        return max(lr / schedule.drop_factor, schedule.floor)
    return lr


@dataclass
class TrainConfig:
    max_iterations: int = 20000
    schedule: LrSchedule = field(default_factory=LrSchedule)
    sampler: SamplerConfig = field(default_factory=SamplerConfig)
    seed: int = 0
    loss_log: str | None = None
    checkpoint: str | None = None

    def __post_init__(self):
        if self.max_iterations < 0:
            raise TrainingError("max_iterations must be >= 0")


@dataclass
class TrainResult:
    net: TsrNet
    losses: list
    lrs: list
    drops: list  # (iteration, new lr)
    stop_reason: str


def train_step(net: TsrNet, pair, state: AdamState) -> float:
    interp = temporal_cubic_upsample(pair.ltr, 2)
    res, tape = forward_array(net, interp.data)
    loss, grad = l2_loss(interp.data + res, pair.htr.data)
    if not np.isfinite(loss):
        raise TrainingError(f"non-finite loss on pair {pair.provenance}")
    grads = backward(net, tape, grad)
    try:
        adam_step(net.params(), grads, state)
    except TrainingError as exc:
        raise TrainingError(f"{exc} on pair {pair.provenance}") from exc
    net.version += 1
    net.iteration += 1
    return loss


def train(net: TsrNet, levels, cfg: TrainConfig, progress=None) -> TrainResult:
    """Train ``net`` in place on pairs sampled from ``levels``.

    Stops after ``max_iterations`` or when a plateau drop takes the learning
    rate down to the floor. The loss log gets one ``iteration,loss,lr`` line
    per step.
    """
    sched = cfg.schedule
    state = AdamState.for_params(net.params(), sched.initial_lr)
    sampler = PairSampler(levels, cfg.sampler, np.random.default_rng(cfg.seed))
    losses, lrs, drops = [], [], []
    last_drop = 0
    stop_reason = "max_iterations"
    log_fh = None
    if cfg.loss_log:
        Path(cfg.loss_log).parent.mkdir(parents=True, exist_ok=True)
        log_fh = open(cfg.loss_log, "w")
        log_fh.write("iteration,loss,lr\n")
    try:
        for it in range(cfg.max_iterations):
            lr_used = state.lr
            loss = train_step(net, sampler.draw(), state)
            losses.append(loss)
            lrs.append(lr_used)
            if log_fh:
                log_fh.write(f"{it},{loss!r},{lr_used!r}\n")
            if progress:
                progress(it, loss, lr_used)
            done = it + 1
            if done % sched.period == 0 and done - last_drop >= sched.window:
                new_lr = schedule_check(losses, sched, state.lr)
                if new_lr < state.lr:
                    log.info("iteration %d: plateau, lr %.1e -> %.1e", it, state.lr, new_lr)
                    state.lr = new_lr
                    drops.append((it, new_lr))
                    last_drop = done
                    if cfg.checkpoint:
                        save_checkpoint(net, cfg.checkpoint, {"lr": new_lr})
                    if new_lr <= sched.floor:
                        stop_reason = "lr_floor"
                        break
    finally:
        if log_fh:
            log_fh.close()
    if cfg.checkpoint:
        save_checkpoint(net, cfg.checkpoint, {"lr": state.lr})
    return TrainResult(net, losses, lrs, drops, stop_reason)
