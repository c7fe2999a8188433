import numpy as np
import pytest

from zstsr.dataset import SamplerConfig, build_pyramid
from zstsr.model import architecture, init
from zstsr.optim import (AdamState, LrSchedule, TrainConfig, TrainingError, adam_step,
                         is_plateau, schedule_check, train)
from zstsr.volume import VideoVolume


def test_adam_zero_gradient_leaves_params():
    p = [np.array([1.0, -2.0], np.float32)]
    st = AdamState.for_params(p, lr=0.1)
    adam_step(p, [np.zeros(2, np.float32)], st)
    assert np.array_equal(p[0], [1.0, -2.0]) and st.step == 1


def test_adam_first_step_is_lr():
    p = [np.zeros(1, np.float64)]
    st = AdamState.for_params(p, lr=0.1)
    adam_step(p, [np.ones(1)], st)
    assert p[0][0] == pytest.approx(-0.1, rel=1e-6)
    adam_step(p, [np.ones(1)], st)
    assert p[0][0] == pytest.approx(-0.2, rel=1e-6)


def test_adam_symmetry_and_reference():
    rng = np.random.default_rng(0)
    g = rng.standard_normal(5)
    p = [np.zeros(5), np.zeros(5)]
    st = AdamState.for_params(p, lr=0.01)
    m = np.zeros(5)
    v = np.zeros(5)
    ref = np.zeros(5)
    for t in range(1, 6):
        adam_step(p, [g, g.copy()], st)
        m = 0.9 * m + 0.1 * g
        v = 0.999 * v + 0.001 * g * g
        ref -= 0.01 * (m / (1 - 0.9 ** t)) / (np.sqrt(v / (1 - 0.999 ** t)) + 1e-8)
    assert np.array_equal(p[0], p[1])
    assert np.allclose(p[0], ref, rtol=1e-12)


def test_adam_errors():
    p = [np.zeros(2)]
    st = AdamState.for_params(p)
    with pytest.raises(TrainingError):
        adam_step(p, [np.array([np.nan, 0.0])], st)
    with pytest.raises(TrainingError):
        adam_step(p, [np.zeros(3)], st)


def test_plateau_rule_examples():
    i = np.arange(200)
    assert not is_plateau(list(1.0 - 0.01 * i), 200)
    rng = np.random.default_rng(1)
    assert is_plateau(list(0.5 + 0.01 * rng.standard_normal(200)), 200)
    series = 1 - 1e-6 * i + rng.normal(0, 0.01, 200)
    sched = LrSchedule(window=200)
    assert schedule_check(list(series), sched, 1e-4) == pytest.approx(1e-5)
    assert schedule_check(list(series[:150]), sched, 1e-4) == 1e-4  # window not filled
    assert schedule_check(list(series), sched, 1e-6) == 1e-6  # clamped at the floor


def test_schedule_validation():
    with pytest.raises(TrainingError):
        LrSchedule(floor=1e-3)
    with pytest.raises(TrainingError):
        LrSchedule(window=1)
    with pytest.raises(TrainingError):
        TrainConfig(max_iterations=-1)


def _levels(value=None, shape=(8, 8, 8, 1), seed=0):
    if value is None:
        data = np.random.default_rng(seed).random(shape, dtype=np.float32)
    else:
        data = np.full(shape, value, np.float32)
    return build_pyramid(VideoVolume(data), [1], [1], ["within"], [()], crop_size=(8, 8, 8))


def small_net(seed=0):
    return init(seed, 1, 4, architecture(1, 4, 2, [(3, 3, 3), (1, 3, 3)]))


def test_zero_iterations_returns_net_unchanged():
    net = small_net()
    before = [p.copy() for p in net.params()]
    res = train(net, _levels(), TrainConfig(max_iterations=0, sampler=SamplerConfig(crop=(8, 8, 8))))
    assert res.losses == [] and all(np.array_equal(a, b) for a, b in zip(before, net.params()))


def test_constant_pair_learns_zero_residual():
    net = small_net(seed=3)
    cfg = TrainConfig(max_iterations=500, sampler=SamplerConfig(crop=(8, 8, 8)),
                      schedule=LrSchedule(initial_lr=1e-3, floor=1e-6))
    res = train(net, _levels(0.5), cfg)
    assert min(res.losses) <= 1e-6


def test_memorizable_pair_loss_falls():
    # one 8-frame crop of a linearly moving edge; a single level and origin
    t, x = np.meshgrid(np.arange(8), np.arange(8), indexing="ij")
    data = (x >= 2 + 0.5 * t).astype(np.float32)[:, None, :, None].repeat(8, axis=1)
    levels = build_pyramid(VideoVolume(data), [1], [1], ["within"], [()], crop_size=(8, 8, 8))
    net = init(1, 1, 8, architecture(1, 8, 3, [(3, 3, 3), (3, 3, 3), (1, 3, 3)]))
    cfg = TrainConfig(max_iterations=600, sampler=SamplerConfig(crop=(8, 8, 8)),
                      schedule=LrSchedule(initial_lr=1e-3, window=10**6))
    losses = np.array(train(net, levels, cfg).losses)
    smooth = losses.reshape(-1, 50).mean(axis=1)
    assert smooth[-1] < 1e-4 < smooth[0]
    assert np.all(np.diff(smooth) < 0)


def test_training_is_deterministic_and_logged(tmp_path):
    cfg = TrainConfig(max_iterations=30, sampler=SamplerConfig(crop=(8, 8, 8)), seed=4,
                      loss_log=str(tmp_path / "a.csv"), checkpoint=str(tmp_path / "a.ckpt"))
    r1 = train(small_net(), _levels(), cfg)
    cfg.loss_log = str(tmp_path / "b.csv")
    r2 = train(small_net(), _levels(), cfg)
    assert r1.losses == r2.losses
    a = (tmp_path / "a.csv").read_text()
    assert a == (tmp_path / "b.csv").read_text()
    lines = a.strip().split("\n")
    assert lines[0] == "iteration,loss,lr" and len(lines) == 31
    assert (tmp_path / "a.ckpt").exists()


def test_lr_drops_until_floor_stop():
    # random crops of a noise video give a loss that is flat up to sampling noise
    net = small_net(seed=2)
    sched = LrSchedule(initial_lr=1e-3, floor=1e-5, period=10, window=40)
    cfg = TrainConfig(max_iterations=5000, schedule=sched, sampler=SamplerConfig(crop=(8, 8, 8)))
    res = train(net, _levels(shape=(8, 16, 16, 1)), cfg)
    assert res.stop_reason == "lr_floor"
    assert [d[1] for d in res.drops] == pytest.approx([1e-4, 1e-5])
    assert all(b <= a for a, b in zip(res.lrs, res.lrs[1:]))
    assert res.drops[1][0] - res.drops[0][0] >= sched.window
    assert len(res.losses) == res.drops[-1][0] + 1


def test_non_finite_loss_reports_provenance():
    net = small_net()
    net.weights[0][...] = np.float32(1e38)
    with pytest.raises(TrainingError, match="level"):
        train(net, _levels(), TrainConfig(max_iterations=2, sampler=SamplerConfig(crop=(8, 8, 8))))
