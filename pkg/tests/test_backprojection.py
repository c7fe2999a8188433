import numpy as np
import pytest

from zstsr.backprojection import (BackProjectionConfig, BackProjectionError, _track,
                                  spatial_backproject, temporal_backproject)
from zstsr.resample import spatial_scale_bicubic, temporal_rect_downsample
from zstsr.volume import VideoVolume, VolumeError


def series(values):
    return VideoVolume(np.asarray(values, np.float32).reshape(-1, 1, 1, 1))


def rmse(a, b):
    return float(np.sqrt(np.mean((a.data.astype(np.float64) - b.data) ** 2)))


def test_temporal_examples():
    assert np.allclose(temporal_backproject(series([0, 0]), series([1]), 2).flat, [1, 1])
    assert np.allclose(temporal_backproject(series([0, 2]), series([2]), 2).flat, [1, 3])
    consistent = series([0.1, 0.3, 0.5, 0.9])
    out = temporal_backproject(consistent, temporal_rect_downsample(consistent, 2), 2)
    assert np.max(np.abs(out.data - consistent.data)) <= 1e-6


@pytest.mark.parametrize("s", [2, 3, 8])
def test_temporal_consistency_after_one_pass(s, backend):
    rng = np.random.default_rng(s)
    high = VideoVolume(rng.random((4 * s, 5, 6, 3), dtype=np.float32))
    low = VideoVolume(rng.random((4, 5, 6, 3), dtype=np.float32))
    hist = []
    out = temporal_backproject(high, low, s, history=hist)
    assert rmse(temporal_rect_downsample(out, s), low) <= 1e-6
    assert hist[-1] <= 1e-6


def test_temporal_dim_mismatch():
    with pytest.raises(VolumeError):
        temporal_backproject(series([0, 0, 0]), series([1]), 2)


def test_spatial_fixed_point_and_dc(backend):
    rng = np.random.default_rng(0)
    high = VideoVolume(rng.random((2, 16, 16, 1), dtype=np.float32))
    low = spatial_scale_bicubic(high, 0.5)
    hist = []
    out = spatial_backproject(high, low, 2, history=hist)
    assert out == high and hist == [0.0]
    c = spatial_backproject(VideoVolume(np.full((1, 8, 8, 1), 0.9, np.float32)),
                            VideoVolume(np.full((1, 4, 4, 1), 0.2, np.float32)), 2)
    assert np.allclose(c.data, 0.2, atol=1e-5)


def test_spatial_noise_reduction(backend):
    rng = np.random.default_rng(1)
    low = VideoVolume(rng.random((1, 16, 16, 1), dtype=np.float32))
    noisy = spatial_scale_bicubic(low, 2).data + rng.normal(0, 0.1, (1, 32, 32, 1))
    high = VideoVolume(noisy.astype(np.float32))
    before = rmse(spatial_scale_bicubic(high, 0.5), low)
    hist = []
    out = spatial_backproject(high, low, 2, history=hist)
    after = rmse(spatial_scale_bicubic(out, 0.5), low)
    assert after <= before / 10
    assert all(b < a for a, b in zip(hist, hist[1:]))
    assert after <= 10 * BackProjectionConfig().tolerance


def test_spatial_dim_mismatch():
    with pytest.raises(VolumeError):
        spatial_backproject(VideoVolume(np.zeros((1, 8, 8, 1))), VideoVolume(np.zeros((1, 3, 4, 1))), 2)
    with pytest.raises(VolumeError):
        spatial_backproject(VideoVolume(np.zeros((2, 8, 8, 1))), VideoVolume(np.zeros((1, 4, 4, 1))), 2)


def test_divergence_detection():
    hist = []
    for r in (1.0, 2.0, 3.0):
        _track(hist, r)
    with pytest.raises(BackProjectionError):
        _track(hist, 4.0)
    hist = [1.0, 2.0, 1.5]
    _track(hist, 3.0)  # growth streak broken: no error


def test_config_validation():
    with pytest.raises(VolumeError):
        BackProjectionConfig(iterations=0)
    with pytest.raises(VolumeError):
        BackProjectionConfig(tolerance=0)
    with pytest.raises(VolumeError):
        BackProjectionConfig(mode="diagonal")
