import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from dyadgest.bvh import MotionClip
from dyadgest.motion import (NormStats, denormalize, fit_norm_stats, make_windows, motion_features, normalize,
                             resample)


def test_motion_features_identity():
    frames = np.arange(18.0).reshape(2, 9)
    np.testing.assert_array_equal(motion_features(MotionClip(frames, 1 / 30)), frames)


def test_motion_features_no_columns():
    with pytest.raises(ValueError, match="no feature columns"):
        motion_features(MotionClip(np.zeros((2, 0)), 1 / 30))


def test_resample_same_rate_is_identity():
    x = np.random.default_rng(0).normal(size=(30, 4))
    np.testing.assert_array_equal(resample(x, 30, 30), x)
    clip = MotionClip(x, 1 / 30)
    np.testing.assert_array_equal(motion_features(MotionClip(resample(motion_features(clip), 30, 30), 1 / 30)),
                                  motion_features(clip))


def test_resample_decimation():
    x = np.random.default_rng(1).normal(size=(60, 3))
    y = resample(x, 60, 30)
    assert y.shape == (30, 3)
    np.testing.assert_allclose(y, x[::2], atol=1e-12)


def lerp_oracle(x, src, dst):
    """Scalar loop: sample time k/dst on the source grid, clamped to the last frame."""
    n = len(x)
    m = int(np.floor(n * dst / src + 1e-9))
    out = []
    for k in range(m):
        p = k * src / dst
        i = int(p)
        if i >= n - 1:
            out.append(x[n - 1])
        else:
            out.append(x[i] + (p - i) * (x[i + 1] - x[i]))
    return np.array(out)


def test_resample_upsample_matches_oracle():
    y = resample(np.array([[0.0], [10.0]]), 1, 2)
    np.testing.assert_allclose(y[:, 0], lerp_oracle([0.0, 10.0], 1, 2))
    np.testing.assert_allclose(y[:, 0], [0.0, 5.0, 10.0, 10.0])


@pytest.mark.parametrize("src,dst", [(30, 20), (24, 30), (120, 30), (25, 60)])
def test_resample_general_rates(src, dst):
    x = np.random.default_rng(src * dst).normal(size=(50, 1))
    np.testing.assert_allclose(resample(x, src, dst)[:, 0], lerp_oracle(x[:, 0], src, dst), atol=1e-12)


def test_resample_needs_two_frames():
    with pytest.raises(ValueError):
        resample(np.zeros((1, 2)), 30, 60)


def test_fit_norm_stats_constant_column():
    s = fit_norm_stats([np.full((5, 1), 5.0)])
    assert s.mean[0] == 5.0 and s.std[0] == 1e-6


def test_fit_norm_stats_population_std():
    s = fit_norm_stats([np.array([[-1.0], [1.0]])])
    assert s.mean[0] == 0.0 and s.std[0] == 1.0


def test_fit_norm_stats_random_matrix():
    x = np.random.default_rng(2).normal(3.0, 2.0, size=(1000, 3))
    s = fit_norm_stats([x[:400], x[400:]])
    z = normalize(x, s)
    # recompute directly on the z-scored data
    assert np.all(np.abs(z.mean(axis=0)) < 1e-9)
    assert np.all(np.abs(np.sqrt((z ** 2).mean(axis=0) - z.mean(axis=0) ** 2) - 1) < 1e-9)


def test_fit_norm_stats_empty():
    with pytest.raises(ValueError):
        fit_norm_stats([])
    with pytest.raises(ValueError):
        fit_norm_stats([np.zeros((0, 3))])


def test_normalize_examples():
    s = NormStats(np.array([1.0, -2.0]), np.array([2.0, 0.5]))
    np.testing.assert_array_equal(normalize(s.mean[None], s), [[0.0, 0.0]])
    np.testing.assert_array_equal(normalize((s.mean + s.std)[None], s), [[1.0, 1.0]])
    with pytest.raises(ValueError):
        normalize(np.zeros((1, 3)), s)
    with pytest.raises(ValueError):
        denormalize(np.zeros((1, 3)), s)


@settings(max_examples=100, deadline=None)
@given(arrays(np.float64, (7, 3), elements=st.floats(-1e3, 1e3)),
       arrays(np.float64, 3, elements=st.floats(-1e3, 1e3)),
       arrays(np.float64, 3, elements=st.floats(1e-3, 1e3)))
def test_normalize_inverse(x, mean, std):
    s = NormStats(mean, std)
    np.testing.assert_allclose(denormalize(normalize(x, s), s), x, atol=1e-9, rtol=0)
    np.testing.assert_allclose(normalize(denormalize(x, s), s), x, atol=1e-9, rtol=1e-12)


def _windows(n, stride=30, window_len=150, seed_len=30):
    f = np.arange(n * 2.0).reshape(n, 2)
    c = np.arange(n * 3.0).reshape(n, 3)
    return make_windows(f, c, np.ones(4), window_len, seed_len, stride), f, c


@pytest.mark.parametrize("n, stride, starts", [(180, 30, [0, 30]), (150, 30, [0]), (149, 30, []),
                                               (450, 150, [0, 150, 300])])
def test_window_counts(n, stride, starts):
    ws, f, _ = _windows(n, stride)
    assert [int(w.source_id.split("@")[1]) for w in ws] == starts
    if n == 450 and stride == 150:
        np.testing.assert_array_equal(np.concatenate([np.vstack([w.seed_frames, w.target_frames]) for w in ws]), f)


@pytest.mark.parametrize("n", range(149, 156))
def test_windows_exhaustive_lengths(n):
    ws, f, c = _windows(n, stride=1)
    assert len(ws) == max(0, n - 150 + 1)
    for k, w in enumerate(ws):
        assert w.seed_frames.shape == (30, 2) and w.target_frames.shape == (120, 2)
        assert w.frame_conditions.shape == (150, 3)
        np.testing.assert_array_equal(w.seed_frames, f[k:k + 30])
        np.testing.assert_array_equal(w.target_frames, f[k + 30:k + 150])
        np.testing.assert_array_equal(w.frame_conditions, c[k:k + 150])


def test_window_per_window_clip_conditions():
    f = np.zeros((180, 2))
    ws = make_windows(f, f, np.array([[1.0], [2.0]]))
    assert [w.clip_condition[0] for w in ws] == [1.0, 2.0]
    with pytest.raises(ValueError):
        make_windows(f, f, np.array([[1.0]]))


def test_window_preconditions():
    f = np.zeros((200, 2))
    with pytest.raises(ValueError):
        make_windows(f, f, np.ones(1), window_len=30, seed_len=30)
    with pytest.raises(ValueError):
        make_windows(f, f, np.ones(1), stride=0)
    with pytest.raises(ValueError):
        make_windows(f, f[:-1], np.ones(1))
