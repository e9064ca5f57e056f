import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from lidarsynth.augment import (BACKGROUND, CLUSTER_SIZES, JITTER_CLIPS, ClusterConfig, JitterConfig,
                                add_noise_clusters, jitter, noise_cluster_points)
from lidarsynth.errors import InputError
from lidarsynth.lidar import HitCloud


def cloud(n=50, seed=0):
    p = np.random.default_rng(seed).normal(size=(n, 3)) + [6, 0, 0]
    return HitCloud(p, np.arange(n), np.zeros((n, 2), np.int32), np.arange(n, dtype=np.int32) % 24,
                    np.linalg.norm(p, axis=1))


def test_sweep_grids():
    assert JITTER_CLIPS == (0.01, 0.02, 0.03, 0.04, 0.05, 0.06, 0.07, 0.08, 0.09, 0.1)
    assert CLUSTER_SIZES == (10, 25, 50, 100, 150, 200)


@given(st.floats(0.0, 0.5), st.floats(0.0, 0.2), st.integers(0, 2**32 - 1))
def test_jitter_bounded_by_clip(sigma, clip, seed):
    p = cloud().points
    q = jitter(p, JitterConfig(sigma, clip), np.random.default_rng(seed))
    assert q.shape == p.shape
    assert np.max(np.abs(q - p)) <= clip + 1e-12


def test_jitter_zero_sigma_is_copy():
    p = cloud().points
    q = jitter(p, JitterConfig(0.0), np.random.default_rng(0))
    assert np.array_equal(p, q) and q is not p


def test_jitter_is_gaussian_without_clip():
    d = jitter(np.zeros((20000, 3)), JitterConfig(0.03), np.random.default_rng(1))
    assert d.mean() == pytest.approx(0.0, abs=1e-3)
    assert d.std() == pytest.approx(0.03, rel=0.02)


def test_jitter_validation():
    with pytest.raises(InputError):
        JitterConfig(-1.0)
    with pytest.raises(InputError):
        jitter(np.array([[np.nan, 0, 0]]), JitterConfig(), np.random.default_rng(0))


@given(st.integers(0, 5), st.integers(0, 60), st.integers(0, 2**32 - 1))
def test_clusters_append_background(n_clusters, size, seed):
    c = cloud()
    out = add_noise_clusters(c, ClusterConfig(n_clusters, size), np.random.default_rng(seed))
    n = n_clusters * size
    assert len(out) == len(c) + n
    assert np.array_equal(out.points[:len(c)], c.points)
    assert np.all(out.labels[len(c):] == BACKGROUND)
    assert np.all(out.hit_face[len(c):] == -1)


def test_cluster_centers_inside_expanded_box():
    c = cloud()
    cfg = ClusterConfig(2000, 1, cluster_sigma=0.0, placement_margin=0.3)
    extra = noise_cluster_points(c.points, cfg, np.random.default_rng(2))
    assert np.all(extra >= c.points.min(axis=0) - 0.3)
    assert np.all(extra <= c.points.max(axis=0) + 0.3)


def test_cluster_spread():
    cfg = ClusterConfig(1, 20000, cluster_sigma=0.1)
    extra = noise_cluster_points(cloud().points, cfg, np.random.default_rng(3))
    assert extra.std(axis=0) == pytest.approx([0.1] * 3, rel=0.03)


def test_clusters_need_points():
    with pytest.raises(InputError):
        noise_cluster_points(np.zeros((0, 3)), ClusterConfig(1), np.random.default_rng(0))
