import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.spatial.transform import Rotation

from lidarsynth.errors import DegenerateError, DimensionError, InputError
from lidarsynth.metrics import (SkeletonSpec, aggregate, evaluate_instance, mpjpe, pa_mpjpe, pck,
                                procrustes_align, worst_instances)


def skeleton(rng, k=24):
    return rng.normal(size=(k, 3)) * 0.4


def test_mpjpe_direct():
    gt = np.zeros((3, 3))
    pred = np.array([[0.003, 0, 0], [0, 0.004, 0], [0, 0, 0.005]])
    assert mpjpe(pred, gt) == pytest.approx(4.0)
    assert mpjpe(pred, gt, [1, 0, 1]) == pytest.approx(4.0)
    assert mpjpe(pred, gt, [0, 0, 1]) == pytest.approx(5.0)


@given(st.integers(0, 2**32 - 1), st.floats(0.5, 2.0))
def test_procrustes_recovers_similarity(seed, scale):
    rng = np.random.default_rng(seed)
    pred = skeleton(rng)
    R = Rotation.random(random_state=seed % (2**32)).as_matrix()
    t = rng.normal(size=3) * 5
    gt = scale * pred @ R.T + t
    tf = procrustes_align(pred, gt)
    assert tf.scale == pytest.approx(scale, rel=1e-9)
    assert np.allclose(tf.rotation, R, atol=1e-9)
    assert np.allclose(tf.apply(pred), gt, atol=1e-9)
    assert pa_mpjpe(pred, gt) / 1000 < 1e-6


@given(st.integers(0, 2**32 - 1))
def test_pa_never_exceeds_mpjpe(seed):
    rng = np.random.default_rng(seed)
    pred, gt = skeleton(rng), skeleton(rng)
    assert pa_mpjpe(pred, gt) <= mpjpe(pred, gt) + 1e-6


def test_mirror_is_not_undone():
    rng = np.random.default_rng(2)
    gt = skeleton(rng)
    pred = gt * [-1, 1, 1]
    tf = procrustes_align(pred, gt)
    assert np.linalg.det(tf.rotation) == pytest.approx(1.0)
    assert pa_mpjpe(pred, gt) > 1.0


def test_rigid_mode_keeps_scale():
    rng = np.random.default_rng(3)
    gt = skeleton(rng)
    tf = procrustes_align(2 * gt, gt, with_scale=False)
    assert tf.scale == 1.0
    assert pa_mpjpe(2 * gt, gt, with_scale=False) > 0


def test_degenerate_alignment():
    line = np.outer(np.arange(5.0), [1, 2, 3])
    with pytest.raises(DegenerateError):
        procrustes_align(line, line)
    with pytest.raises(DegenerateError):
        procrustes_align(np.zeros((2, 3)), np.ones((2, 3)))


def test_pck_thresholds():
    gt = np.zeros((24, 3))
    gt[12] = [0, 0, 1.0]  # torso length 1
    pred = gt.copy()
    pred[:6, 0] += 0.2
    pred[6:12, 0] += 0.4
    pred[13:18, 0] += 0.6
    assert pck(pred, gt, fraction=0.3) == pytest.approx(13 / 24)
    assert pck(pred, gt, fraction=0.5) == pytest.approx(19 / 24)
    with pytest.raises(DegenerateError):
        pck(pred, np.zeros((24, 3)))


def test_torso_pair_configurable():
    with pytest.raises(InputError):
        SkeletonSpec(torso_pair=(3, 3))
    gt = np.zeros((24, 3))
    gt[5] = [0, 2.0, 0]
    gt[12] = [0, 0, 1.0]
    pred = gt + [0.4, 0, 0]
    assert pck(pred, gt, fraction=0.3) == 0.0
    assert pck(pred, gt, skeleton=SkeletonSpec(torso_pair=(0, 5)), fraction=0.3) == 1.0


def test_perfect_prediction_report():
    rng = np.random.default_rng(4)
    gt = skeleton(rng)
    r = evaluate_instance(gt, gt)
    assert r.mpjpe == 0 and r.pck3 == 1.0 and r.pck5 == 1.0 and r.pa_mpjpe < 1e-6


def test_partial_visibility_skips_pa():
    rng = np.random.default_rng(5)
    gt = skeleton(rng)
    vis = np.ones(24, bool)
    vis[3] = False
    r = evaluate_instance(gt + 0.01, gt, vis)
    assert r.pa_mpjpe is None and r.n_pa_instances == 0
    assert math.isnan(r.per_joint_error[3])
    with pytest.raises(DegenerateError):
        evaluate_instance(gt, gt, np.zeros(24))
    with pytest.raises(DimensionError):
        evaluate_instance(gt, gt[:5])


def test_aggregate_is_instance_weighted_and_order_free():
    rng = np.random.default_rng(6)
    reps = []
    for _ in range(30):
        gt = skeleton(rng)
        vis = rng.random(24) < 0.8
        vis[:2] = True
        reps.append(evaluate_instance(gt + rng.normal(size=gt.shape) * 0.05, gt, vis))
    a = aggregate(reps)
    assert a.mpjpe == pytest.approx(np.mean([r.mpjpe for r in reps]), rel=1e-12)
    b = aggregate(reps[::-1])
    assert a.to_text() == b.to_text()
    for k in range(24):
        vals = [r.per_joint_error[k] for r in reps if not math.isnan(r.per_joint_error[k])]
        assert a.per_joint_error[k] == pytest.approx(np.mean(vals), rel=1e-12)
    with pytest.raises(InputError):
        aggregate([])


def test_report_schema():
    rng = np.random.default_rng(7)
    gt = skeleton(rng)
    d = json.loads(evaluate_instance(gt + 0.01, gt).to_text())
    assert list(d) == ["n_instances", "mpjpe_mm", "pa_mpjpe_mm", "n_pa_instances", "pck3", "pck5", "torso_pair",
                       "per_joint_error_mm"]
    assert len(d["per_joint_error_mm"]) == 24


def test_worst_instances():
    e = np.arange(20, dtype=float).reshape(10, 2)
    e[0, 1] = np.nan
    s = worst_instances(e, n=3)
    assert s.indices.tolist() == [9, 8, 7]
    assert np.allclose(s.mean, [16, 17])
    assert np.allclose(s.var, np.var([[18, 19], [16, 17], [14, 15]], axis=0))
    with pytest.warns(UserWarning):
        s = worst_instances(e, n=600)
    assert len(s.indices) == 10
    with pytest.raises(InputError):
        worst_instances(np.zeros((0, 3)))
