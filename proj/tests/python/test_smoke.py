"""Smoke tests for the Python module: import, core ops, model entry points,
metrics, and file I/O round trips."""

import numpy as np
import pytest

import pyraflow


def test_version():
    assert isinstance(pyraflow.__version__, str)


def test_warp_zero_flow_is_identity():
    rng = np.random.default_rng(0)
    feature = rng.standard_normal((4, 8, 8), dtype=np.float32)
    flow = np.zeros((2, 8, 8), dtype=np.float32)
    out = pyraflow.warp(feature, flow)
    np.testing.assert_array_equal(out, feature)


def test_warp_shape_mismatch_raises():
    with pytest.raises(ValueError):
        pyraflow.warp(np.zeros((3, 4, 4), np.float32), np.zeros((2, 5, 4), np.float32))


def test_cost_volume_channels():
    rng = np.random.default_rng(1)
    f1 = rng.standard_normal((8, 6, 6), dtype=np.float32)
    f2 = rng.standard_normal((8, 6, 6), dtype=np.float32)
    vol = pyraflow.cost_volume(f1, f2, radius=3, stride=1)
    assert vol.shape == (49, 6, 6)


def test_local_conv_delta_identity():
    rng = np.random.default_rng(2)
    field = rng.standard_normal((2, 5, 5), dtype=np.float32)
    filters = np.zeros((9, 5, 5), dtype=np.float32)
    filters[4] = 1.0
    np.testing.assert_array_equal(pyraflow.local_conv(field, filters), field)


def test_build_filters_columns_sum_to_one():
    rng = np.random.default_rng(3)
    dist = rng.standard_normal((9, 4, 4), dtype=np.float32)
    filters = pyraflow.build_filters(dist)
    np.testing.assert_allclose(filters.sum(axis=0), 1.0, atol=1e-5)


def test_estimate_runs_on_a_small_pair():
    weights = pyraflow.init_weights(width_scale=0.25, seed=11)
    assert pyraflow.parameter_count(weights) > 0
    data = pyraflow.make_synthetic_dataset(1, size=32, max_displacement=2.0, seed=5)
    im1, im2, gt = data[0]
    flow = pyraflow.estimate(im1, im2, weights, width_scale=0.25)
    assert flow.shape == (2, 32, 32)
    assert np.isfinite(flow).all()
    assert gt.shape == (2, 32, 32)


def test_metrics_hand_values():
    gt = np.zeros((2, 4, 4), np.float32)
    est = np.zeros((2, 4, 4), np.float32)
    est[0] += 3.0
    est[1] += 4.0
    assert pyraflow.aee(est, gt) == pytest.approx(5.0)
    gt100 = np.zeros((2, 4, 4), np.float32)
    gt100[0] += 100.0
    est100 = gt100.copy()
    est100[0] += 4.0
    assert pyraflow.fl_all(est100, gt100) == pytest.approx(0.0)


def test_flo_round_trip(tmp_path):
    rng = np.random.default_rng(4)
    flow = rng.standard_normal((2, 6, 7)).astype(np.float32)
    path = str(tmp_path / "x.flo")
    pyraflow.write_flo(path, flow)
    np.testing.assert_array_equal(pyraflow.read_flo(path), flow)


def test_weights_round_trip(tmp_path):
    weights = pyraflow.init_weights(width_scale=0.25, seed=3)
    path = str(tmp_path / "w.lfnw")
    pyraflow.write_weights(path, weights)
    back = pyraflow.read_weights(path)
    assert set(back.keys()) == set(weights.keys())
    for name, value in weights.items():
        np.testing.assert_array_equal(back[name], value)


def test_colorize_zero_flow_is_white():
    img = pyraflow.colorize(np.zeros((2, 4, 4), np.float32))
    np.testing.assert_allclose(img, 1.0)


def test_selfcheck_invariants():
    results = pyraflow.selfcheck(only="inv.")
    assert results and all(r["pass"] for r in results)
