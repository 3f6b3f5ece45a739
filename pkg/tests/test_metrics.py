import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rgbd_inpaint import metrics, oracles
from rgbd_inpaint.data import Dataset


def fixture_pair(seed=0, shape=(16, 16)):
    rng = np.random.default_rng(seed)
    a = rng.uniform(0, 1, shape)
    return a, np.clip(a + rng.normal(0, 0.1, shape), 0, 1)


def test_l1_cases():
    a = np.zeros((4, 4))
    assert metrics.l1_metric(a, a) == 0
    assert metrics.l1_metric(a + 0.5, a) == 0.5
    m = np.ones((4, 4))
    m[0, 0] = 0
    assert metrics.l1_metric(a + np.eye(4), a, "hole_only", m) == 1.0
    with pytest.raises(metrics.MetricError):
        metrics.l1_metric(a, a, "hole_only", np.ones((4, 4)))


def test_psnr_analytic_and_cap():
    gt = np.zeros((10, 10))
    pred = np.full((10, 10), 0.1)  # mse 0.01
    assert abs(metrics.psnr(pred, gt) - 20.0) <= 1e-9
    assert metrics.psnr(gt, gt) == 99.0


def test_psnr_matches_direct_formula():
    a, b = fixture_pair(1)
    assert abs(metrics.psnr(b, a) - oracles.psnr_direct(b, a)) <= 1e-9


def test_psnr_monotone_in_mse():
    gt = np.zeros(100)
    values = [metrics.psnr(np.full(100, e), gt) for e in (0.01, 0.02, 0.05, 0.1, 0.3)]
    assert all(x > y for x, y in zip(values, values[1:]))


def test_ssim_matches_window_loop():
    a, b = fixture_pair(2)
    assert abs(metrics.ssim(b, a) - oracles.ssim_direct(b, a)) <= 1e-6


def test_ssim_identity_and_symmetry():
    a, b = fixture_pair(3, (20, 20))
    assert metrics.ssim(a, a) == pytest.approx(1.0)
    assert metrics.ssim(a, b) == pytest.approx(metrics.ssim(b, a), abs=1e-15)


def test_ssim_channel_average():
    a, b = fixture_pair(4, (3, 16, 16))
    per = [metrics.ssim(b[c], a[c]) for c in range(3)]
    assert metrics.ssim(b, a) == pytest.approx(np.mean(per))


def test_ssim_window_larger_than_image():
    with pytest.raises(metrics.MetricError):
        metrics.ssim(np.zeros((8, 8)), np.zeros((8, 8)))


def test_depth_metrics_analytic():
    gt, pred = np.full((4, 4), 2.0), np.full((4, 4), 4.0)
    d = metrics.depth_metrics(pred, gt)
    assert abs(d["abs_rel"] - 1) <= 1e-9
    assert abs(d["sq_rel"] - 2) <= 1e-9
    assert abs(d["rmse"] - 2) <= 1e-9
    assert abs(d["rmse_log"] - math.log(2)) <= 1e-9
    assert all(v == 0 for v in metrics.depth_metrics(gt, gt).values())


def test_depth_metrics_skip_invalid_and_match_direct():
    rng = np.random.default_rng(5)
    gt = rng.uniform(0.5, 10, (8, 8))
    gt[0, :3] = 0.0
    pred = gt * rng.uniform(0.7, 1.3, gt.shape)
    fast = metrics.depth_metrics(pred, gt)
    slow = oracles.depth_metrics_direct(pred, gt)
    for k in fast:
        assert abs(fast[k] - slow[k]) <= 1e-9
    with pytest.raises(metrics.MetricError):
        metrics.depth_metrics(pred, np.zeros_like(gt))


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000), st.floats(0.1, 50))
def test_depth_metric_scale_covariance(seed, c):
    rng = np.random.default_rng(seed)
    gt = rng.uniform(0.5, 5, 20)
    pred = rng.uniform(0.5, 5, 20)
    d1 = metrics.depth_metrics(pred, gt)
    d2 = metrics.depth_metrics(c * pred, c * gt)
    assert d2["abs_rel"] == pytest.approx(d1["abs_rel"], rel=1e-9)
    assert d2["rmse_log"] == pytest.approx(d1["rmse_log"], rel=1e-7, abs=1e-12)
    assert d2["rmse"] == pytest.approx(c * d1["rmse"], rel=1e-9)
    assert d2["sq_rel"] == pytest.approx(c * d1["sq_rel"], rel=1e-9)


def test_emd_simple_cases():
    assert metrics.emd_1d([0.0], [3.5]) == 3.5
    assert metrics.emd_1d([1, 2, 3], [3, 1, 2]) == 0
    with pytest.raises(ValueError):
        metrics.emd_1d([1, 2], [1])


def test_emd_equals_bruteforce():
    rng = np.random.default_rng(6)
    for _ in range(100):
        n = int(rng.integers(1, 7))
        a, b = rng.normal(size=n), rng.normal(size=n)
        assert metrics.emd_1d(a, b) == pytest.approx(oracles.emd_bruteforce(a, b), abs=1e-12)




@settings(max_examples=60, deadline=None)
@given(st.integers(1, 6).flatmap(lambda n: st.tuples(*(st.lists(st.floats(-100, 100), min_size=n, max_size=n) for _ in range(3)))))
def test_emd_metric_axioms(abc):
    a, b, c = abc
    dab, dba = metrics.emd_1d(a, b), metrics.emd_1d(b, a)
    assert dab >= 0 and metrics.emd_1d(a, a) == 0
    assert dab == pytest.approx(dba)
    assert dab <= metrics.emd_1d(a, c) + metrics.emd_1d(c, b) + 1e-9


def _identity(dataset):
    def predict(z_c, z_d, m):
        # the oracle model knows the ground truth
        idx = []
        for zc, mm in zip(z_c, m):
            for i, x in enumerate(dataset.rgb):
                if np.array_equal(x * mm, zc):
                    idx.append(i)
                    break
        return dataset.rgb[idx], dataset.depth[idx]
    return predict


def test_evaluate_identity_model_is_perfect():
    ds = Dataset.synthetic(3, 16, seed=2)
    report = metrics.evaluate(_identity(ds), ds, seed=0)
    for region in metrics.REGIONS:
        mean = report.mean(region)
        assert mean["rgb_l1"] == 0 and mean["depth_l1"] == 0
        assert mean["rgb_psnr"] == 99.0
        assert mean["abs_rel"] == mean["sq_rel"] == mean["rmse"] == mean["rmse_log"] == 0
    assert report.mean("full")["rgb_ssim"] == pytest.approx(1.0)


def test_evaluate_means_and_files(tmp_path):
    ds = Dataset.synthetic(4, 16, seed=3)
    zero = lambda z_c, z_d, m: (np.zeros_like(z_c), np.zeros_like(z_d))  # noqa: E731
    r1 = metrics.evaluate(zero, ds, seed=7)
    r2 = metrics.evaluate(zero, ds, seed=7)
    np.testing.assert_equal(r1.per_sample, r2.per_sample)
    for name in metrics.METRIC_NAMES:
        vals = r1.per_sample["full"][name]
        assert r1.mean("full")[name] == pytest.approx(sum(vals) / len(vals))
    csv_path, json_path = r1.write(tmp_path)
    rows = csv_path.read_text().strip().splitlines()
    assert rows[0].split(",")[2:] == list(metrics.METRIC_NAMES)
    assert len(rows) == 1 + 2 * (len(ds) + 1)
    doc = json.loads(json_path.read_text())
    assert doc["regions"]["full"]["rgb_l1"]["mean"] == pytest.approx(r1.mean("full")["rgb_l1"])
