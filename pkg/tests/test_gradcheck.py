import numpy as np
import pytest

from rgbd_inpaint import gradcheck


def test_relative_error_floor():
    assert gradcheck.relative_error(np.zeros(3), np.zeros(3)) == 0
    assert gradcheck.relative_error(np.array([1.0]), np.array([1.1])) == pytest.approx(0.1 / 1.1)


def test_every_op_has_twenty_shapes():
    counts = {}
    for name, _, _ in gradcheck.op_cases(np.random.default_rng(0)):
        counts[name] = counts.get(name, 0) + 1
    assert min(counts.values()) >= 20
    assert {"conv2d", "upsample_nearest", "take", "matmul", "pow_tensor"} <= set(counts)


def test_small_critic_under_1k_params():
    assert gradcheck.small_critic().params.count() <= 1000


def test_float32_suite_loose_tolerance():
    results = gradcheck.gradient_suite(np.float32, tol=5e-2)
    assert all(r.passed for r in results), [r.line() for r in results if not r.passed]
