import numpy as np
import pytest

from rgbd_inpaint import autograd as ag
from rgbd_inpaint.autograd import Tensor
from rgbd_inpaint.nn import LayerSpec, ParamStore, Stack, conv, glorot_bound, init_params, layer_forward


def test_same_padding_keeps_size_for_dilated_conv():
    spec = conv(2, 3, kernel=3, dilation=8)
    assert spec.resolved_padding == (8, 8)
    p = init_params(spec, np.random.default_rng(0), np.float64)
    y = layer_forward(spec, p, Tensor(np.zeros((1, 2, 20, 20))))
    assert y.shape == (1, 3, 20, 20)


def test_stride_two_halves():
    spec = conv(1, 1, kernel=3, stride=2)
    p = init_params(spec, np.random.default_rng(0), np.float64)
    assert layer_forward(spec, p, Tensor(np.zeros((1, 1, 16, 16)))).shape == (1, 1, 8, 8)


def test_deconv_block_doubles():
    spec = LayerSpec("deconv_block", 2, 5, kernel=3)
    p = init_params(spec, np.random.default_rng(0), np.float64)
    assert layer_forward(spec, p, Tensor(np.zeros((2, 2, 4, 4)))).shape == (2, 5, 8, 8)


def test_glorot_bounds_and_zero_bias():
    spec = conv(4, 8, kernel=3)
    assert glorot_bound(spec) == pytest.approx(np.sqrt(6 / (36 + 72)))
    p = init_params(spec, np.random.default_rng(0), np.float32)
    assert np.abs(p["weight"].data).max() <= glorot_bound(spec)
    assert not p["bias"].data.any()
    assert p["weight"].dtype == np.float32


def test_param_count_formula():
    assert conv(3, 5, kernel=5).param_count() == 5 * 3 * 25 + 5
    assert LayerSpec("fc", 10, 1).param_count() == 11
    assert LayerSpec("activation", activation="elu").param_count() == 0


def test_channel_mismatch_raises():
    spec = conv(3, 2)
    p = init_params(spec, np.random.default_rng(0), np.float64)
    with pytest.raises(ag.ShapeError):
        layer_forward(spec, p, Tensor(np.zeros((1, 2, 8, 8))))


def test_unknown_kind_rejected():
    with pytest.raises(ValueError):
        LayerSpec("pool")


def test_stack_names_and_state_roundtrip():
    stack = Stack("enc", [("c1", conv(1, 2, act="elu")), ("c2", conv(2, 1))])
    store = ParamStore()
    stack.build(store, np.random.default_rng(3), np.float64)
    assert store.names() == ["enc.c1.weight", "enc.c1.bias", "enc.c2.weight", "enc.c2.bias"]
    assert store.count() == stack.param_count()
    state = {k: v.copy() for k, v in store.state().items()}
    for t in store.tensors():
        t.data = t.data * 0
    store.load_state(state)
    np.testing.assert_array_equal(store["enc.c1.weight"].data, state["enc.c1.weight"])


def test_duplicate_param_name_rejected():
    store = ParamStore()
    store.add("a", Tensor([1.0], requires_grad=True))
    with pytest.raises((KeyError, ValueError)):
        store.add("a", Tensor([1.0], requires_grad=True))
