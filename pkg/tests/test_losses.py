import numpy as np
import pytest

from rgbd_inpaint import autograd as ag
from rgbd_inpaint import losses
from rgbd_inpaint.autograd import Tensor
from rgbd_inpaint.models import CriticConfig, build_critic


def linear_critic(w):
    return lambda x: ag.reshape(ag.matmul(x, ag.reshape(w, (-1, 1))), (-1,))


def test_linear_penalty_value_and_grad():
    w = Tensor(np.array([3.0, 4.0]), requires_grad=True)
    x_hat = Tensor(np.random.default_rng(0).normal(size=(5, 2)))
    pen = losses.gradient_penalty(linear_critic(w), x_hat, 10.0)
    (gw,) = ag.grad(pen, [w])
    assert abs(pen.item() - 160.0) <= 1e-9
    np.testing.assert_allclose(gw.data, [48.0, 64.0], atol=1e-9)


def test_unit_norm_linear_critic_has_zero_penalty():
    w = Tensor(np.array([0.6, 0.8]), requires_grad=True)
    pen = losses.gradient_penalty(linear_critic(w), Tensor(np.ones((3, 2))), 10.0)
    assert pen.item() == pytest.approx(0.0, abs=1e-12)


def test_penalty_scales_with_lambda():
    w = Tensor(np.array([3.0, 4.0]), requires_grad=True)
    x = Tensor(np.ones((1, 2)))
    assert losses.gradient_penalty(linear_critic(w), x, 1.0).item() == pytest.approx(16.0)


def test_penalty_non_negative_on_conv_critic():
    D = build_critic(CriticConfig("global", 8, 2, seed=0, dtype="float64"))
    x = Tensor(np.random.default_rng(1).uniform(-1, 1, (2, 4, 8, 8)))
    assert losses.gradient_penalty(D, x, 10.0).item() >= 0


def test_wgan_losses():
    real, fake = Tensor([1.0, 3.0]), Tensor([0.0, -2.0])
    assert losses.wgan_critic_loss(real, fake).item() == pytest.approx(-1.0 - 2.0)
    assert losses.wgan_generator_loss(fake).item() == pytest.approx(1.0)


def test_vanilla_gan_value():
    v = losses.vanilla_gan_value(Tensor([0.5]), Tensor([0.5]))
    assert v.item() == pytest.approx(2 * np.log(0.5))
    with pytest.raises(ag.DomainError):
        losses.vanilla_gan_value(Tensor([1.0]), Tensor([0.5]))


def test_interpolation_endpoints_and_validation():
    x, y = Tensor(np.zeros((2, 3))), Tensor(np.ones((2, 3)))
    np.testing.assert_array_equal(losses.interpolate_samples(x, y, np.array([0.0, 1.0])).data,
                                  [[0, 0, 0], [1, 1, 1]])
    with pytest.raises(ValueError):
        losses.interpolate_samples(x, y, np.array([0.0, 1.5]))
    with pytest.raises(ag.ShapeError):
        losses.interpolate_samples(x, y, np.array([0.5]))


def test_content_loss_weighting():
    c, d = Tensor(np.zeros((1, 3, 2, 2))), Tensor(np.zeros((1, 1, 2, 2)))
    tc, td = Tensor(np.full((1, 3, 2, 2), 0.5)), Tensor(np.full((1, 1, 2, 2), 0.25))
    assert losses.content_loss(c, tc, d, td, 1.0).item() == pytest.approx(0.75)
    assert losses.content_loss(c, tc, d, td, 0.0).item() == pytest.approx(0.5)
    assert losses.content_loss(c, tc, d, td, 2.0).item() == pytest.approx(1.0)


def test_generator_objective_beta_zero_is_content():
    content = Tensor([0.3])
    assert losses.generator_objective(content, Tensor([5.0]), Tensor([7.0]), 0.0).item() == pytest.approx(0.3)
    assert losses.generator_objective(content, Tensor([5.0]), Tensor([7.0]), 0.001).item() == pytest.approx(0.312)


def test_negative_weights_rejected():
    with pytest.raises(ValueError):
        losses.LossWeights(lambda_gp=-1)


def test_l1_shape_check():
    with pytest.raises(ag.ShapeError):
        losses.l1(Tensor(np.zeros(3)), Tensor(np.zeros(4)))
