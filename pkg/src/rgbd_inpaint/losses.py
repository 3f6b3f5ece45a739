"""Adversarial, gradient-penalty and reconstruction objectives."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import autograd as ag
from .autograd import Tensor

GRAD_NORM_EPS = 1e-12


@dataclass(frozen=True)
class LossWeights:
    alpha: float = 1.0
    lambda_gp: float = 10.0
    beta_adv: float = 0.001

    def __post_init__(self):
        for name in ("alpha", "lambda_gp", "beta_adv"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")


def vanilla_gan_value(d_real: Tensor, d_fake: Tensor) -> Tensor:
    """Original minimax value E[log D(x)] + E[log(1 - D(G(z)))].

    Kept as a reference; training uses the Wasserstein objectives below.
    """
    for t in (d_real, d_fake):
        if np.any((t.data <= 0) | (t.data >= 1)):
            raise ag.DomainError("discriminator probabilities must lie in (0, 1)")
    return ag.add(ag.mean(ag.log(d_real)), ag.mean(ag.log(ag.sub(1.0, d_fake))))


def wgan_critic_loss(d_real: Tensor, d_fake: Tensor) -> Tensor:
    """mean(D(fake)) - mean(D(real)); the critic minimizes this."""
    return ag.sub(ag.mean(d_fake), ag.mean(d_real))


def wgan_generator_loss(d_fake: Tensor) -> Tensor:
    return ag.neg(ag.mean(d_fake))


def interpolate_samples(x: Tensor, x_tilde: Tensor, t) -> Tensor:
    """Per-sample straight-line mix (1 - t) * x + t * x_tilde."""
    if x.shape != x_tilde.shape:
        raise ag.ShapeError(f"interpolation endpoints differ: {x.shape} vs {x_tilde.shape}")
    t = ag._as_tensor(t, x)
    if t.shape != (x.shape[0],):
        raise ag.ShapeError(f"need one t per sample, got shape {t.shape}")
    if np.any((t.data < 0) | (t.data > 1)):
        raise ValueError("interpolation weights must lie in [0, 1]")
    tb = ag.reshape(t, (x.shape[0],) + (1,) * (x.ndim - 1))
    return ag.add(ag.mul(ag.sub(1.0, tb), x), ag.mul(tb, x_tilde))


def gradient_penalty(
    critic: Callable[[Tensor], Tensor], x_hat: Tensor, lambda_gp: float = 10.0
) -> Tensor:
    """lambda * mean_b (||dD/dx_hat_b||_2 - 1)^2, differentiable in the critic's parameters."""
    if not x_hat.requires_grad:
        x_hat = Tensor(x_hat.data, requires_grad=True)
    scores = critic(x_hat)
    # samples are independent, so d(sum D)/dx_hat splits into per-sample gradients
    (g,) = ag.grad(ag.sum(scores), [x_hat], create_graph=True)
    flat = ag.reshape(g, (g.shape[0], -1))
    norm = ag.power(ag.add(ag.sum(ag.mul(flat, flat), axes=1), GRAD_NORM_EPS), 0.5)
    dev = ag.sub(norm, 1.0)
    return ag.mul(lambda_gp, ag.mean(ag.mul(dev, dev)))


def l1(pred: Tensor, target: Tensor) -> Tensor:
    if pred.shape != target.shape:
        raise ag.ShapeError(f"l1 shapes differ: {pred.shape} vs {target.shape}")
    return ag.mean(ag.absolute(ag.sub(pred, target)))


def content_loss(raw_rgb: Tensor, x_c: Tensor, raw_depth: Tensor, x_d: Tensor, alpha: float = 1.0) -> Tensor:
    """RGB l1 + alpha * depth l1 over the full image, on raw generator output."""
    rgb = l1(raw_rgb, x_c)
    if alpha == 0:
        return rgb
    return ag.add(rgb, ag.mul(alpha, l1(raw_depth, x_d)))


def generator_objective(content: Tensor, adv_global, adv_local, beta_adv: float) -> Tensor:
    if beta_adv == 0:
        return content
    return ag.add(content, ag.mul(beta_adv, ag.add(adv_global, adv_local)))
