"""Gradient, double-backprop and metric-oracle check suites.

Relative error is ||analytic - numeric||_2 / max(||analytic||_2, ||numeric||_2, 1e-10),
computed per differentiated input.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterator

import numpy as np

from . import autograd as ag
from . import losses, metrics, oracles
from .autograd import Tensor
from .models import CriticConfig, build_critic

N_SHAPES = 20


@dataclass
class CheckResult:
    suite: str
    name: str
    error: float
    tol: float

    @property
    def passed(self) -> bool:
        return bool(np.isfinite(self.error) and self.error <= self.tol)

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"{status} {self.suite:<14} {self.name:<32} err={self.error:.3e} tol={self.tol:.1e}"


def relative_error(a: np.ndarray, n: np.ndarray) -> float:
    num = float(np.linalg.norm(np.ravel(a) - np.ravel(n)))
    den = max(float(np.linalg.norm(a)), float(np.linalg.norm(n)), 1e-10)
    return num / den


def check_gradients(f: Callable[..., Tensor], inputs: list[np.ndarray], eps: float, dtype) -> float:
    """Worst relative error over inputs between ``grad`` and central differences."""
    tensors = [Tensor(np.asarray(x, dtype=dtype), requires_grad=True) for x in inputs]
    analytic = ag.grad(f(*tensors), tensors)
    worst = 0.0
    for k, t in enumerate(tensors):
        def fk(xk, k=k):
            args = [Tensor(tt.data) for tt in tensors]
            args[k] = xk
            return f(*args)

        numeric = ag.finite_difference_gradient(fk, Tensor(t.data), eps)
        worst = max(worst, relative_error(analytic[k].data, numeric.data))
    return worst


def _away_from_zero(rng, shape, lo=0.2):
    return rng.choice([-1.0, 1.0], size=shape) * rng.uniform(lo, 1.0, size=shape)


def _shape(rng, ndim_lo=1, ndim_hi=3, lo=1, hi=4):
    return tuple(int(v) for v in rng.integers(lo, hi + 1, size=int(rng.integers(ndim_lo, ndim_hi + 1))))


def _weighted(out: Tensor, seed: int) -> Tensor:
    r = np.random.default_rng(seed).normal(size=out.shape)
    return ag.sum(ag.mul(out, Tensor(r.astype(out.dtype))))


def op_cases(rng: np.random.Generator) -> Iterator[tuple[str, Callable, list[np.ndarray]]]:
    """(op name, scalar function, inputs) for every differentiable op, N_SHAPES each."""
    for k in range(N_SHAPES):
        s = _shape(rng)
        # broadcast partner: drop leading dims and set some extents to 1
        bshape = tuple(1 if rng.random() < 0.4 else n for n in s[int(rng.integers(0, len(s))):])
        a = rng.normal(size=s)
        b = rng.normal(size=bshape)
        yield "add", lambda x, y, k=k: _weighted(ag.add(x, y), k), [a, b]
        yield "sub", lambda x, y, k=k: _weighted(ag.sub(x, y), k), [a, b]
        yield "mul", lambda x, y, k=k: _weighted(ag.mul(x, y), k), [a, b]
        yield "div", lambda x, y, k=k: _weighted(ag.div(x, y), k), [a, _away_from_zero(rng, bshape, 0.5)]
        yield "neg", lambda x, k=k: _weighted(ag.neg(x), k), [a]
        yield "abs", lambda x, k=k: _weighted(ag.absolute(x), k), [_away_from_zero(rng, s)]
        yield "exp", lambda x, k=k: _weighted(ag.exp(x), k), [a]
        yield "log", lambda x, k=k: _weighted(ag.log(x), k), [rng.uniform(0.5, 2.0, size=s)]
        p = float(rng.choice([2.0, 3.0, 0.5, -1.5]))
        yield "pow_scalar", lambda x, k=k, p=p: _weighted(ag.power(x, p), k), [rng.uniform(0.5, 2.0, size=s)]
        yield "pow_tensor", lambda x, y, k=k: _weighted(ag.power(x, y), k), [rng.uniform(0.5, 2.0, size=s), rng.uniform(-1, 2, size=bshape)]
        axes = tuple(sorted(set(int(v) for v in rng.integers(0, len(s), size=int(rng.integers(1, len(s) + 1))))))
        keep = bool(rng.random() < 0.5)
        yield "sum", lambda x, k=k, ax=axes, kd=keep: _weighted(ag.sum(x, ax, kd), k), [a]
        yield "mean", lambda x, k=k, ax=axes, kd=keep: _weighted(ag.mean(x, ax, kd), k), [a]
        yield "reshape", lambda x, k=k: _weighted(ag.reshape(x, (-1,)), k), [a]
        perm = tuple(int(v) for v in rng.permutation(len(s)))
        yield "transpose", lambda x, k=k, perm=perm: _weighted(ag.transpose(x, perm), k), [a]
        yield "broadcast_to", lambda x, k=k, s=s: _weighted(ag.broadcast_to(x, s), k), [b]
        yield "concat", lambda x, y, k=k: _weighted(ag.concat([x, y], axis=0), k), [a, rng.normal(size=(2,) + s[1:])]
        idx = tuple(rng.integers(0, n, size=5) for n in s)
        yield "take", lambda x, k=k, idx=idx: _weighted(ag.take(x, idx), k), [a]

        m, kk, n = (int(v) for v in rng.integers(1, 5, size=3))
        yield "matmul", lambda x, y, k=k: _weighted(ag.matmul(x, y), k), [rng.normal(size=(m, kk)), rng.normal(size=(kk, n))]

        act_in = _away_from_zero(rng, s, 0.05)
        yield "relu", lambda x, k=k: _weighted(ag.relu(x), k), [act_in]
        yield "leaky_relu", lambda x, k=k: _weighted(ag.leaky_relu(x, 0.2), k), [act_in]
        yield "elu", lambda x, k=k: _weighted(ag.elu(x, 1.0), k), [act_in]
        yield "tanh", lambda x, k=k: _weighted(ag.tanh(x), k), [a]
        yield "sigmoid", lambda x, k=k: _weighted(ag.sigmoid(x), k), [a]

        bsz, c, f = (int(v) for v in rng.integers(1, 3, size=3))
        kh, kw = (int(v) for v in rng.integers(1, 4, size=2))
        stride = tuple(int(v) for v in rng.integers(1, 3, size=2))
        dil = tuple(int(v) for v in rng.integers(1, 3, size=2))
        pad = tuple(int(v) for v in rng.integers(0, 3, size=2))
        h = int(rng.integers(dil[0] * (kh - 1) + 1, 8))
        w = int(rng.integers(dil[1] * (kw - 1) + 1, 8))
        conv_inputs = [rng.normal(size=(bsz, c, h, w)), rng.normal(size=(f, c, kh, kw)), rng.normal(size=(f,))]
        yield "conv2d", (
            lambda x, wt, bias, k=k, st=stride, pd=pad, dl=dil:
            _weighted(ag.conv2d(x, wt, bias, stride=st, padding=pd, dilation=dl), k)
        ), conv_inputs
        factor = int(rng.integers(1, 4))
        yield "upsample_nearest", lambda x, k=k, fc=factor: _weighted(ag.upsample_nearest(x, fc), k), [rng.normal(size=(bsz, c, 3, 2))]


def gradient_suite(dtype=np.float64, tol: float = 1e-4, seed: int = 0) -> list[CheckResult]:
    rng = np.random.default_rng(seed)
    eps = 1e-6 if np.dtype(dtype) == np.float64 else 1e-2
    worst: dict[str, float] = {}
    for name, f, inputs in op_cases(rng):
        err = check_gradients(f, inputs, eps, dtype)
        worst[name] = max(worst.get(name, 0.0), err)
    return [CheckResult("gradient", name, err, tol) for name, err in worst.items()]


def small_critic(dtype="float64", seed: int = 3):
    """Conv critic on (B, 4, 8, 8): one 5x5 stride-2 conv and a linear head (< 1k parameters)."""
    return build_critic(CriticConfig("global", 8, 2, seed=seed, dtype=dtype))


def double_backprop_suite(dtype=np.float64, tol: float = 1e-3, seed: int = 0) -> list[CheckResult]:
    rng = np.random.default_rng(seed)
    results = []

    # linear critic D(x) = <w, x>: penalty 10 (|w| - 1)^2 = 160, d/dw = [48, 64]
    w = Tensor(np.array([3.0, 4.0]), requires_grad=True)
    x_hat = Tensor(rng.normal(size=(1, 2)), requires_grad=True)
    pen = losses.gradient_penalty(lambda x: ag.reshape(ag.matmul(x, ag.reshape(w, (2, 1))), (-1,)), x_hat, 10.0)
    (gw,) = ag.grad(pen, [w])
    results.append(CheckResult("double_backprop", "linear_penalty_value", abs(pen.item() - 160.0), 1e-9))
    results.append(CheckResult("double_backprop", "linear_penalty_grad", float(np.abs(gw.data - [48.0, 64.0]).max()), 1e-9))

    critic = small_critic(np.dtype(dtype).name, seed=seed + 3)
    x = rng.uniform(-1, 1, size=(3, 4, 8, 8)).astype(dtype)
    # with leaky-relu the input gradient is locally independent of the biases,
    # so the penalty only reaches the weights; bias differences must vanish
    weights = [(n, p) for n, p in critic.params.items() if n.endswith("weight")]
    biases = [(n, p) for n, p in critic.params.items() if n.endswith("bias")]
    pen = losses.gradient_penalty(critic, Tensor(x), 10.0)
    analytic = ag.grad(pen, [p for _, p in weights])
    eps = 1e-6 if np.dtype(dtype) == np.float64 else 1e-2

    def numeric_grad(p):
        orig = p.data.copy()

        def f(v):
            p.data = v.data
            with ag.enable_grad():
                return losses.gradient_penalty(critic, Tensor(x), 10.0)

        try:
            return ag.finite_difference_gradient(f, Tensor(orig), eps).data
        finally:
            p.data = orig

    worst = max(relative_error(a.data, numeric_grad(p)) for (_, p), a in zip(weights, analytic))
    bias_fd = max(float(np.abs(numeric_grad(p)).max()) for _, p in biases)
    results.append(CheckResult("double_backprop", f"critic_penalty_weights({critic.params.count()}p)", worst, tol))
    results.append(CheckResult("double_backprop", "critic_penalty_bias_fd_zero", bias_fd, 1e-6))
    return results


def metric_suite(seed: int = 0, tol: float = 1e-6) -> list[CheckResult]:
    rng = np.random.default_rng(seed)
    a = rng.uniform(0, 1, size=(16, 16))
    b = np.clip(a + rng.normal(0, 0.1, size=a.shape), 0, 1)
    out = [
        CheckResult("metric_oracle", "psnr", abs(metrics.psnr(b, a) - oracles.psnr_direct(b, a)), tol),
        CheckResult("metric_oracle", "ssim", abs(metrics.ssim(b, a) - oracles.ssim_direct(b, a)), tol),
    ]
    gt = rng.uniform(0.5, 10, size=(8, 8))
    pred = gt * rng.uniform(0.8, 1.2, size=gt.shape)
    fast = metrics.depth_metrics(pred, gt)
    slow = oracles.depth_metrics_direct(pred, gt)
    for k in fast:
        out.append(CheckResult("metric_oracle", k, abs(fast[k] - slow[k]), tol))
    worst = 0.0
    for _ in range(100):
        n = int(rng.integers(1, 7))
        u, v = rng.normal(size=n), rng.normal(size=n)
        worst = max(worst, abs(metrics.emd_1d(u, v) - oracles.emd_bruteforce(u, v)))
    out.append(CheckResult("metric_oracle", "emd_1d_vs_bruteforce", worst, 1e-12))
    return out


def run_all(dtype=np.float64, tol: float = 1e-4) -> list[CheckResult]:
    results = gradient_suite(dtype, tol)
    results += double_backprop_suite(dtype, max(tol, 1e-3))
    results += metric_suite()
    return results
