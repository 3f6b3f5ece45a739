"""Layer specs, parameter initialization and a named parameter registry."""

from __future__ import annotations

import math
from collections import OrderedDict
from dataclasses import dataclass, field
from typing import Iterator

import numpy as np

from . import autograd as ag
from .autograd import Tensor

LAYER_KINDS = ("conv", "deconv_block", "fc", "activation")


def _pair(v) -> tuple[int, int]:
    if isinstance(v, int):
        return v, v
    return int(v[0]), int(v[1])


@dataclass(frozen=True)
class LayerSpec:
    kind: str
    in_channels: int = 0
    out_channels: int = 0
    kernel: tuple[int, int] = (3, 3)
    stride: tuple[int, int] = (1, 1)
    dilation: tuple[int, int] = (1, 1)
    padding: tuple[int, int] | str = "same"
    activation: str = "none"
    activation_param: float | None = None
    upsample: int = 2

    def __post_init__(self):
        if self.kind not in LAYER_KINDS:
            raise ValueError(f"unknown layer kind {self.kind!r}")
        object.__setattr__(self, "kernel", _pair(self.kernel))
        object.__setattr__(self, "stride", _pair(self.stride))
        object.__setattr__(self, "dilation", _pair(self.dilation))
        if self.padding != "same":
            object.__setattr__(self, "padding", _pair(self.padding))
        if min(self.dilation) < 1 or min(self.stride) < 1:
            raise ValueError("stride and dilation must be >= 1")

    @property
    def resolved_padding(self) -> tuple[int, int]:
        """Zero padding; "same" keeps H, W for stride 1 (odd kernels)."""
        if self.padding == "same":
            (kh, kw), (dh, dw) = self.kernel, self.dilation
            return dh * (kh - 1) // 2, dw * (kw - 1) // 2
        return self.padding

    @property
    def has_params(self) -> bool:
        return self.kind in ("conv", "deconv_block", "fc")

    def fans(self) -> tuple[int, int]:
        if self.kind == "fc":
            return self.in_channels, self.out_channels
        kh, kw = self.kernel
        return self.in_channels * kh * kw, self.out_channels * kh * kw

    def param_count(self) -> int:
        if not self.has_params:
            return 0
        fan_in, _ = self.fans()
        return self.out_channels * fan_in + self.out_channels


def conv(cin, cout, kernel=3, stride=1, dilation=1, act="none", padding="same", **kw) -> LayerSpec:
    return LayerSpec(
        "conv", cin, cout, kernel=kernel, stride=stride, dilation=dilation,
        padding=padding, activation=act, **kw,
    )


def glorot_bound(spec: LayerSpec) -> float:
    fan_in, fan_out = spec.fans()
    return math.sqrt(6.0 / (fan_in + fan_out))


def init_params(spec: LayerSpec, rng: np.random.Generator, dtype=np.float32) -> dict[str, Tensor]:
    """Glorot-uniform weights, zero biases."""
    if not spec.has_params:
        return {}
    bound = glorot_bound(spec)
    if spec.kind == "fc":
        shape = (spec.in_channels, spec.out_channels)
    else:
        shape = (spec.out_channels, spec.in_channels, *spec.kernel)
    weight = rng.uniform(-bound, bound, size=shape).astype(dtype)
    bias = np.zeros(spec.out_channels, dtype=dtype)
    return {
        "weight": Tensor(weight, requires_grad=True),
        "bias": Tensor(bias, requires_grad=True),
    }


def layer_forward(spec: LayerSpec, params: dict[str, Tensor], x: Tensor) -> Tensor:
    if spec.kind == "activation":
        return ag.activation(spec.activation, x, spec.activation_param)
    if spec.kind == "fc":
        if x.ndim != 2 or x.shape[1] != spec.in_channels:
            raise ag.ShapeError(f"fc expects (B, {spec.in_channels}), got {x.shape}")
        y = ag.add(ag.matmul(x, params["weight"]), params["bias"])
    else:
        if x.ndim != 4 or x.shape[1] != spec.in_channels:
            raise ag.ShapeError(
                f"{spec.kind} expects {spec.in_channels} input channels, got shape {x.shape}"
            )
        if spec.kind == "deconv_block":
            x = ag.upsample_nearest(x, spec.upsample)
        y = ag.conv2d(
            x, params["weight"], params["bias"],
            stride=spec.stride, padding=spec.resolved_padding, dilation=spec.dilation,
        )
    return ag.activation(spec.activation, y, spec.activation_param)


class ParamStore:
    """Ordered map from dotted parameter names to tensors."""

    def __init__(self):
        self._params: OrderedDict[str, Tensor] = OrderedDict()

    def add(self, name: str, tensor: Tensor) -> None:
        if name in self._params:
            raise KeyError(f"duplicate parameter name {name!r}")
        self._params[name] = tensor

    def add_layer(self, prefix: str, params: dict[str, Tensor]) -> None:
        for key, t in params.items():
            self.add(f"{prefix}.{key}", t)

    def __getitem__(self, name: str) -> Tensor:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __iter__(self) -> Iterator[str]:
        return iter(self._params)

    def __len__(self) -> int:
        return len(self._params)

    def names(self) -> list[str]:
        return list(self._params)

    def items(self):
        return self._params.items()

    def tensors(self) -> list[Tensor]:
        return list(self._params.values())

    def with_prefix(self, prefix: str) -> dict[str, Tensor]:
        p = prefix + "."
        return {k[len(p):]: v for k, v in self._params.items() if k.startswith(p)}

    def count(self) -> int:
        return int(sum(t.size for t in self._params.values()))

    def state(self) -> dict[str, np.ndarray]:
        return {k: v.data for k, v in self._params.items()}

    def load_state(self, state: dict[str, np.ndarray]) -> None:
        missing = set(self._params) ^ set(state)
        if missing:
            raise KeyError(f"parameter names differ: {sorted(missing)}")
        for k, t in self._params.items():
            arr = state[k]
            if arr.shape != t.shape:
                raise ValueError(f"shape mismatch for {k}: {arr.shape} vs {t.shape}")
            t.data = np.array(arr, dtype=t.dtype, copy=True)


@dataclass
class Stack:
    """A named sequence of layers sharing one ParamStore."""

    prefix: str
    layers: list[tuple[str, LayerSpec]] = field(default_factory=list)

    def build(self, store: ParamStore, rng: np.random.Generator, dtype=np.float32) -> "Stack":
        for name, spec in self.layers:
            store.add_layer(f"{self.prefix}.{name}", init_params(spec, rng, dtype))
        return self

    def __call__(self, store: ParamStore, x: Tensor) -> Tensor:
        for name, spec in self.layers:
            params = store.with_prefix(f"{self.prefix}.{name}") if spec.has_params else {}
            x = layer_forward(spec, params, x)
        return x

    def param_count(self) -> int:
        return sum(spec.param_count() for _, spec in self.layers)
