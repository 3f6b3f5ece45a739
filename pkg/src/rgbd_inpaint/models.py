"""Generator variants (late, early and no fusion), WGAN critics, compositing
and local-patch extraction."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import autograd as ag
from .autograd import Tensor
from .nn import LayerSpec, ParamStore, Stack, conv

VARIANTS = ("late_fusion", "early_fusion", "no_fusion")
GEN_ACT = "elu"
CRITIC_ACT = "leaky_relu"


@dataclass(frozen=True)
class MaskRect:
    top: int
    left: int
    height: int
    width: int

    def __post_init__(self):
        if self.height <= 0 or self.width <= 0:
            raise ValueError(f"degenerate rectangle {self}")
        if self.top < 0 or self.left < 0:
            raise ValueError(f"rectangle outside image: {self}")

    def fits(self, size: int) -> bool:
        return self.top + self.height <= size and self.left + self.width <= size

    def as_tuple(self) -> tuple[int, int, int, int]:
        return self.top, self.left, self.height, self.width


@dataclass(frozen=True)
class GeneratorConfig:
    variant: str = "late_fusion"
    image_size: int = 64
    base_channels: int = 8
    fusion_dilations: tuple[int, ...] = (2, 4, 8, 16)
    seed: int = 0
    dtype: str = "float32"

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}; expected one of {VARIANTS}")
        if self.image_size < 4 or self.image_size % 4:
            raise ValueError(f"image_size must be a positive multiple of 4, got {self.image_size}")
        if len(self.fusion_dilations) != 4:
            raise ValueError("fusion_dilations needs exactly 4 entries")
        object.__setattr__(self, "fusion_dilations", tuple(int(d) for d in self.fusion_dilations))
        if self.base_channels < 1:
            raise ValueError("base_channels must be >= 1")


def _encoder(prefix: str, cin: int, c: int) -> Stack:
    return Stack(prefix, [
        ("conv1", conv(cin, c, kernel=5, act=GEN_ACT)),
        ("conv2", conv(c, 2 * c, stride=2, act=GEN_ACT)),
        ("conv3", conv(2 * c, 4 * c, stride=2, act=GEN_ACT)),
    ])


def _middle(prefix: str, cin: int, c: int, dilations) -> Stack:
    layers = [("conv_in", conv(cin, 8 * c, act=GEN_ACT))]
    for i, d in enumerate(dilations, start=1):
        layers.append((f"dilated{i}", conv(8 * c, 8 * c, dilation=d, act=GEN_ACT)))
    layers.append(("conv_out", conv(8 * c, 8 * c, act=GEN_ACT)))
    return Stack(prefix, layers)


def _decoder(prefix: str, c: int, cout: int) -> Stack:
    return Stack(prefix, [
        ("up1", LayerSpec("deconv_block", 8 * c, 2 * c, activation=GEN_ACT)),
        ("up2", LayerSpec("deconv_block", 2 * c, c, activation=GEN_ACT)),
        ("head", conv(c, cout, act="tanh")),
    ])


class GeneratorModel:
    """Inpainting network. Call with (z_c, z_d, m) to get raw (rgb, depth)."""

    def __init__(self, config: GeneratorConfig, params: ParamStore, stacks: dict[str, Stack]):
        self.config = config
        self.params = params
        self.stacks = stacks

    def __call__(self, z_c: Tensor, z_d: Tensor, m: Tensor) -> tuple[Tensor, Tensor]:
        return generator_forward(self, z_c, z_d, m)

    def parameters(self) -> list[Tensor]:
        return self.params.tensors()


def build_generator(config: GeneratorConfig) -> GeneratorModel:
    c = config.base_channels
    dil = config.fusion_dilations
    if config.variant == "late_fusion":
        stacks = {
            "rgb_encoder": _encoder("rgb_encoder", 4, c),
            "depth_encoder": _encoder("depth_encoder", 2, c),
            "fusion": _middle("fusion", 8 * c, c, dil),
            "rgb_decoder": _decoder("rgb_decoder", c, 3),
            "depth_decoder": _decoder("depth_decoder", c, 1),
        }
    elif config.variant == "early_fusion":
        stacks = {
            "encoder": _encoder("encoder", 5, c),
            "middle": _middle("middle", 4 * c, c, dil),
            "decoder": _decoder("decoder", c, 4),
        }
    else:
        stacks = {}
        for branch, cin, cout in (("rgb_net", 4, 3), ("depth_net", 2, 1)):
            stacks[f"{branch}.encoder"] = _encoder(f"{branch}.encoder", cin, c)
            stacks[f"{branch}.middle"] = _middle(f"{branch}.middle", 4 * c, c, dil)
            stacks[f"{branch}.decoder"] = _decoder(f"{branch}.decoder", c, cout)
    rng = np.random.default_rng(config.seed)
    store = ParamStore()
    dtype = np.dtype(config.dtype)
    for stack in stacks.values():
        stack.build(store, rng, dtype)
    return GeneratorModel(config, store, stacks)


def _check_inputs(model: GeneratorModel, z_c: Tensor, z_d: Tensor, m: Tensor) -> None:
    s = model.config.image_size
    b = z_c.shape[0]
    expected = {"z_c": (b, 3, s, s), "z_d": (b, 1, s, s), "m": (b, 1, s, s)}
    for name, t in (("z_c", z_c), ("z_d", z_d), ("m", m)):
        if t.shape != expected[name]:
            raise ag.ShapeError(f"{name} has shape {t.shape}, expected {expected[name]}")


def generator_forward(model: GeneratorModel, z_c: Tensor, z_d: Tensor, m: Tensor):
    _check_inputs(model, z_c, z_d, m)
    st, p = model.stacks, model.params
    variant = model.config.variant
    if variant == "late_fusion":
        f_c = st["rgb_encoder"](p, ag.concat([z_c, m], axis=1))
        f_d = st["depth_encoder"](p, ag.concat([z_d, m], axis=1))
        h = st["fusion"](p, ag.concat([f_c, f_d], axis=1))
        return st["rgb_decoder"](p, h), st["depth_decoder"](p, h)
    if variant == "early_fusion":
        h = st["encoder"](p, ag.concat([z_c, z_d, m], axis=1))
        out = st["decoder"](p, st["middle"](p, h))
        return out[:, 0:3], out[:, 3:4]
    outs = []
    for branch, z in (("rgb_net", z_c), ("depth_net", z_d)):
        h = st[f"{branch}.encoder"](p, ag.concat([z, m], axis=1))
        h = st[f"{branch}.middle"](p, h)
        outs.append(st[f"{branch}.decoder"](p, h))
    return outs[0], outs[1]


def composite(raw: Tensor, z: Tensor, m: Tensor) -> Tensor:
    """Known pixels from ``z``, hole pixels from ``raw``: z + raw * (1 - m)."""
    return ag.add(z, ag.mul(raw, ag.sub(1.0, m)))


def local_window(rect: MaskRect, size: int) -> tuple[int, int, int]:
    """Square (top, left, side) centred on ``rect`` and shifted to lie inside the image."""
    side = max(rect.height, rect.width)
    if side > size:
        raise ValueError(f"rectangle {rect} larger than image {size}")
    top = rect.top + (rect.height - side) // 2
    left = rect.left + (rect.width - side) // 2
    top = min(max(top, 0), size - side)
    left = min(max(left, 0), size - side)
    return top, left, side


def extract_local_patch(x: Tensor, rects, patch: int) -> Tensor:
    """Nearest-neighbour crop of the square around each sample's hole to patch x patch.

    ``rects`` is one MaskRect (applied to every sample) or one per batch element.
    """
    b, c, h, w = x.shape
    if h != w:
        raise ag.ShapeError("local patches need square images")
    if isinstance(rects, MaskRect):
        rects = [rects] * b
    if len(rects) != b:
        raise ValueError(f"{len(rects)} rectangles for batch of {b}")
    offs = (2 * np.arange(patch) + 1)
    rows = np.empty((b, patch), dtype=np.intp)
    cols = np.empty((b, patch), dtype=np.intp)
    for i, rect in enumerate(rects):
        top, left, side = local_window(rect, h)
        idx = (offs * side) // (2 * patch)
        rows[i] = top + idx
        cols[i] = left + idx
    index = (
        np.arange(b)[:, None, None, None],
        np.arange(c)[None, :, None, None],
        rows[:, None, :, None],
        cols[:, None, None, :],
    )
    return ag.take(x, index)


# ---------------------------------------------------------------------------
# critics


@dataclass(frozen=True)
class CriticConfig:
    scope: str = "global"
    input_size: int = 64
    base_channels: int = 8
    in_channels: int = 4
    seed: int = 1
    dtype: str = "float32"

    def __post_init__(self):
        if self.scope not in ("global", "local"):
            raise ValueError(f"critic scope must be global or local, got {self.scope!r}")
        n = self.input_size
        if n < 8 or n & (n - 1):
            raise ValueError(f"critic input_size must be a power of two >= 8, got {n}")


class CriticModel:
    """Stride-2 5x5 conv stack then a linear head; one unbounded score per sample."""

    def __init__(self, config: CriticConfig, params: ParamStore, body: Stack, head: Stack):
        self.config = config
        self.params = params
        self.body = body
        self.head = head

    @property
    def scope(self) -> str:
        return self.config.scope

    @property
    def input_size(self) -> int:
        return self.config.input_size

    def __call__(self, x: Tensor) -> Tensor:
        return critic_forward(self, x)

    def parameters(self) -> list[Tensor]:
        return self.params.tensors()


def build_critic(config: CriticConfig) -> CriticModel:
    n_convs = max(1, int(math.log2(config.input_size // 4)))
    layers = []
    cin, size = config.in_channels, config.input_size
    for i in range(n_convs):
        cout = config.base_channels * min(2 ** i, 8)
        layers.append((f"conv{i + 1}", conv(cin, cout, kernel=5, stride=2, act=CRITIC_ACT)))
        cin, size = cout, size // 2
    body = Stack(config.scope, layers)
    head = Stack(config.scope, [("fc", LayerSpec("fc", cin * size * size, 1))])
    rng = np.random.default_rng(config.seed)
    store = ParamStore()
    dtype = np.dtype(config.dtype)
    body.build(store, rng, dtype)
    head.build(store, rng, dtype)
    return CriticModel(config, store, body, head)


def critic_forward(model: CriticModel, x: Tensor) -> Tensor:
    n, cin = model.config.input_size, model.config.in_channels
    if x.ndim != 4 or x.shape[1:] != (cin, n, n):
        raise ag.ShapeError(f"critic expects (B, {cin}, {n}, {n}), got {x.shape}")
    h = model.body(model.params, x)
    h = ag.reshape(h, (x.shape[0], -1))
    return ag.reshape(model.head(model.params, h), (x.shape[0],))


def mlp_critic(widths=(1, 32, 32, 1), seed: int = 0, dtype: str = "float64") -> tuple[ParamStore, Stack]:
    """Small fully connected critic on flat feature vectors."""
    layers = []
    for i, (a, b) in enumerate(zip(widths[:-1], widths[1:]), start=1):
        last = i == len(widths) - 1
        layers.append((f"fc{i}", LayerSpec("fc", a, b, activation="none" if last else CRITIC_ACT)))
    stack = Stack("mlp", layers)
    store = ParamStore()
    stack.build(store, np.random.default_rng(seed), np.dtype(dtype))
    return store, stack
