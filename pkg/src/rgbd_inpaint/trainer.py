"""Alternating WGAN-GP training: several critic updates, then one generator update."""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import json
import logging
import math
from collections import OrderedDict
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import autograd as ag
from . import checkpoint as ckpt
from . import losses
from .autograd import Tensor
from .data import Dataset, sample_mask
from .models import (
    CriticConfig,
    GeneratorConfig,
    MaskRect,
    build_critic,
    build_generator,
    composite,
    extract_local_patch,
)
from .nn import ParamStore

log = logging.getLogger(__name__)

LOSS_COLUMNS = (
    "iter", "d_global_loss", "d_local_loss", "gp_global", "gp_local",
    "l1_rgb", "l1_depth", "g_adv_global", "g_adv_local", "g_total",
)


class TrainingError(RuntimeError):
    pass


@dataclass
class TrainConfig:
    batch_size: int = 32
    learning_rate: float = 0.001
    critic_iters: int = 5
    total_iters: int = 0
    image_size: int = 64
    alpha: float = 1.0
    lambda_gp: float = 10.0
    beta_adv: float = 0.001
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 0
    checkpoint_every: int = 0
    content_only_warmup_iters: int = 0
    variant: str = "late_fusion"
    base_channels: int = 8
    critic_channels: int = 8
    adversarial: bool = True
    dtype: str = "float32"
    d_max: float = 10.0

    def __post_init__(self):
        if self.critic_iters < 1:
            raise ValueError("critic_iters must be >= 1")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.total_iters < 0:
            raise ValueError("total_iters must be >= 0")
        self.weights  # validates non-negativity

    @property
    def weights(self) -> losses.LossWeights:
        return losses.LossWeights(self.alpha, self.lambda_gp, self.beta_adv)

    @property
    def local_patch(self) -> int:
        return self.image_size // 2

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ValueError(f"unknown config keys {sorted(unknown)}")
        return cls(**d)

    def generator_config(self) -> GeneratorConfig:
        return GeneratorConfig(self.variant, self.image_size, self.base_channels, seed=self.seed, dtype=self.dtype)

    def critic_config(self, scope: str) -> CriticConfig:
        size = self.image_size if scope == "global" else self.local_patch
        offset = 1 if scope == "global" else 2
        return CriticConfig(scope, size, self.critic_channels, seed=self.seed + offset, dtype=self.dtype)


# ---------------------------------------------------------------------------
# Adam


def adam_step(param, grad, m, v, lr, betas, eps, t):
    """One bias-corrected Adam update on arrays; returns (param, m, v)."""
    if t < 1:
        raise ValueError("Adam step counter starts at 1")
    b1, b2 = betas
    m = b1 * m + (1 - b1) * grad
    v = b2 * v + (1 - b2) * grad * grad
    m_hat = m / (1 - b1 ** t)
    v_hat = v / (1 - b2 ** t)
    param = param - lr * m_hat / (np.sqrt(v_hat) + eps)
    return param, m, v


class Adam:
    def __init__(self, params: ParamStore, lr: float, betas=(0.9, 0.999), eps: float = 1e-8):
        self.params = params
        self.lr = lr
        self.betas = betas
        self.eps = eps
        self.t = 0
        self.m = {k: np.zeros_like(p.data) for k, p in params.items()}
        self.v = {k: np.zeros_like(p.data) for k, p in params.items()}

    def step(self, grads: list[Tensor]) -> None:
        self.t += 1
        for (name, p), g in zip(self.params.items(), grads):
            p.data, self.m[name], self.v[name] = adam_step(
                p.data, g.data, self.m[name], self.v[name], self.lr, self.betas, self.eps, self.t
            )

    def state(self, prefix: str) -> "OrderedDict[str, np.ndarray]":
        out = OrderedDict()
        for name in self.params:
            out[f"{prefix}.m.{name}"] = self.m[name]
            out[f"{prefix}.v.{name}"] = self.v[name]
        return out

    def load_state(self, prefix: str, tensors: dict, t: int) -> None:
        self.t = t
        for name in self.params:
            self.m[name] = tensors[f"{prefix}.m.{name}"].copy()
            self.v[name] = tensors[f"{prefix}.v.{name}"].copy()


# ---------------------------------------------------------------------------
# batches


@dataclass
class Batch:
    indices: np.ndarray
    x_c: np.ndarray
    x_d: np.ndarray
    m: np.ndarray  # (B, 1, S, S)
    rects: list[MaskRect]
    t: np.ndarray | None = None

    def digest(self) -> str:
        h = hashlib.sha256(self.indices.astype("<i8").tobytes())
        for r in self.rects:
            h.update(np.asarray(r.as_tuple(), dtype="<i8").tobytes())
        return h.hexdigest()[:16]


def draw_batch(dataset: Dataset, rng: np.random.Generator, batch_size: int, with_t: bool) -> Batch:
    """Random batch, one fresh hole per sample shared by its RGB and depth."""
    n = len(dataset)
    idx = rng.choice(n, size=batch_size, replace=n < batch_size)
    x_c, x_d = dataset.batch(idx)
    rects, masks = [], []
    for _ in range(batch_size):
        rect, m = sample_mask(rng, dataset.image_size)
        rects.append(rect)
        masks.append(m)
    m = np.stack(masks)[:, None].astype(x_c.dtype)
    t = rng.random(batch_size).astype(x_c.dtype) if with_t else None
    return Batch(np.asarray(idx), x_c, x_d, m, rects, t)


def _check_finite(values: dict[str, float], where: str) -> None:
    bad = {k: v for k, v in values.items() if not math.isfinite(v)}
    if bad:
        raise TrainingError(f"non-finite loss in {where}: {bad}")


def _rgbd(c: Tensor, d: Tensor) -> Tensor:
    return ag.concat([c, d], axis=1)


def critic_step(batch: Batch, G, D_global, D_local, config: TrainConfig, opt_global: Adam, opt_local: Adam) -> dict:
    """One update of both critics on real, composited and interpolated RGB-D."""
    z_c = Tensor(batch.x_c * batch.m)
    z_d = Tensor(batch.x_d * batch.m)
    m = Tensor(batch.m)
    with ag.no_grad():
        raw_c, raw_d = G(z_c, z_d, m)
        fake = _rgbd(composite(raw_c, z_c, m), composite(raw_d, z_d, m))
    real = Tensor(np.concatenate([batch.x_c, batch.x_d], axis=1))
    fake = Tensor(fake.data)

    out = {}
    p = config.local_patch
    views = (
        ("global", D_global, opt_global, real, fake),
        ("local", D_local, opt_local,
         extract_local_patch(real, batch.rects, p), extract_local_patch(fake, batch.rects, p)),
    )
    for scope, critic, opt, r, f in views:
        wl = losses.wgan_critic_loss(critic(r), critic(f))
        total = wl
        gp_val = 0.0
        if config.lambda_gp > 0:
            x_hat = losses.interpolate_samples(Tensor(r.data), Tensor(f.data), batch.t)
            gp = losses.gradient_penalty(critic, x_hat, config.lambda_gp)
            total = ag.add(wl, gp)
            gp_val = gp.item()
        out[f"d_{scope}_loss"] = wl.item()
        out[f"gp_{scope}"] = gp_val
        _check_finite({k: v for k, v in out.items() if k.endswith(scope)}, f"{scope} critic step")
        grads = ag.grad(total, critic.parameters())
        opt.step(grads)
    return out


def generator_step(batch: Batch, G, D_global, D_local, config: TrainConfig, opt_g: Adam, adversarial: bool = True) -> dict:
    """One update of the generator: l1 content loss plus weighted critic scores."""
    z_c = Tensor(batch.x_c * batch.m)
    z_d = Tensor(batch.x_d * batch.m)
    m = Tensor(batch.m)
    x_c, x_d = Tensor(batch.x_c), Tensor(batch.x_d)
    raw_c, raw_d = G(z_c, z_d, m)
    l1_rgb = losses.l1(raw_c, x_c)
    l1_depth = losses.l1(raw_d, x_d)
    content = losses.content_loss(raw_c, x_c, raw_d, x_d, config.alpha)
    out = {"l1_rgb": l1_rgb.item(), "l1_depth": l1_depth.item()}
    use_adv = adversarial and config.beta_adv > 0
    if use_adv:
        fake = _rgbd(composite(raw_c, z_c, m), composite(raw_d, z_d, m))
        adv_g = losses.wgan_generator_loss(D_global(fake))
        adv_l = losses.wgan_generator_loss(D_local(extract_local_patch(fake, batch.rects, config.local_patch)))
        total = losses.generator_objective(content, adv_g, adv_l, config.beta_adv)
        out["g_adv_global"] = adv_g.item()
        out["g_adv_local"] = adv_l.item()
    else:
        total = losses.generator_objective(content, None, None, 0.0)
        out["g_adv_global"] = float("nan")
        out["g_adv_local"] = float("nan")
    out["g_total"] = total.item()
    _check_finite({k: v for k, v in out.items() if not k.startswith("g_adv") or use_adv}, "generator step")
    grads = ag.grad(total, G.parameters())
    opt_g.step(grads)
    return out


# ---------------------------------------------------------------------------
# training state


class Trainer:
    """Models, optimizers, RNG and counters for one training run."""

    def __init__(self, dataset: Dataset, config: TrainConfig):
        if len(dataset) == 0:
            raise TrainingError("dataset is empty")
        if dataset.image_size != config.image_size:
            raise TrainingError(f"dataset images are {dataset.image_size}px, config says {config.image_size}")
        self.config = config
        self.dataset = dataset.astype(np.dtype(config.dtype))
        self.G = build_generator(config.generator_config())
        self.D_global = build_critic(config.critic_config("global"))
        self.D_local = build_critic(config.critic_config("local"))
        betas = (config.adam_beta1, config.adam_beta2)
        self.opt_g = Adam(self.G.params, config.learning_rate, betas, config.adam_eps)
        self.opt_dg = Adam(self.D_global.params, config.learning_rate, betas, config.adam_eps)
        self.opt_dl = Adam(self.D_local.params, config.learning_rate, betas, config.adam_eps)
        self.rng = np.random.default_rng([config.seed, 0x5EED])
        self.iteration = 0
        self.counters = {"critic_updates": 0, "generator_updates": 0}

    def adversarial_now(self) -> bool:
        return self.config.adversarial and self.iteration >= self.config.content_only_warmup_iters

    def run_iteration(self) -> tuple[dict, list[str]]:
        """One outer iteration; returns the loss row and per-draw batch digests."""
        cfg = self.config
        row: dict[str, float] = {"iter": self.iteration + 1}
        digests = []
        if cfg.adversarial:
            critic_rows = []
            for _ in range(cfg.critic_iters):
                batch = draw_batch(self.dataset, self.rng, cfg.batch_size, with_t=True)
                digests.append(batch.digest())
                critic_rows.append(critic_step(batch, self.G, self.D_global, self.D_local, cfg, self.opt_dg, self.opt_dl))
                self.counters["critic_updates"] += 1
            for key in ("d_global_loss", "d_local_loss", "gp_global", "gp_local"):
                row[key] = float(np.mean([r[key] for r in critic_rows]))
        before = self.counters["critic_updates"]
        batch = draw_batch(self.dataset, self.rng, cfg.batch_size, with_t=False)
        digests.append(batch.digest())
        row.update(generator_step(batch, self.G, self.D_global, self.D_local, cfg, self.opt_g, self.adversarial_now()))
        self.counters["generator_updates"] += 1
        assert self.counters["critic_updates"] == before
        self.iteration += 1
        expected = self.iteration * cfg.critic_iters if cfg.adversarial else 0
        if self.counters["critic_updates"] != expected or self.counters["generator_updates"] != self.iteration:
            raise TrainingError(f"update counters out of step: {self.counters} at iteration {self.iteration}")
        return row, digests

    # -- checkpointing -------------------------------------------------
    def tensors(self) -> "OrderedDict[str, np.ndarray]":
        out = OrderedDict()
        for prefix, store in (("G", self.G.params), ("Dg", self.D_global.params), ("Dl", self.D_local.params)):
            for name, t in store.items():
                out[f"{prefix}.{name}"] = t.data
        out.update(self.opt_g.state("adam.G"))
        out.update(self.opt_dg.state("adam.Dg"))
        out.update(self.opt_dl.state("adam.Dl"))
        return out

    def meta(self) -> dict:
        return {
            "format": "rgbd-inpaint-checkpoint",
            "config": self.config.to_dict(),
            "iteration": self.iteration,
            "counters": dict(self.counters),
            "adam_t": {"G": self.opt_g.t, "Dg": self.opt_dg.t, "Dl": self.opt_dl.t},
            "rng_state": self.rng.bit_generator.state,
        }

    def save(self, path) -> None:
        ckpt.save(path, self.tensors(), self.meta())

    def load_state(self, tensors: dict, meta: dict) -> None:
        for prefix, store in (("G", self.G.params), ("Dg", self.D_global.params), ("Dl", self.D_local.params)):
            store.load_state({name: tensors[f"{prefix}.{name}"] for name in store})
        t = meta["adam_t"]
        self.opt_g.load_state("adam.G", tensors, t["G"])
        self.opt_dg.load_state("adam.Dg", tensors, t["Dg"])
        self.opt_dl.load_state("adam.Dl", tensors, t["Dl"])
        self.rng.bit_generator.state = meta["rng_state"]
        self.iteration = int(meta["iteration"])
        self.counters = dict(meta["counters"])

    @classmethod
    def from_checkpoint(cls, path, dataset: Dataset, total_iters: int | None = None) -> "Trainer":
        tensors, meta = ckpt.load(path)
        cfg = dict(meta["config"])
        if total_iters is not None:
            cfg["total_iters"] = total_iters
        trainer = cls(dataset, TrainConfig.from_dict(cfg))
        trainer.load_state(tensors, meta)
        return trainer


def load_generator(path):
    """Generator and training config from a checkpoint file."""
    tensors, meta = ckpt.load(path)
    config = TrainConfig.from_dict(meta["config"])
    G = build_generator(config.generator_config())
    G.params.load_state({name: tensors[f"G.{name}"] for name in G.params})
    return G, config


def _fmt(v) -> str:
    if isinstance(v, int):
        return str(v)
    return "" if v is None or (isinstance(v, float) and math.isnan(v)) else repr(float(v))


@dataclass
class TrainResult:
    trainer: Trainer
    rows: list[dict] = field(default_factory=list)
    digests: list[list[str]] = field(default_factory=list)
    checkpoint: Path | None = None

    @property
    def trace_hash(self) -> str:
        h = hashlib.sha256()
        for ds in self.digests:
            h.update(",".join(ds).encode())
        return h.hexdigest()


def write_loss_csv(path, rows, append: bool = False) -> None:
    new = not append or not Path(path).exists()
    with open(path, "a" if append else "w", newline="") as fh:
        w = csv.writer(fh)
        if new:
            w.writerow(LOSS_COLUMNS)
        for r in rows:
            w.writerow([_fmt(r.get(c)) for c in LOSS_COLUMNS])


def train(dataset: Dataset, config: TrainConfig, out_dir=None, trainer: Trainer | None = None) -> TrainResult:
    """Run until ``config.total_iters`` outer iterations; optionally resume ``trainer``.

    With ``out_dir`` set, writes losses.csv, data_trace.csv, periodic
    ckpt_<iter>.bin files and final.ckpt.
    """
    if trainer is None:
        trainer = Trainer(dataset, config)
    else:
        trainer.config.total_iters = config.total_iters
    result = TrainResult(trainer)
    out = Path(out_dir) if out_dir is not None else None
    resumed = trainer.iteration > 0
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        (out / "config.json").write_text(json.dumps(trainer.config.to_dict(), indent=2, sort_keys=True))
        if not resumed:
            write_loss_csv(out / "losses.csv", [])
            (out / "data_trace.csv").write_text("iter,digests\n")
            trainer.save(out / "ckpt_000000.bin")
    while trainer.iteration < trainer.config.total_iters:
        row, digests = trainer.run_iteration()
        result.rows.append(row)
        result.digests.append(digests)
        if out is not None:
            write_loss_csv(out / "losses.csv", [row], append=True)
            with open(out / "data_trace.csv", "a") as fh:
                fh.write(f"{trainer.iteration},{' '.join(digests)}\n")
            every = trainer.config.checkpoint_every
            if every and trainer.iteration % every == 0:
                trainer.save(out / f"ckpt_{trainer.iteration:06d}.bin")
        if trainer.iteration % 50 == 0:
            log.info("iter %d: %s", trainer.iteration, {k: round(v, 5) for k, v in row.items() if isinstance(v, float)})
    if out is not None:
        result.checkpoint = out / "final.ckpt"
        trainer.save(result.checkpoint)
    return result
