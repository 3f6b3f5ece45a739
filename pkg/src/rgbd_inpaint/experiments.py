"""Desk-scale experiments shared by the scripts, the CLI and the acceptance tests."""

from __future__ import annotations

import csv
import dataclasses
import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import autograd as ag
from . import losses, metrics
from .autograd import Tensor
from .data import Dataset, sample_mask
from .models import mlp_critic
from .trainer import Adam, TrainConfig, Trainer, train

log = logging.getLogger(__name__)

CLI_VARIANTS = {"late": "late_fusion", "early": "early_fusion", "none": "no_fusion"}
VARIANT_LABELS = {"late_fusion": "late fusion", "early_fusion": "early fusion", "no_fusion": "no fusion"}


def fixed_masks(count: int, size: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    return np.stack([sample_mask(rng, size)[1] for _ in range(count)])[:, None]


def masked_l1(G, dataset: Dataset, masks: np.ndarray) -> float:
    """Mean |G(z) - x| over hole pixels of all four channels, normalized units."""
    x_c, x_d = dataset.rgb, dataset.depth
    m = masks.astype(x_c.dtype)
    with ag.no_grad():
        raw_c, raw_d = G(Tensor(x_c * m), Tensor(x_d * m), Tensor(m))
    hole = m == 0
    err_c = np.abs(raw_c.data - x_c)[np.broadcast_to(hole, x_c.shape)]
    err_d = np.abs(raw_d.data - x_d)[hole]
    return float(np.concatenate([err_c, err_d]).astype(np.float64).mean())


@dataclass
class OverfitResult:
    initial: float
    final: float
    rows: list[dict]

    @property
    def ratio(self) -> float:
        return self.final / self.initial


def overfit(iters: int = 2000, count: int = 8, size: int = 64, batch_size: int = 4,
            base_channels: int = 4, seed: int = 0, out_dir=None) -> OverfitResult:
    """Generator-only (no adversarial terms) training on a handful of fixed scenes."""
    dataset = Dataset.synthetic(count, size, seed=seed)
    config = TrainConfig(batch_size=batch_size, image_size=size, total_iters=iters, base_channels=base_channels,
                         beta_adv=0.0, adversarial=False, seed=seed)
    masks = fixed_masks(count, size, seed + 7)
    trainer = Trainer(dataset, config)
    before = masked_l1(trainer.G, trainer.dataset, masks)
    result = train(dataset, config, out_dir=out_dir, trainer=trainer)
    after = masked_l1(trainer.G, trainer.dataset, masks)
    return OverfitResult(before, after, result.rows)


@dataclass
class CriticEmdResult:
    estimate: float
    emd: float
    history: list[float]

    @property
    def rel_error(self) -> float:
        return abs(self.estimate - self.emd) / self.emd


def point_sets(n: int = 64, seed: int = 0) -> tuple[np.ndarray, np.ndarray]:
    rng = np.random.default_rng(seed)
    return rng.normal(0.0, 1.0, n), rng.normal(2.5, 0.6, n)


def critic_emd(steps: int = 2000, n: int = 64, seed: int = 0, lr: float = 1e-3,
               lambda_gp: float = 10.0) -> CriticEmdResult:
    """Fit an MLP critic with gradient penalty between two 1-d point sets.

    ``estimate`` is -critic_loss = mean D(real) - mean D(fake) at the end,
    evaluated on the full sets.
    """
    real, fake = point_sets(n, seed)
    store, stack = mlp_critic((1, 32, 32, 1), seed=seed)
    critic = lambda x: ag.reshape(stack(store, x), (-1,))  # noqa: E731
    opt = Adam(store, lr)
    rng = np.random.default_rng(seed + 1)
    xr, xf = Tensor(real[:, None]), Tensor(fake[:, None])
    history = []
    for _ in range(steps):
        t = rng.random(n)
        pair = rng.permutation(n)
        x_hat = losses.interpolate_samples(xr, Tensor(fake[pair][:, None]), t)
        wl = losses.wgan_critic_loss(critic(xr), critic(xf))
        total = ag.add(wl, losses.gradient_penalty(critic, x_hat, lambda_gp))
        opt.step(ag.grad(total, store.tensors()))
        history.append(-wl.item())
    with ag.no_grad():
        estimate = -losses.wgan_critic_loss(critic(xr), critic(xf)).item()
    return CriticEmdResult(estimate, metrics.emd_1d(real, fake), history)


# ---------------------------------------------------------------------------
# fusion-variant ablation


@dataclass
class AblationResult:
    table: dict[str, dict[str, float]]  # variant -> metric -> mean (full image)
    hole_table: dict[str, dict[str, float]]
    trace_hashes: dict[str, str]

    @property
    def traces_match(self) -> bool:
        return len(set(self.trace_hashes.values())) == 1


def predictor(G):
    def predict(z_c, z_d, m):
        with ag.no_grad():
            c, d = G(Tensor(z_c), Tensor(z_d), Tensor(m))
        return c.data, d.data
    return predict


def format_table(table: dict[str, dict[str, float]]) -> str:
    names = metrics.METRIC_NAMES
    width = max(len(v) for v in VARIANT_LABELS.values()) + 2
    lines = ["variant".ljust(width) + "".join(n.rjust(12) for n in names)]
    for variant, row in table.items():
        lines.append(VARIANT_LABELS.get(variant, variant).ljust(width) + "".join(f"{row[n]:12.5g}" for n in names))
    return "\n".join(lines) + "\n"


def write_table_csv(path, table: dict[str, dict[str, float]]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["variant", *metrics.METRIC_NAMES])
        for variant, row in table.items():
            w.writerow([variant, *(repr(row[n]) for n in metrics.METRIC_NAMES)])


def ablate(dataset: Dataset, base: TrainConfig, out_dir, eval_seed: int | None = None) -> AblationResult:
    """Train every fusion variant from the same config and seed, evaluate, tabulate."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    eval_seed = base.seed if eval_seed is None else eval_seed
    table, hole_table, hashes = {}, {}, {}
    for variant in CLI_VARIANTS.values():
        config = dataclasses.replace(base, variant=variant)
        log.info("ablation: training %s for %d iterations", variant, config.total_iters)
        result = train(dataset, config, out_dir=out / variant)
        hashes[variant] = result.trace_hash
        report = metrics.evaluate(predictor(result.trainer.G), dataset, seed=eval_seed)
        report.write(out / variant, "metrics")
        table[variant] = report.mean("full")
        hole_table[variant] = report.mean("hole_only")
    write_table_csv(out / "ablation.csv", table)
    write_table_csv(out / "ablation_hole_only.csv", hole_table)
    text = "full image\n" + format_table(table) + "\nhole only\n" + format_table(hole_table)
    (out / "ablation.txt").write_text(text)
    (out / "trace_hashes.json").write_text(json.dumps(hashes, indent=2, sort_keys=True))
    return AblationResult(table, hole_table, hashes)
