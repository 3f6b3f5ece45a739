"""rgbd-inpaint command line: gen-data, train, infer, eval, ablate, gradcheck."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import autograd as ag
from . import data, metrics, netpbm
from .autograd import Tensor
from .experiments import CLI_VARIANTS, ablate, predictor
from .trainer import TrainConfig, Trainer, load_generator, train

SEED_ENV = "RGBD_INPAINT_SEED"
SEPARATOR = 2
CONFIG_NAME = "resolved_config.json"

log = logging.getLogger("rgbd_inpaint")


class CommandError(RuntimeError):
    pass


def resolve_seed(seed: int | None) -> int:
    if seed is not None:
        return seed
    env = os.environ.get(SEED_ENV)
    if env is None:
        return 0
    try:
        return int(env)
    except ValueError:
        raise CommandError(f"{SEED_ENV}={env!r} is not an integer") from None


def write_resolved(out: Path, command: str, args: argparse.Namespace, **resolved) -> None:
    out.mkdir(parents=True, exist_ok=True)
    flags = {k: v for k, v in vars(args).items() if k not in ("func", "command")}
    doc = {"command": command, "flags": flags, **resolved}
    (out / CONFIG_NAME).write_text(json.dumps(doc, indent=2, sort_keys=True, default=str) + "\n")


def _load_dataset(root, dtype="float32") -> data.Dataset:
    index = data.load_index(root)
    if not index.ids:
        raise CommandError(f"dataset {root} is empty")
    return data.Dataset.from_index(index, np.dtype(dtype))


# ---------------------------------------------------------------------------
# commands


def cmd_gen_data(args) -> int:
    out = Path(args.out)
    seed = resolve_seed(args.seed)
    if args.count < 1:
        raise CommandError("--count must be >= 1")
    try:
        index = data.generate_dataset(out, args.count, args.size, seed, args.dmax)
    except OSError as exc:
        raise CommandError(f"cannot write dataset under {out}: {exc}") from None
    write_resolved(out, "gen-data", args, seed=seed, ids=index.ids, d_max=index.d_max)
    print(f"wrote {len(index.ids)} samples to {out}")
    return 0


def train_config_from_args(args, dataset: data.Dataset, iters: int, seed: int) -> TrainConfig:
    size = args.size if args.size is not None else dataset.image_size
    if size != dataset.image_size:
        raise CommandError(f"--size {size} but dataset images are {dataset.image_size}px")
    return TrainConfig(
        batch_size=args.batch,
        learning_rate=args.lr,
        critic_iters=args.critic_iters,
        total_iters=iters,
        image_size=size,
        lambda_gp=args.lambda_gp,
        beta_adv=args.beta_adv,
        seed=seed,
        checkpoint_every=args.checkpoint_every,
        content_only_warmup_iters=args.warmup,
        variant=CLI_VARIANTS[getattr(args, "variant", "late")],
        base_channels=args.base_channels,
        critic_channels=args.critic_channels,
        adversarial=not args.no_adversarial,
        dtype=args.dtype,
        d_max=dataset.d_max,
    )


def cmd_train(args) -> int:
    out = Path(args.out)
    seed = resolve_seed(args.seed)
    dataset = _load_dataset(args.data)
    config = train_config_from_args(args, dataset, args.iters, seed)
    trainer = None
    if args.resume:
        trainer = Trainer.from_checkpoint(args.resume, dataset, args.iters)
        config = trainer.config
    write_resolved(out, "train", args, seed=seed, train_config=config.to_dict())
    result = train(dataset, config, out_dir=out, trainer=trainer)
    print(f"trained {result.trainer.iteration} iterations; checkpoint {result.checkpoint}")
    return 0


def depth_colormap(depth01: np.ndarray) -> np.ndarray:
    """Linear blue (near) to red (far) map of values in [0, 1] to uint8 RGB."""
    v = np.clip(depth01, 0.0, 1.0)
    rgb = np.stack([v, np.zeros_like(v), 1.0 - v], axis=-1)
    return np.rint(rgb * 255).astype(np.uint8)


def make_grid(rows: list[list[np.ndarray]], sep: int = SEPARATOR) -> np.ndarray:
    """Tile equally sized HxWx3 uint8 panels with white separators between them."""
    h, w = rows[0][0].shape[:2]
    ncols = max(len(r) for r in rows)
    out = np.full((len(rows) * h + (len(rows) - 1) * sep, ncols * w + (ncols - 1) * sep, 3), 255, np.uint8)
    for i, row in enumerate(rows):
        for j, panel in enumerate(row):
            y, x = i * (h + sep), j * (w + sep)
            out[y : y + h, x : x + w] = panel
    return out


def inpaint_arrays(G, rgb: np.ndarray, depth: np.ndarray, m: np.ndarray, d_max: float):
    """Inpaint one raw sample; known pixels are copied from the input unchanged."""
    dtype = np.dtype(G.config.dtype)
    x_c = data.normalize_rgb(rgb).transpose(2, 0, 1)[None].astype(dtype)
    x_d = data.normalize_depth(depth, d_max)[None, None].astype(dtype)
    mm = m[None, None].astype(dtype)
    with ag.no_grad():
        raw_c, raw_d = G(Tensor(x_c * mm), Tensor(x_d * mm), Tensor(mm))
    pred_rgb = np.clip(np.rint(data.denormalize_rgb(raw_c.data[0].transpose(1, 2, 0).astype(np.float64))), 0, 255)
    pred_depth = np.clip(data.denormalize_depth(raw_d.data[0, 0].astype(np.float64), d_max), 0, d_max)
    known = m == 1
    out_rgb = np.where(known[..., None], rgb, pred_rgb).astype(np.uint8)
    out_depth = np.where(known, depth, pred_depth)
    return out_rgb, out_depth


def cmd_infer(args) -> int:
    out = Path(args.out)
    G, config = load_generator(args.ckpt)
    d_max = config.d_max
    rgb = netpbm.read(args.rgb)
    if rgb.ndim != 3:
        raise CommandError(f"{args.rgb}: expected a colour PPM")
    levels = netpbm.read(args.depth)
    if levels.ndim != 2:
        raise CommandError(f"{args.depth}: expected a greyscale PGM")
    size = config.image_size
    if rgb.shape[:2] != (size, size) or levels.shape != (size, size):
        raise CommandError(
            f"checkpoint expects {size}x{size} images, got RGB {rgb.shape[1]}x{rgb.shape[0]} "
            f"and depth {levels.shape[1]}x{levels.shape[0]}"
        )
    depth = data.dequantize_depth(levels, d_max)
    m, bbox = data.load_external_mask(args.mask, size)
    out_rgb, out_depth = inpaint_arrays(G, rgb, depth, m, d_max)

    out.mkdir(parents=True, exist_ok=True)
    netpbm.write(out / "inpainted.ppm", out_rgb, 255)
    # known pixels keep their original quantized levels
    out_levels = np.where(m == 1, levels, data.quantize_depth(out_depth, d_max)).astype(np.uint16)
    netpbm.write(out / "inpainted_depth.pgm", out_levels, data.DEPTH_LEVELS)

    hole = m == 0
    masked_rgb = np.where(hole[..., None], 255, rgb).astype(np.uint8)
    masked_depth = np.where(hole[..., None], 255, depth_colormap(depth / d_max))
    grid = make_grid([
        [masked_rgb, out_rgb, rgb.astype(np.uint8)],
        [masked_depth.astype(np.uint8), depth_colormap(out_depth / d_max), depth_colormap(depth / d_max)],
    ])
    netpbm.write(out / "grid.ppm", grid, 255)
    write_resolved(out, "infer", args, d_max=d_max, image_size=size,
                   hole_pixels=int(hole.sum()), hole_bbox=None if bbox is None else bbox.as_tuple())
    print(f"wrote {out / 'inpainted.ppm'}, {out / 'inpainted_depth.pgm'}, {out / 'grid.ppm'}")
    return 0


def cmd_eval(args) -> int:
    out = Path(args.out)
    seed = resolve_seed(args.seed)
    G, config = load_generator(args.ckpt)
    dataset = _load_dataset(args.data, config.dtype)
    if dataset.image_size != config.image_size:
        raise CommandError(f"checkpoint expects {config.image_size}px images, dataset has {dataset.image_size}px")
    report = metrics.evaluate(predictor(G), dataset, seed=seed)
    report.meta["checkpoint"] = str(args.ckpt)
    csv_path, json_path = report.write(out, "metrics")
    write_resolved(out, "eval", args, seed=seed, train_config=config.to_dict())
    means = report.mean("full")
    print(" ".join(f"{k}={v:.5g}" for k, v in means.items()))
    print(f"wrote {csv_path} and {json_path}")
    return 0


def cmd_ablate(args) -> int:
    out = Path(args.out)
    seed = resolve_seed(args.seed)
    dataset = _load_dataset(args.data)
    base = train_config_from_args(args, dataset, args.iters, seed)
    write_resolved(out, "ablate", args, seed=seed, train_config=base.to_dict())
    result = ablate(dataset, base, out)
    print((out / "ablation.txt").read_text(), end="")
    if not result.traces_match:
        raise CommandError(f"variants saw different batch/mask sequences: {result.trace_hashes}")
    print(f"batch/mask trace hash (all variants): {next(iter(result.trace_hashes.values()))}")
    return 0


def cmd_gradcheck(args) -> int:
    from .gradcheck import run_all

    dtype = np.dtype(args.dtype)
    tol = args.tol if args.tol is not None else (1e-4 if dtype == np.float64 else 2e-2)
    results = run_all(dtype.type, tol)
    for r in results:
        print(r.line())
    failed = [r for r in results if not r.passed]
    if failed:
        first = failed[0]
        print(f"gradcheck failed: {len(failed)} check(s); first: {first.suite}/{first.name} "
              f"max relative error {first.error:.3e} > {first.tol:.1e}", file=sys.stderr)
        return 1
    print(f"all {len(results)} checks passed")
    return 0


# ---------------------------------------------------------------------------
# parser


def _add_train_flags(p: argparse.ArgumentParser, with_variant: bool) -> None:
    p.add_argument("--data", required=True, help="dataset root (index.txt, rgb/, depth/)")
    if with_variant:
        p.add_argument("--variant", choices=sorted(CLI_VARIANTS), default="late")
    p.add_argument("--iters", type=int, default=200, help="outer iterations")
    p.add_argument("--batch", type=int, default=4)
    p.add_argument("--lr", type=float, default=0.001)
    p.add_argument("--size", type=int, default=None, help="image size; must match the dataset")
    p.add_argument("--seed", type=int, default=None, help=f"defaults to ${SEED_ENV}, then 0")
    p.add_argument("--out", required=True)
    p.add_argument("--base-channels", type=int, default=4, help="generator width c")
    p.add_argument("--critic-channels", type=int, default=4)
    p.add_argument("--critic-iters", type=int, default=5)
    p.add_argument("--lambda-gp", type=float, default=10.0)
    p.add_argument("--beta-adv", type=float, default=0.001)
    p.add_argument("--warmup", type=int, default=0, help="content-only iterations before adversarial terms")
    p.add_argument("--no-adversarial", action="store_true", help="skip critics entirely")
    p.add_argument("--checkpoint-every", type=int, default=0)
    p.add_argument("--dtype", choices=("float32", "float64"), default="float32")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rgbd-inpaint", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="write a synthetic RGB-D dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--count", type=int, default=8)
    p.add_argument("--size", type=int, default=64)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--dmax", type=float, default=data.DEFAULT_DMAX)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", help="WGAN-GP training with global and local critics")
    _add_train_flags(p, with_variant=True)
    p.add_argument("--resume", default=None, help="checkpoint to continue from")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("infer", help="inpaint one image pair with a given mask")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--rgb", required=True, help="P6 colour image")
    p.add_argument("--depth", required=True, help="P5 16-bit depth image")
    p.add_argument("--mask", required=True, help="P5 mask, 255 known / 0 hole")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("eval", help="score a checkpoint on a dataset")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("ablate", help="train and score late, early and no fusion")
    _add_train_flags(p, with_variant=False)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("gradcheck", help="gradient, double-backprop and metric oracle suites")
    p.add_argument("--dtype", choices=("float64", "float32"), default="float64")
    p.add_argument("--tol", type=float, default=None)
    p.set_defaults(func=cmd_gradcheck)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except (CommandError, data.DatasetError, netpbm.NetpbmError, ValueError, OSError, RuntimeError) as exc:
        print(f"rgbd-inpaint {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
