"""RGB-D samples: synthetic scenes, dataset I/O, normalization and masks."""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import autograd as ag
from . import netpbm
from .models import MaskRect

DEFAULT_DMAX = 10.0
DEPTH_LEVELS = 65535


class DatasetError(RuntimeError):
    pass


@dataclass
class RgbdSample:
    """Raw scene: rgb uint8 (S, S, 3) in [0, 255], depth float (S, S) in [0, d_max]."""

    rgb: np.ndarray
    depth: np.ndarray
    id: str = ""
    source: str = ""
    mask: np.ndarray | None = None

    @property
    def size(self) -> int:
        return self.rgb.shape[0]


# ---------------------------------------------------------------------------
# synthetic scenes


def synth_scene(seed: int, size: int, d_max: float = DEFAULT_DMAX, sample_id: str | None = None) -> RgbdSample:
    """Background plane plus 3-6 nearer axis-aligned boxes, painted far to near.

    Colour edges and depth edges coincide because each box has a single
    colour and a single depth.
    """
    if size < 16:
        raise ValueError("synthetic scenes need size >= 16")
    rng = np.random.default_rng(seed)
    ys = np.arange(size) / (size - 1)
    xs = np.arange(size) / (size - 1)

    far_top, far_bottom = rng.uniform(0.75, 0.95, size=2) * d_max
    bg_depth = far_top + (far_bottom - far_top) * ys
    depth = np.repeat(bg_depth[:, None], size, axis=1)

    c_left, c_right = rng.uniform(0, 255, size=(2, 3))
    row = c_left[None, :] + (c_right - c_left)[None, :] * xs[:, None]
    rgb = np.repeat(np.rint(row)[None, :, :], size, axis=0)

    n_boxes = int(rng.integers(3, 7))
    lo, hi = size // 8, size // 2
    boxes = []
    for _ in range(n_boxes):
        h, w = rng.integers(lo, hi + 1, size=2)
        top = int(rng.integers(0, size - h + 1))
        left = int(rng.integers(0, size - w + 1))
        nearest_bg = bg_depth[top : top + h].min()
        box_depth = rng.uniform(0.15 * d_max, 0.9 * nearest_bg)
        color = rng.integers(0, 256, size=3)
        boxes.append((box_depth, top, left, int(h), int(w), color))
    for box_depth, top, left, h, w, color in sorted(boxes, key=lambda b: -b[0]):
        depth[top : top + h, left : left + w] = box_depth
        rgb[top : top + h, left : left + w] = color
    return RgbdSample(
        rgb=rgb.astype(np.uint8),
        depth=depth,
        id=sample_id if sample_id is not None else f"synth_{seed:06d}",
        source="synthetic",
    )


# ---------------------------------------------------------------------------
# normalization


def normalize_rgb(rgb: np.ndarray) -> np.ndarray:
    rgb = np.asarray(rgb, dtype=np.float64)
    if rgb.min(initial=0) < 0 or rgb.max(initial=0) > 255:
        raise ValueError("rgb values must lie in [0, 255]")
    return rgb / 127.5 - 1.0


def normalize_depth(depth: np.ndarray, d_max: float) -> np.ndarray:
    depth = np.asarray(depth, dtype=np.float64)
    if depth.min(initial=0) < 0 or depth.max(initial=0) > d_max:
        raise ValueError(f"depth values must lie in [0, {d_max}]")
    return 2.0 * depth / d_max - 1.0


def denormalize_rgb(x: np.ndarray) -> np.ndarray:
    return (np.asarray(x, dtype=np.float64) + 1.0) * 127.5


def denormalize_depth(x: np.ndarray, d_max: float) -> np.ndarray:
    return (np.asarray(x, dtype=np.float64) + 1.0) * (d_max / 2.0)


def normalize(sample: RgbdSample, d_max: float) -> tuple[np.ndarray, np.ndarray]:
    """Return (rgb (3, S, S), depth (1, S, S)) in [-1, 1]."""
    rgb = normalize_rgb(sample.rgb).transpose(2, 0, 1)
    depth = normalize_depth(sample.depth, d_max)[None]
    return np.ascontiguousarray(rgb), depth


def denormalize(rgb: np.ndarray, depth: np.ndarray, d_max: float, sample_id: str = "") -> RgbdSample:
    """Inverse of ``normalize``; rgb is rounded and clipped to uint8."""
    rgb = np.clip(np.rint(denormalize_rgb(rgb).transpose(1, 2, 0)), 0, 255).astype(np.uint8)
    depth = np.clip(denormalize_depth(np.asarray(depth).reshape(rgb.shape[:2]), d_max), 0, d_max)
    return RgbdSample(rgb=rgb, depth=depth, id=sample_id)


# ---------------------------------------------------------------------------
# masks


def sample_mask(rng: np.random.Generator, size: int) -> tuple[MaskRect, np.ndarray]:
    """Random rectangular hole with sides in [size // 8, size // 2]; m is 1 outside, 0 inside."""
    if size < 8:
        raise ValueError("mask sampling needs size >= 8")
    lo, hi = size // 8, size // 2
    h = int(rng.integers(lo, hi + 1))
    w = int(rng.integers(lo, hi + 1))
    top = int(rng.integers(0, size - h + 1))
    left = int(rng.integers(0, size - w + 1))
    rect = MaskRect(top, left, h, w)
    return rect, rect_mask(rect, size)


def rect_mask(rect: MaskRect, size: int) -> np.ndarray:
    m = np.ones((size, size))
    m[rect.top : rect.top + rect.height, rect.left : rect.left + rect.width] = 0.0
    return m


def apply_mask(x, m):
    """z = x * m; works on arrays and Tensors."""
    if isinstance(x, ag.Tensor) or isinstance(m, ag.Tensor):
        return ag.mul(x, m)
    return np.asarray(x) * np.asarray(m)


def bbox_from_mask(m: np.ndarray) -> MaskRect | None:
    """Bounding box of the hole (zero) pixels, or None when nothing is missing."""
    rows, cols = np.nonzero(np.asarray(m) == 0)
    if rows.size == 0:
        return None
    top, left = int(rows.min()), int(cols.min())
    return MaskRect(top, left, int(rows.max()) - top + 1, int(cols.max()) - left + 1)


def load_external_mask(path: str | os.PathLike, size: int | None = None) -> tuple[np.ndarray, MaskRect | None]:
    """Read an 8-bit PGM mask (255 known, 0 hole) of any shape."""
    raw = netpbm.read(path)
    if raw.ndim != 2:
        raise ValueError(f"{path}: mask must be a greyscale PGM")
    if size is not None and raw.shape != (size, size):
        raise ValueError(f"{path}: mask is {raw.shape[1]}x{raw.shape[0]}, image is {size}x{size}")
    bad = ~np.isin(raw, (0, 255))
    if bad.any():
        raise ValueError(f"{path}: mask has non-binary values {np.unique(raw[bad])[:5].tolist()}")
    m = (raw == 255).astype(np.float64)
    return m, bbox_from_mask(m)


def encode_mask(m: np.ndarray) -> np.ndarray:
    return np.where(np.asarray(m) > 0.5, 255, 0).astype(np.uint8)


# ---------------------------------------------------------------------------
# dataset layout: root/index.txt, root/rgb/<id>.ppm, root/depth/<id>.pgm, root/mask/<id>.pgm


def quantize_depth(depth: np.ndarray, d_max: float) -> np.ndarray:
    return np.rint(np.asarray(depth) * DEPTH_LEVELS / d_max).astype(np.uint16)


def dequantize_depth(levels: np.ndarray, d_max: float) -> np.ndarray:
    return levels.astype(np.float64) * d_max / DEPTH_LEVELS


def write_sample(sample: RgbdSample, root: str | os.PathLike, d_max: float) -> None:
    root = Path(root)
    for sub in ("rgb", "depth"):
        (root / sub).mkdir(parents=True, exist_ok=True)
    netpbm.write(root / "rgb" / f"{sample.id}.ppm", sample.rgb.astype(np.uint8), 255)
    netpbm.write(root / "depth" / f"{sample.id}.pgm", quantize_depth(sample.depth, d_max), DEPTH_LEVELS)
    if sample.mask is not None:
        (root / "mask").mkdir(exist_ok=True)
        netpbm.write(root / "mask" / f"{sample.id}.pgm", encode_mask(sample.mask), 255)


@dataclass
class DatasetIndex:
    root: Path
    ids: list[str]
    d_max: float = DEFAULT_DMAX

    def __post_init__(self):
        self.root = Path(self.root)
        if len(set(self.ids)) != len(self.ids):
            raise DatasetError("duplicate sample ids in index")
        if self.ids != sorted(self.ids):
            raise DatasetError("index ids must be sorted")

    def paths(self, sample_id: str) -> tuple[Path, Path, Path]:
        return (
            self.root / "rgb" / f"{sample_id}.ppm",
            self.root / "depth" / f"{sample_id}.pgm",
            self.root / "mask" / f"{sample_id}.pgm",
        )

    def validate(self) -> None:
        for sid in self.ids:
            rgb, depth, _ = self.paths(sid)
            if not rgb.is_file():
                raise DatasetError(f"sample {sid!r}: missing RGB file {rgb}")
            if not depth.is_file():
                raise DatasetError(f"sample {sid!r}: missing depth file {depth}")


def write_index(root: str | os.PathLike, ids, d_max: float) -> DatasetIndex:
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    ids = sorted(ids)
    lines = [f"dmax={d_max!r}"] + ids
    (root / "index.txt").write_text("\n".join(lines) + "\n")
    return DatasetIndex(root, ids, d_max)


def load_index(root: str | os.PathLike) -> DatasetIndex:
    root = Path(root)
    path = root / "index.txt"
    if not path.is_file():
        raise DatasetError(f"no index.txt under {root}")
    lines = [ln.strip() for ln in path.read_text().splitlines() if ln.strip()]
    if not lines or not lines[0].startswith("dmax="):
        raise DatasetError(f"{path}: first line must be dmax=<float>")
    try:
        d_max = float(lines[0][len("dmax="):])
    except ValueError:
        raise DatasetError(f"{path}: bad dmax header {lines[0]!r}") from None
    if not d_max > 0:
        raise DatasetError(f"{path}: dmax must be positive")
    index = DatasetIndex(root, lines[1:], d_max)
    index.validate()
    return index


def read_sample(index: DatasetIndex, sample_id: str) -> RgbdSample:
    rgb_path, depth_path, mask_path = index.paths(sample_id)
    for p, kind in ((rgb_path, "RGB"), (depth_path, "depth")):
        if not p.is_file():
            raise DatasetError(f"sample {sample_id!r}: missing {kind} file {p}")
    rgb = netpbm.read(rgb_path)
    levels = netpbm.read(depth_path)
    if rgb.ndim != 3 or levels.ndim != 2 or rgb.shape[:2] != levels.shape:
        raise DatasetError(f"sample {sample_id!r}: RGB {rgb.shape} and depth {levels.shape} disagree")
    mask = None
    if mask_path.is_file():
        mask, _ = load_external_mask(mask_path, rgb.shape[0])
    return RgbdSample(
        rgb=rgb.astype(np.uint8),
        depth=dequantize_depth(levels, index.d_max),
        id=sample_id,
        source=str(index.root),
        mask=mask,
    )


def generate_dataset(root, count: int, size: int, seed: int, d_max: float = DEFAULT_DMAX) -> DatasetIndex:
    ids = []
    for i in range(count):
        sample = synth_scene(seed * 100003 + i, size, d_max, sample_id=f"{i:06d}")
        write_sample(sample, root, d_max)
        ids.append(sample.id)
    return write_index(root, ids, d_max)


@dataclass
class Dataset:
    """Normalized samples held in memory, ordered by id."""

    ids: list[str]
    rgb: np.ndarray  # (N, 3, S, S)
    depth: np.ndarray  # (N, 1, S, S)
    d_max: float = DEFAULT_DMAX
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if len(self.ids) == 0:
            raise DatasetError("dataset is empty")

    def __len__(self) -> int:
        return len(self.ids)

    @property
    def image_size(self) -> int:
        return self.rgb.shape[-1]

    def astype(self, dtype) -> "Dataset":
        return Dataset(self.ids, self.rgb.astype(dtype), self.depth.astype(dtype), self.d_max, self.meta)

    def batch(self, indices) -> tuple[np.ndarray, np.ndarray]:
        indices = np.asarray(indices)
        return self.rgb[indices], self.depth[indices]

    @classmethod
    def from_samples(cls, samples, d_max: float = DEFAULT_DMAX, dtype=np.float32) -> "Dataset":
        samples = sorted(samples, key=lambda s: s.id)
        if not samples:
            raise DatasetError("dataset is empty")
        pairs = [normalize(s, d_max) for s in samples]
        rgb = np.stack([p[0] for p in pairs]).astype(dtype)
        depth = np.stack([p[1] for p in pairs]).astype(dtype)
        return cls([s.id for s in samples], rgb, depth, d_max)

    @classmethod
    def from_index(cls, index: DatasetIndex, dtype=np.float32) -> "Dataset":
        samples = [read_sample(index, sid) for sid in index.ids]
        ds = cls.from_samples(samples, index.d_max, dtype)
        ds.meta["root"] = str(index.root)
        return ds

    @classmethod
    def synthetic(cls, count: int, size: int, seed: int = 0, d_max: float = DEFAULT_DMAX, dtype=np.float32) -> "Dataset":
        samples = [synth_scene(seed * 100003 + i, size, d_max, sample_id=f"{i:06d}") for i in range(count)]
        return cls.from_samples(samples, d_max, dtype)
