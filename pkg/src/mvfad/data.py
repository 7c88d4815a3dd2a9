"""Dataset ingestion: the binary point-grid format and sample loading.

Point grids are stored as: 8 magic bytes, little-endian u32 height and
width, then H*W*3 little-endian float32 xyz coordinates in row-major cell
order. A cell whose z (depth) is zero carries no measurement. To export
from organized RGB-D captures (e.g. TIFF stacks of xyz planes), reshape to
(H, W, 3), zero the invalid cells' depth and call ``save_point_grid``;
converters for specific datasets are out of scope here.
"""

from __future__ import annotations

import os
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .geometry import PointCloudGrid
from .imgio import load_image, load_mask

__all__ = [
    "POINT_GRID_MAGIC",
    "save_point_grid",
    "load_point_grid",
    "DatasetSample",
    "load_sample",
    "discover_samples",
    "data_root",
]

POINT_GRID_MAGIC = b"PTGRIDF4"
DATA_ROOT_ENV = "MVFAD_DATA_ROOT"


def save_point_grid(path, grid: PointCloudGrid) -> None:
    """Write a grid to the binary format; invalid cells get zero depth."""
    pts = grid.points.astype("<f4")
    pts[~grid.valid] = 0.0
    with open(str(path), "wb") as fh:
        fh.write(POINT_GRID_MAGIC)
        fh.write(struct.pack("<II", grid.height, grid.width))
        fh.write(pts.tobytes())


def load_point_grid(path) -> PointCloudGrid:
    """Read a binary point grid; errors name the file and byte offset."""
    path = str(path)
    with open(path, "rb") as fh:
        magic = fh.read(len(POINT_GRID_MAGIC))
        if magic != POINT_GRID_MAGIC:
            raise ValueError(
                f"{path}: bad magic {magic!r} at byte offset 0 "
                f"(expected {POINT_GRID_MAGIC!r})"
            )
        header = fh.read(8)
        if len(header) != 8:
            raise ValueError(f"{path}: truncated header at byte offset {len(magic) + len(header)}")
        h, w = struct.unpack("<II", header)
        expected = h * w * 3 * 4
        raw = fh.read(expected)
        if len(raw) != expected:
            raise ValueError(
                f"{path}: truncated payload at byte offset {16 + len(raw)} "
                f"(expected {expected} payload bytes for {h}x{w} grid)"
            )
    pts = np.frombuffer(raw, dtype="<f4").reshape(h, w, 3).astype(np.float64)
    return PointCloudGrid(points=pts, valid=pts[..., 2] > 0)


@dataclass(frozen=True)
class DatasetSample:
    """File locations and tags for one dataset sample."""

    rgb_path: str
    grid_path: str
    mask_path: str | None
    class_name: str
    split: str  # "train" | "test"
    label: int  # 0 normal, 1 anomalous

    @property
    def name(self) -> str:
        return Path(self.rgb_path).stem


def _nearest_indices(n_dst: int, n_src: int) -> np.ndarray:
    # Standard nearest sampling with pixel centers at i + 0.5.
    idx = np.floor((np.arange(n_dst) + 0.5) * n_src / n_dst).astype(np.int64)
    return np.clip(idx, 0, n_src - 1)


def resize_image(img: np.ndarray, size: int) -> np.ndarray:
    """Bilinear-resize a float [0, 1] image to (size, size, 3) via 8-bit PIL."""
    from PIL import Image

    if img.shape[:2] == (size, size):
        return np.asarray(img, dtype=np.float64)
    u8 = np.clip(np.round(np.asarray(img) * 255.0), 0, 255).astype(np.uint8)
    out = Image.fromarray(u8, mode="RGB").resize((size, size), Image.BILINEAR)
    return np.asarray(out, dtype=np.float64) / 255.0


def resize_grid(grid: PointCloudGrid, size: int) -> PointCloudGrid:
    """Nearest-cell resampling of an organized grid, validity carried along.

    Each target cell copies its nearest source cell verbatim, so every
    output point is a real measurement (never interpolated across the
    invalid boundary) and keeps that cell's validity.
    """
    if (grid.height, grid.width) == (size, size):
        return grid
    rows = _nearest_indices(size, grid.height)
    cols = _nearest_indices(size, grid.width)
    return PointCloudGrid(
        points=grid.points[np.ix_(rows, cols)],
        valid=grid.valid[np.ix_(rows, cols)],
    )


def resize_mask(mask: np.ndarray, size: int) -> np.ndarray:
    mask = np.asarray(mask)
    if mask.shape == (size, size):
        return mask > 0.5
    rows = _nearest_indices(size, mask.shape[0])
    cols = _nearest_indices(size, mask.shape[1])
    return mask[np.ix_(rows, cols)] > 0.5


def load_sample(sample: DatasetSample, image_size: int = 240):
    """Load and normalize one sample to (image, grid, mask-or-None).

    The image comes back as (S, S, 3) float in [0, 1], the point grid is
    resampled to (S, S) nearest-cell, and the mask (when present) is
    binarized at 0.5.
    """
    image = resize_image(load_image(sample.rgb_path), image_size)
    grid = resize_grid(load_point_grid(sample.grid_path), image_size)
    mask = None
    if sample.mask_path is not None:
        mask = resize_mask(load_mask(sample.mask_path), image_size)
    return image, grid, mask


def data_root(explicit: str | None = None) -> str:
    """Resolve the dataset root: explicit argument, else the env var."""
    root = explicit or os.environ.get(DATA_ROOT_ENV)
    if not root:
        raise ValueError(
            f"no data root given; pass --data or set {DATA_ROOT_ENV}"
        )
    return root


def discover_samples(root, class_name: str) -> dict[str, list[DatasetSample]]:
    """Walk root/class/{train,test}/<tag>/ and pair images with grids.

    Image NNN.png (or .ppm) pairs with NNN.pcg; an optional NNN_mask.pgm is
    the ground-truth mask. Tag directories other than ``good`` are
    anomalous. Listing order is path-sorted for determinism.
    """
    base = Path(root) / class_name
    if not base.is_dir():
        raise FileNotFoundError(f"no such class directory: {base}")
    splits: dict[str, list[DatasetSample]] = {"train": [], "test": []}
    for split in splits:
        split_dir = base / split
        if not split_dir.is_dir():
            continue
        for tag_dir in sorted(p for p in split_dir.iterdir() if p.is_dir()):
            label = 0 if tag_dir.name == "good" else 1
            images = sorted(p for p in tag_dir.iterdir() if p.suffix in (".png", ".ppm"))
            for img_path in images:
                grid_path = img_path.with_suffix(".pcg")
                if not grid_path.exists():
                    raise FileNotFoundError(f"missing point grid for {img_path}")
                mask_path = img_path.with_name(img_path.stem + "_mask.pgm")
                splits[split].append(DatasetSample(
                    rgb_path=str(img_path),
                    grid_path=str(grid_path),
                    mask_path=str(mask_path) if mask_path.exists() else None,
                    class_name=class_name,
                    split=split,
                    label=label,
                ))
    return splits
