"""Procedural toy dataset: smooth height-field objects with textured renders.

Each object is an elliptical height-field blob back-projected into an
organized point cloud through a fixed pinhole camera, so the frontal view
of the cloud reproduces the texture exactly. Normal samples vary by a
seeded smooth color texture; anomalous test samples carry blended Perlin
patches whose seeds are disjoint from any training-time synthesis stream.

Run ``python -m mvfad.toydata OUT_DIR`` to materialize a dataset on disk in
the layout the CLI's train/eval commands expect.
"""

from __future__ import annotations

import argparse
from pathlib import Path

import numpy as np

from .blocks import derive_seed
from .data import save_point_grid
from .geometry import CameraModel, PointCloudGrid, backproject_depth
from .imgio import save_image, save_mask
from .synthesis import PerlinParams, procedural_texture, synthesize_anomaly

__all__ = ["toy_camera", "toy_normal_sample", "toy_anomalous_sample",
           "make_toy_split", "write_toy_dataset"]

TEST_BETA_RANGE = (0.15, 0.7)  # keep held-out anomalies in the visible regime
TOY_PERLIN = PerlinParams(grid_periods=(4, 4), octaves=2, persistence=0.5, threshold=0.6)


def toy_camera(image_size: int) -> CameraModel:
    f = 1.25 * image_size
    c = (image_size - 1) / 2.0
    return CameraModel(fx=f, fy=f, cx=c, cy=c)


def _height_field(image_size: int, rng: np.random.Generator) -> np.ndarray:
    """Elliptical blob with gentle random bumps; zero outside the support."""
    s = image_size
    yy, xx = np.meshgrid(np.arange(s, dtype=np.float64), np.arange(s, dtype=np.float64),
                         indexing="ij")
    cx = s / 2 + rng.uniform(-0.03, 0.03) * s
    cy = s / 2 + rng.uniform(-0.03, 0.03) * s
    rx = rng.uniform(0.30, 0.38) * s
    ry = rng.uniform(0.30, 0.38) * s
    r2 = ((xx - cx) / rx) ** 2 + ((yy - cy) / ry) ** 2
    support = r2 <= 1.0

    depth = np.zeros((s, s), dtype=np.float64)
    dome = 0.85 + 0.15 * r2  # center nearest the camera, convex object seen frontally
    bumps = np.zeros((s, s), dtype=np.float64)
    for _ in range(4):
        bx, by = rng.uniform(0.25, 0.75, size=2) * s
        sigma = rng.uniform(0.06, 0.14) * s
        amp = rng.uniform(-0.04, 0.04)
        bumps += amp * np.exp(-((xx - bx) ** 2 + (yy - by) ** 2) / (2 * sigma**2))
    depth[support] = (dome + bumps)[support]
    return depth


def _toy_texture(image_size: int, foreground: np.ndarray,
                 rng_seed: int) -> np.ndarray:
    """Class-consistent smooth texture on the object, dark backdrop elsewhere."""
    base = np.array([0.45, 0.55, 0.65])
    variation = procedural_texture(image_size, image_size, rng_seed)
    tex = 0.55 * base + 0.45 * variation
    tex[~foreground] = 0.05
    return np.clip(tex, 0.0, 1.0)


def toy_normal_sample(image_size: int, seed: int) -> tuple[np.ndarray, PointCloudGrid]:
    """One normal toy sample: (texture image, organized point cloud)."""
    rng = np.random.default_rng(derive_seed(seed, "toy-shape"))
    depth = _height_field(image_size, rng)
    cloud = backproject_depth(depth, toy_camera(image_size))
    image = _toy_texture(image_size, depth > 0, derive_seed(seed, "toy-texture"))
    return image, cloud


def toy_anomalous_sample(image_size: int, seed: int):
    """One anomalous toy sample: (image, cloud, ground-truth mask)."""
    image, cloud = toy_normal_sample(image_size, seed)
    depth = np.where(cloud.valid, cloud.points[..., 2], 0.0)
    source = procedural_texture(image_size, image_size, derive_seed(seed, "toy-anom-source"))
    sample = synthesize_anomaly(image, depth, source, TOY_PERLIN,
                                derive_seed(seed, "toy-anom"), beta_range=TEST_BETA_RANGE)
    return sample.x_minus, cloud, sample.mask


def make_toy_split(image_size: int = 240, seed: int = 7, n_train: int = 4,
                   n_test_normal: int = 20, n_test_anomalous: int = 20) -> dict:
    """In-memory toy split: train pairs plus a labeled, masked test set."""
    train = [toy_normal_sample(image_size, derive_seed(seed, "train", i))
             for i in range(n_train)]
    test, labels, masks = [], [], []
    for i in range(n_test_normal):
        img, cloud = toy_normal_sample(image_size, derive_seed(seed, "test-normal", i))
        test.append((img, cloud))
        labels.append(0)
        masks.append(None)
    for i in range(n_test_anomalous):
        img, cloud, mask = toy_anomalous_sample(image_size, derive_seed(seed, "test-anom", i))
        test.append((img, cloud))
        labels.append(1)
        masks.append(mask)
    return {"train": train, "test": test, "labels": labels, "masks": masks}


def write_toy_dataset(root, class_name: str = "blob", image_size: int = 240, seed: int = 7,
                      n_train: int = 4, n_test_normal: int = 20,
                      n_test_anomalous: int = 20) -> Path:
    """Materialize a toy dataset in the train/test directory layout."""
    split = make_toy_split(image_size, seed, n_train, n_test_normal, n_test_anomalous)
    base = Path(root) / class_name
    train_dir = base / "train" / "good"
    good_dir = base / "test" / "good"
    anom_dir = base / "test" / "anomaly"
    for d in (train_dir, good_dir, anom_dir):
        d.mkdir(parents=True, exist_ok=True)

    for i, (img, cloud) in enumerate(split["train"]):
        save_image(train_dir / f"{i:03d}.png", img)
        save_point_grid(train_dir / f"{i:03d}.pcg", cloud)
    for i, ((img, cloud), label, mask) in enumerate(
            zip(split["test"], split["labels"], split["masks"])):
        out = good_dir if label == 0 else anom_dir
        save_image(out / f"{i:03d}.png", img)
        save_point_grid(out / f"{i:03d}.pcg", cloud)
        if mask is not None:
            save_mask(out / f"{i:03d}_mask.pgm", mask)
    return base


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description="Generate the procedural toy dataset.")
    parser.add_argument("out", help="output dataset root directory")
    parser.add_argument("--class-name", default="blob")
    parser.add_argument("--image-size", type=int, default=240)
    parser.add_argument("--seed", type=int, default=7)
    parser.add_argument("--n-train", type=int, default=4)
    parser.add_argument("--n-test-normal", type=int, default=20)
    parser.add_argument("--n-test-anomalous", type=int, default=20)
    args = parser.parse_args(argv)
    base = write_toy_dataset(args.out, args.class_name, args.image_size, args.seed,
                             args.n_train, args.n_test_normal, args.n_test_anomalous)
    print(f"wrote toy dataset to {base}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
