"""Input validation helpers for the estimator-facing API."""

from __future__ import annotations

import numpy as np

from .geometry import PointCloudGrid

__all__ = ["check_image", "check_sample_pairs"]


def check_image(img, size: int | None = None) -> np.ndarray:
    """Validate an (H, W, 3) float image in [0, 1]; returns float64."""
    arr = np.asarray(img, dtype=np.float64)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise ValueError(f"expected (H, W, 3) image, got shape {arr.shape}")
    if size is not None and arr.shape[:2] != (size, size):
        raise ValueError(f"expected image of size ({size}, {size}), got {arr.shape[:2]}")
    if not np.isfinite(arr).all():
        raise ValueError("image contains non-finite values")
    if arr.min() < -1e-9 or arr.max() > 1.0 + 1e-9:
        raise ValueError(f"image values must lie in [0, 1], got range "
                         f"[{arr.min():.4g}, {arr.max():.4g}]")
    return np.clip(arr, 0.0, 1.0)


def check_sample_pairs(samples, image_size: int) -> list[tuple[np.ndarray, PointCloudGrid]]:
    """Validate a list of (image, PointCloudGrid) pairs of matching size."""
    checked = []
    for i, item in enumerate(samples):
        try:
            image, cloud = item
        except (TypeError, ValueError) as exc:
            raise ValueError(
                f"sample {i}: expected an (image, PointCloudGrid) pair"
            ) from exc
        if not isinstance(cloud, PointCloudGrid):
            raise ValueError(f"sample {i}: second element must be a PointCloudGrid")
        image = check_image(image, image_size)
        if (cloud.height, cloud.width) != (image_size, image_size):
            raise ValueError(
                f"sample {i}: point grid is {(cloud.height, cloud.width)}, "
                f"expected ({image_size}, {image_size})"
            )
        checked.append((image, cloud))
    return checked
