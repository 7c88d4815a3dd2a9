"""Point-splat rasterization of rotated point clouds into multi-view images.

A view is produced in two stages: a geometric stage that resolves, per
canvas pixel, which grid cell wins the z-buffer, and a painting stage that
copies the texture color of the winning cell. The geometric stage depends
only on (cloud, rotation, camera, canvas) and can be cached and repainted
with any number of textures; both normal and anomalous textures of one
sample therefore share identical coverage.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import CameraModel, PointCloudGrid, RotationAngles, project_points, rotate_cloud, rotation_matrix

__all__ = ["RenderedView", "MultiViewSet", "ViewProjection", "render_view", "render_multiview", "select_views"]

DEFAULT_BACKGROUND = (0.0, 0.0, 0.0)


@dataclass
class RenderedView:
    """Rendered canvas: (H_r, W_r, 3) colors in [0, 1] plus a coverage mask."""

    image: np.ndarray
    coverage: np.ndarray


@dataclass
class MultiViewSet:
    """Ordered rendered views of one texture source, in view-grid order."""

    views: list[RenderedView]
    source_tag: str  # "normal" | "anomalous"

    def __len__(self) -> int:
        return len(self.views)


class ViewProjection:
    """Per-pixel winning source cell of one rotated cloud on a canvas.

    ``source_index`` holds, for every canvas pixel, the row-major index of
    the grid cell that wins the z-buffer (nearest camera depth, ties broken
    by the lower row-major index), or -1 where no point lands. The winner
    is independent of point iteration order by construction.
    """

    def __init__(self, cloud: PointCloudGrid, rot: np.ndarray, cam: CameraModel,
                 canvas_h: int, canvas_w: int):
        self.canvas_h = int(canvas_h)
        self.canvas_w = int(canvas_w)
        self.grid_shape = (cloud.height, cloud.width)

        rotated = rotate_cloud(cloud, rot)
        u, v, depth, visible = project_points(rotated, cam)

        src = np.flatnonzero(visible.ravel())
        if src.size == 0:
            self.source_index = np.full((self.canvas_h, self.canvas_w), -1, dtype=np.int64)
            return

        # Nearest-pixel splat, half-way cases rounded up.
        px = np.floor(u.ravel()[src] + 0.5).astype(np.int64)
        py = np.floor(v.ravel()[src] + 0.5).astype(np.int64)
        z = depth.ravel()[src]
        inside = (px >= 0) & (px < self.canvas_w) & (py >= 0) & (py < self.canvas_h)
        src, px, py, z = src[inside], px[inside], py[inside], z[inside]

        winners = np.full(self.canvas_h * self.canvas_w, -1, dtype=np.int64)
        if src.size:
            pix = py * self.canvas_w + px
            order = np.lexsort((src, z, pix))
            pix_sorted = pix[order]
            first = np.ones(pix_sorted.size, dtype=bool)
            first[1:] = pix_sorted[1:] != pix_sorted[:-1]
            winners[pix_sorted[first]] = src[order][first]
        self.source_index = winners.reshape(self.canvas_h, self.canvas_w)

    @property
    def coverage(self) -> np.ndarray:
        return self.source_index >= 0

    def paint(self, texture: np.ndarray, background=DEFAULT_BACKGROUND) -> RenderedView:
        """Color covered pixels from the texture of the winning grid cell."""
        texture = np.asarray(texture, dtype=np.float64)
        if texture.shape != self.grid_shape + (3,):
            raise ValueError(
                f"texture shape {texture.shape} does not match point grid {self.grid_shape}"
            )
        image = np.empty((self.canvas_h, self.canvas_w, 3), dtype=np.float64)
        image[:] = np.asarray(background, dtype=np.float64)
        cov = self.coverage
        image[cov] = texture.reshape(-1, 3)[self.source_index[cov]]
        return RenderedView(image=np.clip(image, 0.0, 1.0), coverage=cov)


def render_view(cloud: PointCloudGrid, texture: np.ndarray, rot: np.ndarray, cam: CameraModel,
                canvas_h: int, canvas_w: int, background=DEFAULT_BACKGROUND) -> RenderedView:
    """Rasterize one rotated, textured cloud onto a fresh canvas."""
    texture = np.asarray(texture, dtype=np.float64)
    if texture.shape != (cloud.height, cloud.width, 3):
        raise ValueError(
            f"texture shape {texture.shape} does not match point grid "
            f"{(cloud.height, cloud.width)}"
        )
    return ViewProjection(cloud, rot, cam, canvas_h, canvas_w).paint(texture, background)


def render_multiview(cloud: PointCloudGrid, texture_normal: np.ndarray, texture_anom: np.ndarray,
                     grid: list[RotationAngles], cam: CameraModel,
                     canvas_h: int, canvas_w: int,
                     background=DEFAULT_BACKGROUND) -> tuple[MultiViewSet, MultiViewSet]:
    """Render both textures under every grid rotation; geometry is shared.

    Returns the normal and anomalous view sets in grid order; their
    coverage masks are equal pairwise because each view's projection is
    computed once and painted twice.
    """
    for name, tex in (("texture_normal", texture_normal), ("texture_anom", texture_anom)):
        tex = np.asarray(tex)
        if tex.shape != (cloud.height, cloud.width, 3):
            raise ValueError(f"{name} shape {tex.shape} does not match point grid")
    normal_views, anom_views = [], []
    for angles in grid:
        proj = ViewProjection(cloud, rotation_matrix(angles), cam, canvas_h, canvas_w)
        normal_views.append(proj.paint(texture_normal, background))
        anom_views.append(proj.paint(texture_anom, background))
    return (
        MultiViewSet(views=normal_views, source_tag="normal"),
        MultiViewSet(views=anom_views, source_tag="anomalous"),
    )


def select_views(mvset: MultiViewSet, indices) -> list[RenderedView]:
    """Pick views by 1-based index, preserving the requested order."""
    indices = list(indices)
    if len(set(indices)) != len(indices):
        raise ValueError(f"view indices must be distinct, got {indices}")
    n = len(mvset.views)
    for idx in indices:
        if not 1 <= idx <= n:
            raise ValueError(f"view index {idx} out of range 1..{n}")
    return [mvset.views[i - 1] for i in indices]
