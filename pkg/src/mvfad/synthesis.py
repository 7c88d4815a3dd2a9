"""Synthetic anomaly generation: Perlin-masked texture blending.

A negative training sample is produced from a normal image by carving a
random Perlin-noise region out of the depth foreground and blending a
source texture into it at a per-sample random opacity. Everything is
deterministic in the sample seed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "PerlinParams",
    "AnomalySample",
    "foreground_mask",
    "perlin_field",
    "synthesize_anomaly",
    "procedural_texture",
]

BLEND_OPACITY_RANGE = (0.15, 1.0)  # beta drawn from [low, high) once per sample


@dataclass(frozen=True)
class PerlinParams:
    """Lattice frequencies, octave count and binarization threshold."""

    grid_periods: tuple[int, int] = (4, 4)  # (px, py) lattice cells along x, y
    octaves: int = 2
    persistence: float = 0.5
    threshold: float = 0.5

    def __post_init__(self):
        px, py = self.grid_periods
        if px < 1 or py < 1:
            raise ValueError(f"grid periods must be >= 1, got {self.grid_periods}")
        if self.octaves < 1:
            raise ValueError(f"octaves must be >= 1, got {self.octaves}")
        if not 0.0 < self.persistence <= 1.0:
            raise ValueError(f"persistence must be in (0, 1], got {self.persistence}")
        if not 0.0 < self.threshold < 1.0:
            raise ValueError(f"threshold must be in (0, 1), got {self.threshold}")


@dataclass
class AnomalySample:
    """Paired normal/anomalous images with the ground-truth mask.

    ``x_minus`` equals ``x_plus`` outside the mask by construction. ``beta``
    is the blend opacity actually used; ``degenerate`` flags an
    all-background depth input (empty mask, untouched image).
    """

    x_plus: np.ndarray
    x_minus: np.ndarray
    mask: np.ndarray
    seed: int
    beta: float
    degenerate: bool = False


def foreground_mask(depth: np.ndarray) -> np.ndarray:
    """True exactly where depth is positive; zero means no measurement."""
    depth = np.asarray(depth, dtype=np.float64)
    if (depth < 0).any():
        raise ValueError("depth must be non-negative")
    return depth > 0


def _fade(t: np.ndarray) -> np.ndarray:
    return t * t * t * (t * (t * 6.0 - 15.0) + 10.0)


def _perlin_octave(h: int, w: int, nx: int, ny: int, rng: np.random.Generator) -> np.ndarray:
    """One lattice-gradient noise layer with (nx, ny) cells across the image."""
    angles = rng.uniform(0.0, 2.0 * np.pi, size=(ny + 1, nx + 1))
    gx, gy = np.cos(angles), np.sin(angles)

    x = np.linspace(0.0, nx, w, endpoint=False)
    y = np.linspace(0.0, ny, h, endpoint=False)
    xx, yy = np.meshgrid(x, y)
    xi = xx.astype(np.int64)
    yi = yy.astype(np.int64)
    xf = xx - xi
    yf = yy - yi

    def corner(dx_cell: int, dy_cell: int) -> np.ndarray:
        gxc = gx[yi + dy_cell, xi + dx_cell]
        gyc = gy[yi + dy_cell, xi + dx_cell]
        return gxc * (xf - dx_cell) + gyc * (yf - dy_cell)

    u = _fade(xf)
    v = _fade(yf)
    top = corner(0, 0) * (1.0 - u) + corner(1, 0) * u
    bottom = corner(0, 1) * (1.0 - u) + corner(1, 1) * u
    return top * (1.0 - v) + bottom * v


def perlin_field(h: int, w: int, params: PerlinParams, seed) -> np.ndarray:
    """Octave-summed Perlin noise, min-max normalized to [0, 1].

    Deterministic in ``seed``. A degenerate constant field (which cannot be
    min-max normalized) comes back as all 0.5.
    """
    px, py = params.grid_periods
    if w < px or h < py:
        raise ValueError(
            f"image size ({h}, {w}) must be at least the grid periods ({py}, {px})"
        )
    rng = np.random.default_rng(seed)
    field = np.zeros((h, w), dtype=np.float64)
    for octave in range(params.octaves):
        amp = params.persistence**octave
        field += amp * _perlin_octave(h, w, px * 2**octave, py * 2**octave, rng)
    lo, hi = field.min(), field.max()
    if hi - lo <= 0.0:
        return np.full((h, w), 0.5, dtype=np.float64)
    return (field - lo) / (hi - lo)


def synthesize_anomaly(x_plus: np.ndarray, depth: np.ndarray, source_image: np.ndarray,
                       params: PerlinParams, seed: int,
                       beta_range: tuple[float, float] = BLEND_OPACITY_RANGE) -> AnomalySample:
    """Blend a source texture into a Perlin-carved foreground region.

    The mask is the thresholded normalized Perlin field intersected with
    the depth foreground; inside it the output is
    ``beta * x_plus + (1 - beta) * source_image`` with beta drawn once from
    uniform [0.15, 1) by default. An all-background depth yields the
    degenerate sample (empty mask, x_minus == x_plus) rather than an error.
    """
    x_plus = np.asarray(x_plus, dtype=np.float64)
    depth = np.asarray(depth, dtype=np.float64)
    source_image = np.asarray(source_image, dtype=np.float64)
    if x_plus.ndim != 3 or x_plus.shape[2] != 3:
        raise ValueError(f"x_plus must be (H, W, 3), got {x_plus.shape}")
    if depth.shape != x_plus.shape[:2] or source_image.shape != x_plus.shape:
        raise ValueError(
            f"shape mismatch: image {x_plus.shape}, depth {depth.shape}, "
            f"source {source_image.shape}"
        )

    field_ss, beta_ss = np.random.SeedSequence(seed).spawn(2)
    beta = float(np.random.default_rng(beta_ss).uniform(*beta_range))

    fg = foreground_mask(depth)
    if not fg.any():
        return AnomalySample(
            x_plus=x_plus.copy(), x_minus=x_plus.copy(),
            mask=np.zeros_like(fg), seed=seed, beta=beta, degenerate=True,
        )

    h, w = depth.shape
    field = perlin_field(h, w, params, field_ss)
    mask = (field >= params.threshold) & fg

    x_minus = x_plus.copy()
    x_minus[mask] = beta * x_plus[mask] + (1.0 - beta) * source_image[mask]
    return AnomalySample(
        x_plus=x_plus.copy(), x_minus=x_minus, mask=mask,
        seed=seed, beta=beta, degenerate=False,
    )


def procedural_texture(h: int, w: int, seed) -> np.ndarray:
    """Seeded smooth color noise used as the fallback anomaly source.

    Each channel is a sum of a few random low-frequency sinusoids, min-max
    normalized, so the repository needs no external texture images.
    """
    rng = np.random.default_rng(seed)
    yy, xx = np.meshgrid(np.arange(h, dtype=np.float64), np.arange(w, dtype=np.float64),
                         indexing="ij")
    tex = np.zeros((h, w, 3), dtype=np.float64)
    for c in range(3):
        chan = np.zeros((h, w), dtype=np.float64)
        for _ in range(4):
            fx, fy = rng.uniform(0.5, 4.0, size=2)
            phase = rng.uniform(0.0, 2.0 * np.pi)
            amp = rng.uniform(0.5, 1.0)
            chan += amp * np.sin(2.0 * np.pi * (fx * xx / w + fy * yy / h) + phase)
        lo, hi = chan.min(), chan.max()
        tex[..., c] = 0.5 if hi - lo <= 0 else (chan - lo) / (hi - lo)
    return tex
