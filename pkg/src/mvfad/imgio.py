"""Image file IO: 8-bit PNG/PPM for color, PGM for masks, 16-bit maps.

Float images use the [0, 1] range everywhere in this package; quantization
happens only at the file boundary. PPM/PGM are written in the binary (P6 /
P5) variants with explicit maxval, so files are platform-independent.
"""

from __future__ import annotations

import numpy as np
from PIL import Image

__all__ = [
    "save_image",
    "load_image",
    "save_mask",
    "load_mask",
    "save_map16",
    "load_map16",
]


def _to_u8(img: np.ndarray) -> np.ndarray:
    return np.clip(np.round(np.asarray(img, dtype=np.float64) * 255.0), 0, 255).astype(np.uint8)


def save_image(path, img: np.ndarray) -> None:
    """Write an (H, W, 3) float image in [0, 1] as 8-bit PNG or PPM by suffix."""
    img = np.asarray(img)
    if img.ndim != 3 or img.shape[2] != 3:
        raise ValueError(f"expected (H, W, 3) image, got shape {img.shape}")
    path = str(path)
    data = _to_u8(img)
    if path.endswith(".ppm"):
        with open(path, "wb") as fh:
            fh.write(f"P6\n{img.shape[1]} {img.shape[0]}\n255\n".encode())
            fh.write(data.tobytes())
    else:
        Image.fromarray(data, mode="RGB").save(path)


def load_image(path) -> np.ndarray:
    """Read any 8-bit color image to (H, W, 3) float in [0, 1]."""
    with Image.open(path) as im:
        arr = np.asarray(im.convert("RGB"), dtype=np.float64)
    return arr / 255.0


def save_mask(path, mask: np.ndarray) -> None:
    """Write a binary mask as 8-bit PGM (0 background, 255 foreground)."""
    mask = np.asarray(mask)
    data = np.where(mask > 0.5, 255, 0).astype(np.uint8)
    with open(str(path), "wb") as fh:
        fh.write(f"P5\n{mask.shape[1]} {mask.shape[0]}\n255\n".encode())
        fh.write(data.tobytes())


def _read_pnm_header(fh, magic_expected: bytes, path):
    magic = fh.readline().strip()
    if magic != magic_expected:
        raise ValueError(f"{path}: expected {magic_expected.decode()} header, got {magic!r}")
    fields = []
    while len(fields) < 3:
        line = fh.readline()
        if not line:
            raise ValueError(f"{path}: truncated PNM header")
        text = line.split(b"#", 1)[0].strip()
        if text:
            fields.extend(int(t) for t in text.split())
    return fields[0], fields[1], fields[2]  # width, height, maxval


def load_mask(path) -> np.ndarray:
    """Read a mask image (PGM or anything PIL opens); binarize at 0.5."""
    path = str(path)
    if path.endswith(".pgm"):
        with open(path, "rb") as fh:
            w, h, maxval = _read_pnm_header(fh, b"P5", path)
            dtype = np.uint8 if maxval < 256 else ">u2"
            raw = np.frombuffer(fh.read(), dtype=dtype, count=h * w)
        return (raw.reshape(h, w).astype(np.float64) / maxval) > 0.5
    with Image.open(path) as im:
        arr = np.asarray(im.convert("L"), dtype=np.float64) / 255.0
    return arr > 0.5


def save_map16(path, map01: np.ndarray) -> None:
    """Write an anomaly map in [0, 1] as 16-bit grayscale PNG or PGM."""
    arr = np.asarray(map01, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError(f"expected 2D map, got shape {arr.shape}")
    data = np.clip(np.round(arr * 65535.0), 0, 65535).astype(np.uint16)
    path = str(path)
    if path.endswith(".pgm"):
        with open(path, "wb") as fh:
            fh.write(f"P5\n{arr.shape[1]} {arr.shape[0]}\n65535\n".encode())
            fh.write(data.astype(">u2").tobytes())  # PNM 16-bit is big-endian
    else:
        Image.fromarray(data.astype(np.int32), mode="I").convert("I;16").save(path)


def load_map16(path) -> np.ndarray:
    """Read a 16-bit grayscale map back to float in [0, 1]."""
    path = str(path)
    if path.endswith(".pgm"):
        with open(path, "rb") as fh:
            w, h, maxval = _read_pnm_header(fh, b"P5", path)
            dtype = np.uint8 if maxval < 256 else ">u2"
            raw = np.frombuffer(fh.read(), dtype=dtype, count=h * w)
        return raw.reshape(h, w).astype(np.float64) / maxval
    with Image.open(path) as im:
        arr = np.asarray(im, dtype=np.float64)
    return arr / 65535.0
