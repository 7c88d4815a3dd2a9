"""Binary checkpoint format for the trainable parameters.

Layout: 8 magic bytes, little-endian u32 format version, u64 JSON header
length, the UTF-8 JSON header, the concatenated little-endian float32
parameter payload, and a trailing SHA-256 over everything before it. The
header carries the model configuration (including the frozen encoder's
weight seed), the training-config echo, the prompt sets, and the name,
shape and offset of every parameter blob.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import CheckpointError, ChecksumMismatchError, VersionMismatchError

__all__ = ["Checkpoint", "save_checkpoint", "load_checkpoint", "FORMAT_VERSION"]

MAGIC = b"MVFADCKP"
FORMAT_VERSION = 1
_DTYPE = "<f4"


@dataclass
class Checkpoint:
    """Everything needed to reconstruct a trained model."""

    model_config: dict
    params: dict[str, np.ndarray]
    train_config: dict = field(default_factory=dict)
    prompts: dict = field(default_factory=dict)
    version: int = FORMAT_VERSION


def save_checkpoint(path, ckpt: Checkpoint) -> None:
    names = list(ckpt.params.keys())
    blobs = [np.ascontiguousarray(ckpt.params[n], dtype=_DTYPE) for n in names]
    header = {
        "format_version": int(ckpt.version),
        "dtype": _DTYPE,
        "model_config": ckpt.model_config,
        "train_config": ckpt.train_config,
        "prompts": ckpt.prompts,
        "params": [{"name": n, "shape": list(b.shape)} for n, b in zip(names, blobs)],
    }
    header_bytes = json.dumps(header, sort_keys=True).encode("utf-8")
    body = bytearray()
    body += MAGIC
    body += struct.pack("<I", int(ckpt.version))
    body += struct.pack("<Q", len(header_bytes))
    body += header_bytes
    for blob in blobs:
        body += blob.tobytes()
    digest = hashlib.sha256(bytes(body)).digest()
    with open(str(path), "wb") as fh:
        fh.write(bytes(body))
        fh.write(digest)


def load_checkpoint(path) -> Checkpoint:
    path = str(path)
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < len(MAGIC) + 12 + 32:
        raise CheckpointError(f"{path}: file too short to be a checkpoint")
    if raw[: len(MAGIC)] != MAGIC:
        raise CheckpointError(f"{path}: bad magic {raw[:len(MAGIC)]!r}")
    (version,) = struct.unpack_from("<I", raw, len(MAGIC))
    if version != FORMAT_VERSION:
        raise VersionMismatchError(
            f"{path}: format version {version} not supported (expected {FORMAT_VERSION})"
        )
    body, stored_digest = raw[:-32], raw[-32:]
    if hashlib.sha256(body).digest() != stored_digest:
        raise ChecksumMismatchError(f"{path}: checksum mismatch; file corrupt or truncated")

    (header_len,) = struct.unpack_from("<Q", raw, len(MAGIC) + 4)
    header_start = len(MAGIC) + 12
    header = json.loads(raw[header_start: header_start + header_len].decode("utf-8"))
    offset = header_start + header_len
    params: dict[str, np.ndarray] = {}
    for entry in header["params"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape, dtype=np.int64)) if shape else 1
        arr = np.frombuffer(body, dtype=_DTYPE, count=count, offset=offset).reshape(shape)
        params[entry["name"]] = arr.copy()
        offset += count * 4
    if offset != len(body):
        raise CheckpointError(f"{path}: payload length mismatch")
    return Checkpoint(
        model_config=header["model_config"],
        params=params,
        train_config=header.get("train_config", {}),
        prompts=header.get("prompts", {}),
        version=version,
    )
