"""Binary checkpoint format.

Layout: magic ``FECG``, u32 format version, u32 JSON length + UTF-8
architecture config, then one block per tensor in declaration order:
u32 rank, u32 dims, raw little-endian float32 data. Buffers (batch-norm
running statistics) follow the same encoding after the parameters, so a
reloaded model is inference-ready. Round trips are bit-exact.
"""

from __future__ import annotations

import json
import os
import struct
import tempfile

import numpy as np

from ..errors import FormatError

__all__ = ["save_checkpoint", "load_checkpoint", "CHECKPOINT_MAGIC",
           "CHECKPOINT_VERSION"]

CHECKPOINT_MAGIC = b"FECG"
CHECKPOINT_VERSION = 1


def _write_tensor(fh, arr: np.ndarray):
    arr = np.asarray(arr, dtype="<f4")
    fh.write(struct.pack("<I", arr.ndim))
    fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
    fh.write(arr.tobytes(order="C"))


def _read_exact(fh, n: int) -> bytes:
    buf = fh.read(n)
    if len(buf) != n:
        raise FormatError("checkpoint truncated")
    return buf


def _read_tensor(fh) -> np.ndarray:
    (ndim,) = struct.unpack("<I", _read_exact(fh, 4))
    if ndim > 8:
        raise FormatError(f"implausible tensor rank {ndim}")
    shape = struct.unpack(f"<{ndim}I", _read_exact(fh, 4 * ndim))
    count = int(np.prod(shape)) if ndim else 1
    data = np.frombuffer(_read_exact(fh, 4 * count), dtype="<f4")
    return data.reshape(shape).copy()


def save_checkpoint(path, arch: dict, tensors: list[np.ndarray]):
    """Atomically write a checkpoint (temp file + rename)."""
    blob = json.dumps(arch, sort_keys=True).encode("utf-8")
    d = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".ckpt-")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(CHECKPOINT_MAGIC)
            fh.write(struct.pack("<I", CHECKPOINT_VERSION))
            fh.write(struct.pack("<I", len(blob)))
            fh.write(blob)
            fh.write(struct.pack("<I", len(tensors)))
            for t in tensors:
                _write_tensor(fh, t)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def load_checkpoint(path) -> tuple[dict, list[np.ndarray]]:
    with open(path, "rb") as fh:
        if _read_exact(fh, 4) != CHECKPOINT_MAGIC:
            raise FormatError("not a checkpoint file (bad magic)")
        (version,) = struct.unpack("<I", _read_exact(fh, 4))
        if version != CHECKPOINT_VERSION:
            raise FormatError(f"unknown checkpoint version {version}")
        (blob_len,) = struct.unpack("<I", _read_exact(fh, 4))
        arch = json.loads(_read_exact(fh, blob_len).decode("utf-8"))
        (count,) = struct.unpack("<I", _read_exact(fh, 4))
        tensors = [_read_tensor(fh) for _ in range(count)]
        if fh.read(1):
            raise FormatError("trailing bytes after checkpoint payload")
    return arch, tensors
