"""Binary named-tensor checkpoints.

Layout (all integers little-endian)::

    b"COCA"  u32 version
    u32 config_len  config_len bytes of UTF-8 config text
    u32 tensor_count
    per tensor: u32 name_len, name (UTF-8), u8 dtype tag, u32 rank,
                rank x u64 extents, raw little-endian payload
"""
from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

MAGIC = b"COCA"
VERSION = 1
DTYPE_TAGS = {np.dtype("<f4"): 0, np.dtype("<f8"): 1, np.dtype("<i8"): 2, np.dtype("<i4"): 3}
TAG_DTYPES = {v: k for k, v in DTYPE_TAGS.items()}


class CheckpointError(ValueError):
    pass


def dumps(tensors: dict[str, np.ndarray], config_text: str = "") -> bytes:
    out = [MAGIC, struct.pack("<I", VERSION)]
    cfg = config_text.encode("utf-8")
    out.append(struct.pack("<I", len(cfg)) + cfg)
    out.append(struct.pack("<I", len(tensors)))
    for name, arr in tensors.items():
        arr = np.asarray(arr)
        le = arr.dtype.newbyteorder("<")
        if le not in DTYPE_TAGS:
            raise CheckpointError(f"{name}: unsupported dtype {arr.dtype}")
        raw = name.encode("utf-8")
        out.append(struct.pack("<I", len(raw)) + raw)
        out.append(struct.pack("<BI", DTYPE_TAGS[le], arr.ndim))
        out.append(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        out.append(np.ascontiguousarray(arr, dtype=le).tobytes())
    return b"".join(out)


def loads(blob: bytes) -> tuple[dict[str, np.ndarray], str]:
    view = memoryview(blob)
    pos = 0

    def take(n: int) -> memoryview:
        nonlocal pos
        if pos + n > len(view):
            raise CheckpointError("truncated checkpoint")
        chunk = view[pos:pos + n]
        pos += n
        return chunk

    if bytes(take(4)) != MAGIC:
        raise CheckpointError("not a checkpoint: bad magic bytes")
    (version,) = struct.unpack("<I", take(4))
    if version != VERSION:
        raise CheckpointError(f"checkpoint version {version} is not supported (expected {VERSION})")
    (cfg_len,) = struct.unpack("<I", take(4))
    config_text = bytes(take(cfg_len)).decode("utf-8")
    (count,) = struct.unpack("<I", take(4))
    tensors: dict[str, np.ndarray] = {}
    for _ in range(count):
        (name_len,) = struct.unpack("<I", take(4))
        name = bytes(take(name_len)).decode("utf-8")
        tag, rank = struct.unpack("<BI", take(5))
        if tag not in TAG_DTYPES:
            raise CheckpointError(f"{name}: unknown dtype tag {tag}")
        dtype = TAG_DTYPES[tag]
        shape = struct.unpack(f"<{rank}Q", take(8 * rank))
        nbytes = int(np.prod(shape, dtype=np.int64)) * dtype.itemsize
        arr = np.frombuffer(bytes(take(nbytes)), dtype=dtype).reshape(shape)
        tensors[name] = arr.astype(dtype.newbyteorder("="))
    if pos != len(view):
        raise CheckpointError(f"{len(view) - pos} trailing bytes after tensor directory")
    return tensors, config_text


def save(path, tensors: dict[str, np.ndarray], config_text: str = "") -> None:
    Path(path).write_bytes(dumps(tensors, config_text))


def load(path) -> tuple[dict[str, np.ndarray], str]:
    return loads(Path(path).read_bytes())
