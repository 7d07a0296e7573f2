"""Binary tensor container for models and feature archives.

Layout (all integers little-endian):

    magic   4 bytes  b"MABL"
    version u32      currently 1
    config  u64 length + UTF-8 key-value text block
    count   u32      number of tensor records
    record  u32 name length, name UTF-8, u32 rank, rank * u64 dims,
            float32 payload (row-major)

Tensors are stored at 32-bit precision; loading widens to float64, so a
save/load round trip is exact at the stored precision. Writers are atomic:
the file appears only after a completed write.
"""

import os
import struct
from dataclasses import dataclass

import numpy as np

MAGIC = b"MABL"
VERSION = 1


class FormatError(ValueError):
    """Raised for malformed container files (bad magic, truncation, ...)."""


def write_container(path, config_text, tensors):
    """Write (name, array) records with a config text block, atomically."""
    tmp = f"{path}.tmp"
    try:
        with open(tmp, "wb") as fh:
            fh.write(MAGIC)
            fh.write(struct.pack("<I", VERSION))
            blob = config_text.encode("utf-8")
            fh.write(struct.pack("<Q", len(blob)))
            fh.write(blob)
            fh.write(struct.pack("<I", len(tensors)))
            for name, tensor in tensors:
                data = np.ascontiguousarray(tensor, dtype="<f4")
                encoded = name.encode("utf-8")
                fh.write(struct.pack("<I", len(encoded)))
                fh.write(encoded)
                fh.write(struct.pack("<I", data.ndim))
                for dim in data.shape:
                    fh.write(struct.pack("<Q", dim))
                fh.write(data.tobytes())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _take(buffer, pos, count, what):
    end = pos + count
    if end > len(buffer):
        raise FormatError(f"truncated container: unexpected end in {what}")
    return buffer[pos:end], end


def read_container(path):
    """Read back (config_text, list of (name, float64 array))."""
    with open(path, "rb") as fh:
        buf = fh.read()
    chunk, pos = _take(buf, 0, 4, "magic")
    if chunk != MAGIC:
        raise FormatError(f"{path}: bad magic {chunk!r}, not a container file")
    chunk, pos = _take(buf, pos, 4, "version")
    version = struct.unpack("<I", chunk)[0]
    if version != VERSION:
        raise FormatError(f"{path}: unsupported container version {version}")
    chunk, pos = _take(buf, pos, 8, "config length")
    config_len = struct.unpack("<Q", chunk)[0]
    chunk, pos = _take(buf, pos, config_len, "config block")
    config_text = chunk.decode("utf-8")
    chunk, pos = _take(buf, pos, 4, "tensor count")
    count = struct.unpack("<I", chunk)[0]
    tensors = []
    for _ in range(count):
        chunk, pos = _take(buf, pos, 4, "tensor name length")
        name_len = struct.unpack("<I", chunk)[0]
        chunk, pos = _take(buf, pos, name_len, "tensor name")
        name = chunk.decode("utf-8")
        chunk, pos = _take(buf, pos, 4, f"tensor '{name}' rank")
        rank = struct.unpack("<I", chunk)[0]
        dims = []
        for _ in range(rank):
            chunk, pos = _take(buf, pos, 8, f"tensor '{name}' dims")
            dims.append(struct.unpack("<Q", chunk)[0])
        size = int(np.prod(dims, dtype=np.int64)) if dims else 1
        chunk, pos = _take(buf, pos, 4 * size, f"tensor '{name}' payload")
        data = np.frombuffer(chunk, dtype="<f4").astype(np.float64)
        tensors.append((name, data.reshape(dims)))
    if pos != len(buf):
        raise FormatError(f"{path}: {len(buf) - pos} trailing bytes")
    return config_text, tensors
