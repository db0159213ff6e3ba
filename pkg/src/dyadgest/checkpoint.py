"""GDCK checkpoint files.

Layout (little-endian)::

    b"GDCK" | version u32 | header_len u32 | header (UTF-8 JSON)
    | n_tensors u32 | n_tensors x (name_len u32 | name | rank u32 | dims u32[rank] | float64 data)

The JSON header carries the run config, schedule parameters, normalization
statistics, condition layout, skeleton hierarchy and optimizer step.
"""
from __future__ import annotations

import io
import json
import struct
from dataclasses import dataclass, field

import numpy as np

MAGIC = b"GDCK"
VERSION = 1


class CheckpointError(ValueError):
    pass


@dataclass
class Checkpoint:
    header: dict
    tensors: dict[str, np.ndarray] = field(default_factory=dict)


def encode_checkpoint(ckpt: Checkpoint) -> bytes:
    buf = io.BytesIO()
    head = json.dumps(ckpt.header, sort_keys=True).encode("utf-8")
    buf.write(MAGIC + struct.pack("<II", VERSION, len(head)) + head)
    buf.write(struct.pack("<I", len(ckpt.tensors)))
    for name in sorted(ckpt.tensors):
        arr = np.asarray(ckpt.tensors[name], dtype="<f8", order="C")
        nb = name.encode("utf-8")
        buf.write(struct.pack("<I", len(nb)) + nb + struct.pack("<I", arr.ndim))
        buf.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
        buf.write(arr.tobytes())
    return buf.getvalue()


def decode_checkpoint(data: bytes) -> Checkpoint:
    if data[:4] != MAGIC:
        raise CheckpointError("not a GDCK checkpoint")
    try:
        version, hlen = struct.unpack_from("<II", data, 4)
        if version != VERSION:
            raise CheckpointError(f"unsupported checkpoint version {version}")
        pos = 12
        header = json.loads(data[pos:pos + hlen].decode("utf-8"))
        pos += hlen
        (n,) = struct.unpack_from("<I", data, pos)
        pos += 4
        tensors = {}
        for _ in range(n):
            (nl,) = struct.unpack_from("<I", data, pos)
            name = data[pos + 4:pos + 4 + nl].decode("utf-8")
            pos += 4 + nl
            (rank,) = struct.unpack_from("<I", data, pos)
            dims = struct.unpack_from(f"<{rank}I", data, pos + 4)
            pos += 4 + 4 * rank
            count = int(np.prod(dims)) if rank else 1
            if pos + 8 * count > len(data):
                raise CheckpointError(f"tensor {name!r} is truncated")
            tensors[name] = np.frombuffer(data, dtype="<f8", count=count, offset=pos).reshape(dims).copy()
            pos += 8 * count
    except (struct.error, UnicodeDecodeError, json.JSONDecodeError) as e:
        raise CheckpointError(f"corrupt checkpoint: {e}") from None
    if pos != len(data):
        raise CheckpointError("trailing bytes after the last tensor")
    return Checkpoint(header, tensors)


def save_checkpoint(path, ckpt: Checkpoint) -> None:
    with open(path, "wb") as f:
        f.write(encode_checkpoint(ckpt))


def load_checkpoint(path) -> Checkpoint:
    with open(path, "rb") as f:
        return decode_checkpoint(f.read())
