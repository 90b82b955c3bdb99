"""Binary checkpoints.

Layout (little endian)::

    b"QNSCH1"
    uint32 version, uint32 dim, uint32 n, uint64 step, float64 time
    uint32 length, parameter block (UTF-8 JSON of the resolved config)
    uint32 CRC-32 of everything above
    uint32 payload count
    per payload: uint16 name length, name, uint64 value count, float64 values (row-major)
    uint32 CRC-32 of the payload section
"""
from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import CheckpointError

MAGIC = b"QNSCH1"
VERSION = 1
_HEAD = struct.Struct("<IIIQd")


@dataclass
class Checkpoint:
    dim: int
    n: int
    step: int
    time: float
    params: str
    payloads: dict = field(default_factory=dict)

    def array(self, name: str) -> np.ndarray:
        try:
            flat = self.payloads[name]
        except KeyError:
            raise CheckpointError(f"checkpoint has no payload {name!r}") from None
        if name.endswith("time"):
            return flat
        return flat.reshape((self.n,) * self.dim)


def write_checkpoint(path, ckpt: Checkpoint):
    params = ckpt.params.encode("utf-8")
    head = MAGIC + _HEAD.pack(VERSION, ckpt.dim, ckpt.n, ckpt.step, ckpt.time) + struct.pack("<I", len(params)) + params
    head += struct.pack("<I", zlib.crc32(head))
    body = bytearray(struct.pack("<I", len(ckpt.payloads)))
    for name, arr in ckpt.payloads.items():
        raw = np.ascontiguousarray(arr, dtype="<f8").ravel()
        nb = name.encode("utf-8")
        body += struct.pack("<H", len(nb)) + nb + struct.pack("<Q", raw.size) + raw.tobytes()
    body += struct.pack("<I", zlib.crc32(bytes(body)))
    tmp = Path(str(path) + ".tmp")
    tmp.write_bytes(head + bytes(body))
    tmp.replace(path)


def read_checkpoint(path) -> Checkpoint:
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from None
    if not data.startswith(MAGIC):
        raise CheckpointError(f"{path}: bad magic, not a checkpoint")
    try:
        off = len(MAGIC)
        version, dim, n, step, time = _HEAD.unpack_from(data, off)
        off += _HEAD.size
        (plen,) = struct.unpack_from("<I", data, off)
        off += 4
        params = data[off:off + plen].decode("utf-8")
        off += plen
        (crc,) = struct.unpack_from("<I", data, off)
        if crc != zlib.crc32(data[:off]):
            raise CheckpointError(f"{path}: header checksum mismatch")
        if version != VERSION:
            raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
        off += 4
        body_start = off
        (count,) = struct.unpack_from("<I", data, off)
        off += 4
        payloads = {}
        for _ in range(count):
            (nl,) = struct.unpack_from("<H", data, off)
            off += 2
            name = data[off:off + nl].decode("utf-8")
            off += nl
            (size,) = struct.unpack_from("<Q", data, off)
            off += 8
            payloads[name] = np.frombuffer(data, dtype="<f8", count=size, offset=off).astype(float)
            off += 8 * size
        (bcrc,) = struct.unpack_from("<I", data, off)
        if bcrc != zlib.crc32(data[body_start:off]):
            raise CheckpointError(f"{path}: payload checksum mismatch")
    except (struct.error, ValueError, UnicodeDecodeError) as exc:
        raise CheckpointError(f"{path}: truncated or corrupt checkpoint ({exc})") from None
    return Checkpoint(dim, n, step, time, params, payloads)
