"""Weight checkpoint file.

Layout:

    magic "LCW1" | u16 version | u32 config_len | config JSON (utf-8)
    | u32 param_count
    | per param: u16 name_len, name utf-8, u8 ndim, u32 dim...
    | u64 data_len | data: raw little-endian float32, params in table order
    | u32 CRC-32 of the data section

The config JSON carries whatever graph description the caller needs to
rebuild the exact networks before loading values.
"""

from __future__ import annotations

import json
import os
import struct
import zlib

import numpy as np

from ..errors import BitstreamError, ChecksumError

MAGIC = b"LCW1"
VERSION = 1


def params_checksum(params) -> int:
    """CRC-32 over the concatenated little-endian float32 parameter bytes."""
    crc = 0
    for p in params:
        crc = zlib.crc32(np.ascontiguousarray(p.value, dtype="<f4").tobytes(), crc)
    return crc


def save_checkpoint(path, params, config: dict) -> None:
    config_blob = json.dumps(config, sort_keys=True).encode("utf-8")
    table = bytearray()
    data = bytearray()
    for p in params:
        name = p.name.encode("utf-8")
        table += struct.pack(">H", len(name)) + name
        table += struct.pack(">B", p.value.ndim)
        table += struct.pack(f">{p.value.ndim}I", *p.value.shape)
        data += np.ascontiguousarray(p.value, dtype="<f4").tobytes()
    blob = (MAGIC + struct.pack(">HI", VERSION, len(config_blob)) + config_blob
            + struct.pack(">I", len(params)) + bytes(table)
            + struct.pack(">Q", len(data)) + bytes(data)
            + struct.pack(">I", zlib.crc32(bytes(data))))
    tmp = os.fspath(path) + ".tmp"
    with open(tmp, "wb") as fh:
        fh.write(blob)
    os.replace(tmp, os.fspath(path))


def load_checkpoint(path):
    """Returns (config dict, {name: float32 array}, data checksum)."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != MAGIC:
        raise BitstreamError(f"bad checkpoint magic {blob[:4]!r}")
    version, config_len = struct.unpack_from(">HI", blob, 4)
    if version != VERSION:
        raise BitstreamError(f"unsupported checkpoint version {version}")
    pos = 10
    config = json.loads(blob[pos:pos + config_len].decode("utf-8"))
    pos += config_len
    (count,) = struct.unpack_from(">I", blob, pos)
    pos += 4
    entries = []
    for _ in range(count):
        (name_len,) = struct.unpack_from(">H", blob, pos)
        pos += 2
        name = blob[pos:pos + name_len].decode("utf-8")
        pos += name_len
        (ndim,) = struct.unpack_from(">B", blob, pos)
        pos += 1
        shape = struct.unpack_from(f">{ndim}I", blob, pos)
        pos += 4 * ndim
        entries.append((name, shape))
    (data_len,) = struct.unpack_from(">Q", blob, pos)
    pos += 8
    data = blob[pos:pos + data_len]
    if len(data) < data_len:
        raise BitstreamError("checkpoint data truncated")
    pos += data_len
    (stored_crc,) = struct.unpack_from(">I", blob, pos)
    if zlib.crc32(data) != stored_crc:
        raise ChecksumError("checkpoint data fails the stored checksum")
    values = {}
    offset = 0
    for name, shape in entries:
        n = int(np.prod(shape, dtype=np.int64)) if shape else 1
        arr = np.frombuffer(data, dtype="<f4", count=n, offset=offset)
        values[name] = arr.reshape(shape).astype(np.float32)
        offset += 4 * n
    if offset != data_len:
        raise BitstreamError("checkpoint table does not match data length")
    return config, values, stored_crc
