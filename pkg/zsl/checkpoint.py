"""
Binary parameter checkpoints.

Layout (all integers little-endian):
    magic b"ZSLCKPT1" | uint32 version | uint32 tensor count
    per tensor: uint32 name length | utf-8 name | uint32 rank | uint64 dims[rank] | float64 values
"""

import os
import struct
from typing import Union

import numpy as np

from util import logger
from zsl.autodiff import ParamSet
from zsl.errors import FormatError

MAGIC = b"ZSLCKPT1"
VERSION = 1


def dumps_checkpoint(params: ParamSet) -> bytes:
    chunks = [MAGIC, struct.pack("<II", VERSION, len(params))]
    for name, t in params.items():
        encoded = name.encode("utf-8")
        chunks.append(struct.pack("<I", len(encoded)))
        chunks.append(encoded)
        chunks.append(struct.pack("<I", t.data.ndim))
        chunks.append(struct.pack(f"<{t.data.ndim}Q", *t.data.shape))
        chunks.append(np.ascontiguousarray(t.data, dtype="<f8").tobytes())
    return b"".join(chunks)


def loads_checkpoint(blob: bytes, source: str = "<bytes>") -> ParamSet:
    if blob[:len(MAGIC)] != MAGIC:
        raise FormatError(source, "not a checkpoint (bad magic)")
    offset = len(MAGIC)

    def take(fmt: str):
        nonlocal offset
        size = struct.calcsize(fmt)
        if offset + size > len(blob):
            raise FormatError(source, "truncated checkpoint")
        values = struct.unpack_from(fmt, blob, offset)
        offset += size
        return values

    version, count = take("<II")
    if version != VERSION:
        raise FormatError(source, f"unsupported checkpoint version {version}")

    params = ParamSet()
    for _ in range(count):
        (name_len,) = take("<I")
        if offset + name_len > len(blob):
            raise FormatError(source, "truncated checkpoint")
        name = blob[offset:offset + name_len].decode("utf-8")
        offset += name_len
        (rank,) = take("<I")
        dims = take(f"<{rank}Q")
        n_bytes = 8 * int(np.prod(dims, dtype=np.int64))
        if offset + n_bytes > len(blob):
            raise FormatError(source, f"truncated data for tensor '{name}'")
        values = np.frombuffer(blob, dtype="<f8", count=n_bytes // 8, offset=offset)
        offset += n_bytes
        params.add(name, values.reshape(dims).astype(np.float64))
    if offset != len(blob):
        raise FormatError(source, "trailing bytes after last tensor")
    return params


def save_checkpoint(path: Union[str, os.PathLike], params: ParamSet) -> None:
    logger.info(f"Saving checkpoint with {len(params)} tensors to {path}")
    with open(path, "wb") as fh:
        fh.write(dumps_checkpoint(params))


def load_checkpoint(path: Union[str, os.PathLike]) -> ParamSet:
    logger.info(f"Loading checkpoint from {path}")
    try:
        with open(path, "rb") as fh:
            blob = fh.read()
    except OSError as e:
        raise FormatError(path, f"cannot read checkpoint: {e}") from e
    return loads_checkpoint(blob, source=str(path))
