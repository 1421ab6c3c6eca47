"""Binary tensor sections shared by checkpoints.

Section layout (all little-endian)::

    u32 name_len | name (UTF-8) | u8 dtype (0 = f32) | u32 rank | u64 dims[rank] | f32 payload
"""

from __future__ import annotations

import struct
from typing import BinaryIO, Iterator

import numpy as np

from ..errors import IntegrityError

DTYPE_F32 = 0


def encode_section(name: str, array: np.ndarray) -> bytes:
    raw_name = name.encode("utf-8")
    arr = np.asarray(array, dtype="<f4")
    head = struct.pack("<I", len(raw_name)) + raw_name + struct.pack("<BI", DTYPE_F32, arr.ndim)
    dims = struct.pack(f"<{arr.ndim}Q", *arr.shape)
    return head + dims + arr.tobytes(order="C")


def decode_sections(buf: bytes, offset: int = 0, end: int | None = None) -> Iterator[tuple[str, np.ndarray]]:
    end = len(buf) if end is None else end
    while offset < end:
        try:
            (nlen,) = struct.unpack_from("<I", buf, offset)
            offset += 4
            name = buf[offset:offset + nlen].decode("utf-8")
            offset += nlen
            dtype, rank = struct.unpack_from("<BI", buf, offset)
            offset += 5
            dims = struct.unpack_from(f"<{rank}Q", buf, offset)
            offset += 8 * rank
        except (struct.error, UnicodeDecodeError) as exc:
            raise IntegrityError(f"truncated tensor section at byte {offset}") from exc
        if dtype != DTYPE_F32:
            raise IntegrityError(f"section {name!r}: unknown dtype byte {dtype}")
        count = int(np.prod(dims)) if rank else 1
        nbytes = 4 * count
        if offset + nbytes > end:
            raise IntegrityError(f"section {name!r} payload runs past end of buffer")
        arr = np.frombuffer(buf, dtype="<f4", count=count, offset=offset).reshape(dims).astype(np.float32)
        offset += nbytes
        yield name, arr


def write_sections(fh: BinaryIO, tensors: dict[str, np.ndarray]) -> None:
    for name, arr in tensors.items():
        fh.write(encode_section(name, arr))
