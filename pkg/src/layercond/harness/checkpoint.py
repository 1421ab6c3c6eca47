"""Checkpoint container.

Layout (little-endian)::

    b"TXE1" | u32 version | u32 text_len | config text (UTF-8) | u32 n_sections
    | tensor sections | 32-byte SHA-256 of everything before it
"""

from __future__ import annotations

import hashlib
import os
import struct
from dataclasses import dataclass

import numpy as np

from ..autodiff.serialize import decode_sections, encode_section
from ..errors import IntegrityError

MAGIC = b"TXE1"
VERSION = 1


@dataclass
class Checkpoint:
    config_text: str
    tensors: dict[str, np.ndarray]

    def to_bytes(self) -> bytes:
        text = self.config_text.encode("utf-8")
        parts = [MAGIC, struct.pack("<II", VERSION, len(text)), text, struct.pack("<I", len(self.tensors))]
        parts += [encode_section(name, arr) for name, arr in self.tensors.items()]
        body = b"".join(parts)
        return body + hashlib.sha256(body).digest()

    @classmethod
    def from_bytes(cls, buf: bytes) -> "Checkpoint":
        if len(buf) < 4 + 12 + 32 or buf[:4] != MAGIC:
            raise IntegrityError("not a checkpoint (bad magic or too short)")
        body, checksum = buf[:-32], buf[-32:]
        if hashlib.sha256(body).digest() != checksum:
            raise IntegrityError("checkpoint checksum mismatch; file is corrupted")
        version, tlen = struct.unpack_from("<II", body, 4)
        if version != VERSION:
            raise IntegrityError(f"unsupported checkpoint version {version}")
        off = 12
        text = body[off:off + tlen].decode("utf-8")
        off += tlen
        (count,) = struct.unpack_from("<I", body, off)
        tensors = dict(decode_sections(body, off + 4))
        if len(tensors) != count:
            raise IntegrityError(f"checkpoint lists {count} tensors but holds {len(tensors)}")
        return cls(text, tensors)

    def save(self, path) -> None:
        tmp = f"{path}.tmp"
        with open(tmp, "wb") as fh:
            fh.write(self.to_bytes())
        os.replace(tmp, path)

    @classmethod
    def load(cls, path) -> "Checkpoint":
        with open(path, "rb") as fh:
            return cls.from_bytes(fh.read())
