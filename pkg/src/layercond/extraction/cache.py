"""Embedding cache: post-extraction, pre-projection matrices keyed by caption hash.

File layout (little-endian)::

    b"EMB1" | u32 version | u32 len + encoder digest | u32 len + strategy tag | u32 n_records
    n_records x ( 8-byte caption hash | u32 T | u32 D | f32 payload[T*D] )
"""

from __future__ import annotations

import hashlib
import os
import struct
from typing import Callable

import numpy as np

from ..errors import ConfigurationError, DataError, IntegrityError
from .conditioning import encode_captions

MAGIC = b"EMB1"
VERSION = 1


def caption_hash(caption: str) -> bytes:
    return hashlib.sha256(caption.encode("utf-8")).digest()[:8]


def _pack_str(s: str) -> bytes:
    raw = s.encode("utf-8")
    return struct.pack("<I", len(raw)) + raw


class EmbeddingCache:
    def __init__(self, encoder_digest: str, strategy_tag: str, records: dict[bytes, np.ndarray] | None = None,
                 hash_fn: Callable[[str], bytes] = caption_hash):
        self.encoder_digest = encoder_digest
        self.strategy_tag = strategy_tag
        self.records = records if records is not None else {}
        self.hash_fn = hash_fn
        self._captions: dict[bytes, str] = {}

    def __len__(self) -> int:
        return len(self.records)

    def add(self, caption: str, matrix: np.ndarray) -> None:
        key = self.hash_fn(caption)
        prev = self._captions.get(key)
        if prev is not None and prev != caption:
            raise IntegrityError(f"caption hash collision between {prev!r} and {caption!r}")
        self._captions[key] = caption
        self.records[key] = np.asarray(matrix, dtype=np.float32)

    def lookup(self, caption: str, strategy_tag: str | None = None) -> np.ndarray:
        if strategy_tag is not None:
            self.check_strategy(strategy_tag)
        try:
            return self.records[self.hash_fn(caption)]
        except KeyError:
            raise DataError(f"caption not in embedding cache: {caption!r}") from None

    def check_strategy(self, strategy_tag: str) -> None:
        if strategy_tag != self.strategy_tag:
            raise ConfigurationError(f"embedding cache built for strategy {self.strategy_tag!r}, "
                                     f"run uses {strategy_tag!r}")

    def check_encoder(self, digest: str) -> None:
        if digest != self.encoder_digest:
            raise ConfigurationError(f"embedding cache encoder digest {self.encoder_digest} != {digest}")

    def to_bytes(self) -> bytes:
        parts = [MAGIC, struct.pack("<I", VERSION), _pack_str(self.encoder_digest), _pack_str(self.strategy_tag),
                 struct.pack("<I", len(self.records))]
        for key in sorted(self.records):
            mat = np.asarray(self.records[key], dtype="<f4")
            t, d = mat.shape
            parts.append(key + struct.pack("<II", t, d) + mat.tobytes(order="C"))
        return b"".join(parts)

    def save(self, path) -> None:
        tmp = f"{path}.tmp"
        with open(tmp, "wb") as fh:
            fh.write(self.to_bytes())
        os.replace(tmp, path)

    @classmethod
    def from_bytes(cls, buf: bytes) -> "EmbeddingCache":
        if buf[:4] != MAGIC:
            raise IntegrityError("not an embedding cache (bad magic)")
        try:
            off = 4
            (version,) = struct.unpack_from("<I", buf, off)
            off += 4
            if version != VERSION:
                raise IntegrityError(f"unsupported embedding cache version {version}")
            strings = []
            for _ in range(2):
                (n,) = struct.unpack_from("<I", buf, off)
                off += 4
                strings.append(buf[off:off + n].decode("utf-8"))
                off += n
            (count,) = struct.unpack_from("<I", buf, off)
            off += 4
            records = {}
            for _ in range(count):
                key = bytes(buf[off:off + 8])
                t, d = struct.unpack_from("<II", buf, off + 8)
                off += 16
                if off + 4 * t * d > len(buf) or len(key) != 8:
                    raise IntegrityError("embedding cache truncated")
                records[key] = np.frombuffer(buf, "<f4", t * d, off).reshape(t, d).astype(np.float32)
                off += 4 * t * d
        except struct.error as exc:
            raise IntegrityError("embedding cache truncated") from exc
        if off != len(buf):
            raise IntegrityError(f"{len(buf) - off} trailing bytes after embedding cache records")
        return cls(strings[0], strings[1], records)

    @classmethod
    def load(cls, path) -> "EmbeddingCache":
        with open(path, "rb") as fh:
            return cls.from_bytes(fh.read())


def precompute_cache(corpus, encoder, vocab, strategy, hash_fn: Callable[[str], bytes] = caption_hash) -> EmbeddingCache:
    captions = list(dict.fromkeys(corpus))
    seen: dict[bytes, str] = {}
    for c in captions:  # collisions surface before any encoding work
        prev = seen.setdefault(hash_fn(c), c)
        if prev != c:
            raise IntegrityError(f"caption hash collision between {prev!r} and {c!r}")
    cache = EmbeddingCache(encoder.config.digest(), strategy.tag, hash_fn=hash_fn)
    feats, _ = encode_captions(captions, encoder, vocab, strategy)
    for c, f in zip(captions, feats):
        cache.add(c, f)
    return cache
