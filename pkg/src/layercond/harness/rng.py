"""Named random substreams derived from one root seed.

A stream depends only on (root seed, name), never on how many other
streams were drawn before it.
"""

from __future__ import annotations

import hashlib

import numpy as np

CORPUS, INIT, DROP, TIMESTEPS, NOISE, BATCHES, SAMPLING, ENCODER = (
    "corpus", "init", "drop", "timesteps", "noise", "batches", "sampling", "encoder")


def stream_seed(root: int, name: str) -> np.random.SeedSequence:
    words = np.frombuffer(hashlib.sha256(name.encode("utf-8")).digest()[:16], dtype="<u4")
    return np.random.SeedSequence([int(root) & 0xFFFFFFFF, int(root) >> 32 & 0xFFFFFFFF, *map(int, words)])


def substream(root: int, name: str) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(stream_seed(root, name)))


def substream_int(root: int, name: str) -> int:
    return int(stream_seed(root, name).generate_state(1, np.uint32)[0])
