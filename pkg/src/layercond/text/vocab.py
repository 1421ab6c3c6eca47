"""Word-level vocabulary and tokenizer over a closed caption grammar."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

import numpy as np

from ..errors import DataError, LengthError, VocabularyError

PAD, BOS, EOS, MASK, NULL = "<pad>", "<bos>", "<eos>", "<mask>", "<null>"
RESERVED = (PAD, BOS, EOS, MASK, NULL)
DEFAULT_CONTEXT = 32

_HEADER_MAGIC = "#vocab v1"


class Vocabulary:
    """Dense ids; the five reserved tokens always occupy ids 0..4."""

    def __init__(self, words: Iterable[str]):
        tokens = list(RESERVED)
        seen = set(tokens)
        for w in words:
            if not w or any(ch.isspace() for ch in w):
                raise DataError(f"invalid vocabulary word {w!r}")
            if w not in seen:
                seen.add(w)
                tokens.append(w)
        self.tokens = tokens
        self._ids = {tok: i for i, tok in enumerate(tokens)}

    def __len__(self) -> int:
        return len(self.tokens)

    def __contains__(self, word: str) -> bool:
        return word in self._ids

    def __eq__(self, other) -> bool:
        return isinstance(other, Vocabulary) and self.tokens == other.tokens

    def id(self, token: str) -> int:
        try:
            return self._ids[token]
        except KeyError:
            raise VocabularyError(f"unknown word {token!r}") from None

    def token(self, idx: int) -> str:
        return self.tokens[idx]

    pad_id = property(lambda self: self._ids[PAD])
    bos_id = property(lambda self: self._ids[BOS])
    eos_id = property(lambda self: self._ids[EOS])
    mask_id = property(lambda self: self._ids[MASK])
    null_id = property(lambda self: self._ids[NULL])

    def unknown_words(self, text: str) -> list[str]:
        return sorted({w for w in text.split() if w not in self._ids})

    def dumps(self) -> str:
        # 4 header lines, then one token per line in id order
        reserved = " ".join(f"{tok}={self._ids[tok]}" for tok in RESERVED)
        header = [_HEADER_MAGIC, f"#size {len(self)}", f"#reserved {reserved}", "#tokens"]
        return "\n".join(header + self.tokens) + "\n"

    @classmethod
    def loads(cls, text: str) -> "Vocabulary":
        lines = text.split("\n")
        if lines and lines[-1] == "":
            lines.pop()
        if len(lines) < 4 or lines[0] != _HEADER_MAGIC:
            raise DataError("not a vocabulary file")
        size = int(lines[1].split()[1])
        body = lines[4:]
        if len(body) != size or tuple(body[:len(RESERVED)]) != RESERVED:
            raise DataError(f"vocabulary body has {len(body)} tokens, header says {size}")
        return cls(body[len(RESERVED):])


@dataclass(frozen=True)
class TokenSequence:
    ids: np.ndarray   # (T,) int64
    mask: np.ndarray  # (T,) bool, a prefix of ones

    def __len__(self) -> int:
        return len(self.ids)

    @property
    def length(self) -> int:
        return int(self.mask.sum())


def tokenize(text: str, vocab: Vocabulary, context: int = DEFAULT_CONTEXT) -> TokenSequence:
    words = text.split()
    if len(words) > context - 2:
        raise LengthError(f"caption has {len(words)} words; at most {context - 2} fit in context {context}")
    ids = np.full(context, vocab.pad_id, dtype=np.int64)
    seq = [vocab.bos_id] + [vocab.id(w) for w in words] + [vocab.eos_id]
    ids[:len(seq)] = seq
    mask = np.zeros(context, dtype=bool)
    mask[:len(seq)] = True
    return TokenSequence(ids, mask)


def tokenize_batch(texts: Iterable[str], vocab: Vocabulary, context: int = DEFAULT_CONTEXT):
    seqs = [tokenize(t, vocab, context) for t in texts]
    if not seqs:
        return np.zeros((0, context), np.int64), np.zeros((0, context), bool)
    return np.stack([s.ids for s in seqs]), np.stack([s.mask for s in seqs])
