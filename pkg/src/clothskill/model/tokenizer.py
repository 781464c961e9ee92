"""Closed-vocabulary tokenizer over the instruction language."""

from __future__ import annotations

from functools import lru_cache

import numpy as np

from ..grammar import instruction_words, split_words

PAD, UNK = 0, 1
SPECIALS = ("<pad>", "<unk>")


@lru_cache(maxsize=1)
def vocab() -> tuple[str, ...]:
    return SPECIALS + tuple(instruction_words())


@lru_cache(maxsize=1)
def _index() -> dict[str, int]:
    return {w: i for i, w in enumerate(vocab())}


def vocab_size() -> int:
    return len(vocab())


def tokenize(text: str, max_len: int = 12) -> np.ndarray:
    """Lowercase, split on non-alphanumerics, map to ids, pad/truncate to ``max_len``."""
    idx = _index()
    ids = [idx.get(w, UNK) for w in split_words(text)][:max_len]
    out = np.full(max_len, PAD, dtype=np.int64)
    out[: len(ids)] = ids
    return out
