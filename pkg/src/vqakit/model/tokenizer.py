"""A small word-level tokenizer.

Digits are split one per token so stalling strings like ``00111`` map onto a
ten-symbol alphabet instead of blowing up the vocabulary.
"""

from __future__ import annotations

import re
from collections import Counter
from typing import Iterable, Sequence

from ..quality import LEVEL_WORDS

PAD, UNK, BOS, EOS = "<pad>", "<unk>", "<bos>", "<eos>"
SPECIALS = (PAD, UNK, BOS, EOS)

_TOKEN = re.compile(r"[a-z]+(?:'[a-z]+)?|\d|[^\w\s]")


def split_words(text: str) -> list[str]:
    return _TOKEN.findall(text.lower())


class WordTokenizer:
    def __init__(self, tokens: Sequence[str]):
        if tuple(tokens[: len(SPECIALS)]) != SPECIALS:
            raise ValueError("vocabulary must start with the special tokens")
        self.tokens = list(tokens)
        self.index = {t: i for i, t in enumerate(self.tokens)}
        if len(self.index) != len(self.tokens):
            raise ValueError("duplicate tokens in vocabulary")

    @classmethod
    def fit(cls, texts: Iterable[str], min_freq: int = 1) -> "WordTokenizer":
        counts = Counter()
        for text in texts:
            counts.update(split_words(text))
        words = sorted(w for w, c in counts.items() if c >= min_freq)
        base = list(LEVEL_WORDS) + [str(d) for d in range(10)]
        extra = [w for w in words if w not in base]
        return cls(list(SPECIALS) + base + extra)

    def __len__(self) -> int:
        return len(self.tokens)

    @property
    def pad_id(self) -> int:
        return 0

    @property
    def unk_id(self) -> int:
        return 1

    @property
    def bos_id(self) -> int:
        return 2

    @property
    def eos_id(self) -> int:
        return 3

    def encode(self, text: str) -> list[int]:
        return [self.index.get(w, self.unk_id) for w in split_words(text)]

    def token_id(self, word: str) -> int:
        return self.index.get(word.lower(), self.unk_id)

    def decode(self, ids: Iterable[int]) -> str:
        words = [self.tokens[i] for i in ids if self.tokens[i] not in (PAD, BOS, EOS)]
        text = " ".join(words)
        return re.sub(r" (?=[^\w\s'])", "", text)
