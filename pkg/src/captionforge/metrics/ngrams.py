"""N-gram multisets shared by BLEU and CIDEr."""

from __future__ import annotations

from collections import Counter
from typing import Sequence


class NGramMultiset(dict):
    """Maps order ``n`` to a Counter of n-gram tuples of that order."""

    def __init__(self, max_n: int = 4):
        super().__init__((n, Counter()) for n in range(1, max_n + 1))
        self.max_n = max_n

    def total(self, n: int) -> int:
        return sum(self[n].values())


def extract_ngrams(tokens: Sequence[str], max_n: int = 4) -> NGramMultiset:
    if max_n < 1:
        raise ValueError(f"max_n must be >= 1, got {max_n}")
    tokens = tuple(tokens)
    grams = NGramMultiset(max_n)
    for n in range(1, max_n + 1):
        counter = grams[n]
        for i in range(len(tokens) - n + 1):
            counter[tokens[i:i + n]] += 1
    return grams
