"""METEOR-lite: exact + suffix-stem matching with the fragmentation penalty.

No synonym or paraphrase stage.  Stem matching is English only and uses
``stem`` below, a fixed suffix table:

    ing, ed, es, s   (longest first; stripped only if >= 3 characters remain,
                      and a trailing "ss" is never stripped to "s")

Alignment is chosen exactly rather than by beam search: among all one-to-one
alignments it maximizes exact matches, then total matches, then minimizes
the number of chunks.  Very repetitive inputs can make the exact search
expensive, so past ``SEARCH_LIMIT`` memo states it falls back to a greedy
left-to-right alignment.
"""

from __future__ import annotations

from functools import lru_cache
from typing import Sequence

from captionforge.text import Language

ALPHA = 0.9
BETA = 3.0
GAMMA = 0.5
SEARCH_LIMIT = 200_000

_SUFFIXES = ("ing", "ed", "es", "s")


def stem(word: str) -> str:
    for suf in _SUFFIXES:
        if word.endswith(suf) and len(word) - len(suf) >= 3:
            if suf == "s" and word.endswith("ss"):
                return word
            return word[: -len(suf)]
    return word


class _SearchTooLarge(Exception):
    pass


def _candidate_pairs(cand, ref, use_stems):
    cstem = [stem(t) for t in cand] if use_stems else None
    rstem = [stem(t) for t in ref] if use_stems else None
    pairs = []
    for i, c in enumerate(cand):
        row = []
        for j, r in enumerate(ref):
            if c == r:
                row.append((j, 1))
            elif use_stems and cstem[i] == rstem[j]:
                row.append((j, 0))
        pairs.append(tuple(row))
    return pairs


def _exact_alignment(pairs):
    """Best (exact, total, -chunks) over all alignments, by memoized search."""
    n = len(pairs)
    states = [0]

    @lru_cache(maxsize=None)
    def best(i, used, prev):
        states[0] += 1
        if states[0] > SEARCH_LIMIT:
            raise _SearchTooLarge
        if i == n:
            return (0, 0, 0)
        out = best(i + 1, used, -2)
        for j, exact in pairs[i]:
            if used >> j & 1:
                continue
            e, t, c = best(i + 1, used | (1 << j), j)
            cand = (e + exact, t + 1, c - (0 if j == prev + 1 else 1))
            if cand > out:
                out = cand
        return out

    try:
        return best(0, 0, -2)
    finally:
        best.cache_clear()


def _greedy_alignment(pairs):
    used = set()
    prev = -2
    exact = total = chunks = 0
    for row in pairs:
        free = [(j, e) for j, e in row if j not in used]
        if not free:
            prev = -2
            continue
        j, e = min(free, key=lambda p: (p[0] != prev + 1, -p[1], p[0]))
        used.add(j)
        exact += e
        total += 1
        if j != prev + 1:
            chunks += 1
        prev = j
    return exact, total, -chunks


def align(cand: Sequence[str], ref: Sequence[str], use_stems: bool = True) -> tuple[int, int]:
    """Return ``(matches, chunks)`` of the chosen alignment."""
    pairs = _candidate_pairs(cand, ref, use_stems)
    try:
        _, total, neg_chunks = _exact_alignment(pairs)
    except _SearchTooLarge:
        _, total, neg_chunks = _greedy_alignment(pairs)
    return total, -neg_chunks


def meteor_single(cand, ref, language=Language.ENGLISH) -> float:
    if not cand or not ref:
        return 0.0
    use_stems = Language.parse(language) is Language.ENGLISH
    matches, chunks = align(cand, ref, use_stems)
    if matches == 0:
        return 0.0
    prec = matches / len(cand)
    rec = matches / len(ref)
    fmean = prec * rec / (ALPHA * prec + (1 - ALPHA) * rec)
    penalty = GAMMA * (chunks / matches) ** BETA
    return fmean * (1 - penalty)


def meteor_lite(cand: Sequence[str], refs: Sequence[Sequence[str]], language=Language.ENGLISH) -> float:
    if not refs:
        raise ValueError("reference set must be non-empty")
    return max(meteor_single(cand, ref, language) for ref in refs)
