"""BLEU at corpus level (COCO aggregation) and smoothed sentence level.

Clipped precision for order n is ``sum_g min(c(g), max_ref c_ref(g)) / sum_g c(g)``.
The brevity penalty uses, per sentence, the reference length closest to the
candidate length (ties go to the shorter reference).

Orders for which the candidate side has no n-grams at all have a vacuous
precision of 1 at corpus level; the brevity penalty is what punishes short
output.  At sentence level any order with zero matches gets add-one smoothing
on both numerator and denominator, which also covers the vacuous case.
"""

from __future__ import annotations

import math
from typing import Mapping, Sequence

from captionforge.errors import MismatchedIds
from captionforge.metrics.ngrams import extract_ngrams


def closest_ref_length(cand_len: int, ref_lens: Sequence[int]) -> int:
    return min(ref_lens, key=lambda r: (abs(r - cand_len), r))


def bleu_stats(cand: Sequence[str], refs: Sequence[Sequence[str]], max_n: int = 4):
    """Return ``(matches, totals, cand_len, ref_len)`` for one sentence."""
    if not refs:
        raise ValueError("reference set must be non-empty")
    cand_grams = extract_ngrams(cand, max_n)
    max_ref = {n: {} for n in range(1, max_n + 1)}
    for ref in refs:
        ref_grams = extract_ngrams(ref, max_n)
        for n in range(1, max_n + 1):
            slot = max_ref[n]
            for g, c in ref_grams[n].items():
                if c > slot.get(g, 0):
                    slot[g] = c
    matches, totals = [], []
    for n in range(1, max_n + 1):
        slot = max_ref[n]
        matches.append(sum(min(c, slot.get(g, 0)) for g, c in cand_grams[n].items()))
        totals.append(max(0, len(cand) - n + 1))
    return matches, totals, len(cand), closest_ref_length(len(cand), [len(r) for r in refs])


def brevity_penalty(cand_len: int, ref_len: int) -> float:
    if cand_len >= ref_len:
        return 1.0
    if cand_len == 0:
        return 0.0
    return math.exp(1.0 - ref_len / cand_len)


def _geometric(precisions: Sequence[float]) -> float:
    if any(p == 0.0 for p in precisions):
        return 0.0
    return math.exp(sum(math.log(p) for p in precisions) / len(precisions))


def bleu_corpus(cands: Mapping[str, Sequence[str]], refs: Mapping[str, Sequence[Sequence[str]]],
                max_n: int = 4) -> list[float]:
    """Corpus BLEU-1..``max_n`` over id-aligned candidates and reference sets."""
    if set(cands) != set(refs):
        raise MismatchedIds("candidate and reference ids differ")
    matches = [0] * max_n
    totals = [0] * max_n
    cand_len = ref_len = 0
    for key in sorted(cands):
        m, t, c, r = bleu_stats(cands[key], refs[key], max_n)
        for k in range(max_n):
            matches[k] += m[k]
            totals[k] += t[k]
        cand_len += c
        ref_len += r
    bp = brevity_penalty(cand_len, ref_len)
    precisions = [m / t if t else 1.0 for m, t in zip(matches, totals)]
    return [bp * _geometric(precisions[:n]) for n in range(1, max_n + 1)]


def bleu_sentence_all(cand: Sequence[str], refs: Sequence[Sequence[str]], max_n: int = 4) -> list[float]:
    """Smoothed sentence BLEU for every order 1..max_n."""
    matches, totals, c, r = bleu_stats(cand, refs, max_n)
    precisions = [(m + 1) / (t + 1) if m == 0 else m / t for m, t in zip(matches, totals)]
    bp = brevity_penalty(c, r)
    return [bp * _geometric(precisions[:n]) for n in range(1, max_n + 1)]


def bleu_sentence(cand: Sequence[str], refs: Sequence[Sequence[str]], max_n: int = 4) -> float:
    return bleu_sentence_all(cand, refs, max_n)[-1]
