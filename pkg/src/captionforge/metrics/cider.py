"""CIDEr and CIDEr-D consensus scoring.

Document frequencies count reference *sets* (one per image/video): an n-gram
contributes once per set no matter how many of its references contain it.
N-grams that never occur in the reference corpus get idf 0, so hallucinated
n-grams add nothing to the candidate vector's dot product with any reference
but still cannot inflate the score.
"""

from __future__ import annotations

import math
from typing import Iterable, Mapping, Sequence

from captionforge.errors import EmptyIdf
from captionforge.metrics.ngrams import extract_ngrams

SIGMA = 6.0
MAX_N = 4


class IdfTable:
    def __init__(self, num_docs: int, doc_freq: Mapping[tuple, int], max_n: int = MAX_N):
        self.num_docs = int(num_docs)
        self.doc_freq = dict(doc_freq)
        self.max_n = max_n
        self._log_n = math.log(num_docs) if num_docs > 0 else 0.0

    def idf(self, gram: tuple) -> float:
        df = self.doc_freq.get(gram)
        if df is None:
            return 0.0
        return self._log_n - math.log(df)

    def __len__(self):
        return len(self.doc_freq)


def build_idf(refs: Iterable[Sequence[Sequence[str]]], max_n: int = MAX_N) -> IdfTable:
    """Document frequency table over a list of reference sets."""
    doc_freq: dict[tuple, int] = {}
    num_docs = 0
    for ref_set in refs:
        num_docs += 1
        seen = set()
        for ref in ref_set:
            grams = extract_ngrams(ref, max_n)
            for n in range(1, max_n + 1):
                seen.update(grams[n])
        for g in seen:
            doc_freq[g] = doc_freq.get(g, 0) + 1
    return IdfTable(num_docs, doc_freq, max_n)


def _tfidf(tokens, idf: IdfTable, max_n: int):
    grams = extract_ngrams(tokens, max_n)
    vecs, norms = [], []
    for n in range(1, max_n + 1):
        vec = {g: c * idf.idf(g) for g, c in grams[n].items()}
        vecs.append(vec)
        norms.append(math.sqrt(sum(v * v for v in vec.values())))
    return vecs, norms


def _similarity(vh, nh, lh, vr, nr, lr, clipped: bool, sigma: float, max_n: int) -> float:
    total = 0.0
    penalty = math.exp(-((lh - lr) ** 2) / (2 * sigma ** 2)) if clipped else 1.0
    for k in range(max_n):
        hyp, ref = vh[k], vr[k]
        val = 0.0
        for g, w in hyp.items():
            r = ref.get(g)
            if r is None:
                continue
            val += (min(w, r) if clipped else w) * r
        if nh[k] != 0 and nr[k] != 0:
            val /= nh[k] * nr[k]
        total += val * penalty
    return total / max_n


def cider_d(cand: Sequence[str], refs: Sequence[Sequence[str]], idf: IdfTable,
            sigma: float = SIGMA, clipped: bool = True) -> float:
    """CIDEr-D of one candidate against its reference set, in [0, 10].

    With ``clipped=False`` this is plain CIDEr: no count clipping and no
    Gaussian length penalty.
    """
    if idf.num_docs == 0:
        raise EmptyIdf("idf table was built from zero reference sets")
    if not refs:
        raise ValueError("reference set must be non-empty")
    max_n = idf.max_n
    vh, nh = _tfidf(cand, idf, max_n)
    score = 0.0
    for ref in refs:
        vr, nr = _tfidf(ref, idf, max_n)
        score += _similarity(vh, nh, len(cand), vr, nr, len(ref), clipped, sigma, max_n)
    return score / len(refs) * 10.0


def cider(cand, refs, idf: IdfTable) -> float:
    return cider_d(cand, refs, idf, clipped=False)
