"""ROUGE-L: longest-common-subsequence F-measure, best reference wins."""

from __future__ import annotations

from typing import Sequence

BETA = 1.2


def lcs_length(a: Sequence[str], b: Sequence[str]) -> int:
    if len(a) < len(b):
        a, b = b, a
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        for j, y in enumerate(b):
            cur.append(prev[j] + 1 if x == y else max(prev[j + 1], cur[j]))
        prev = cur
    return prev[-1]


def rouge_l_single(cand: Sequence[str], ref: Sequence[str], beta: float = BETA) -> float:
    if not cand or not ref:
        return 0.0
    lcs = lcs_length(cand, ref)
    if lcs == 0:
        return 0.0
    prec = lcs / len(cand)
    rec = lcs / len(ref)
    b2 = beta * beta
    return (1 + b2) * prec * rec / (rec + b2 * prec)


def rouge_l(cand: Sequence[str], refs: Sequence[Sequence[str]], beta: float = BETA) -> float:
    if not refs:
        raise ValueError("reference set must be non-empty")
    return max(rouge_l_single(cand, ref, beta) for ref in refs)
