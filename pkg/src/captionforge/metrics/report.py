"""Corpus scoring into a ``MetricReport`` with the COCO-style key names."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Mapping, Sequence

from captionforge.errors import MismatchedIds
from captionforge.metrics.bleu import bleu_corpus, bleu_sentence_all
from captionforge.metrics.cider import IdfTable, build_idf, cider_d
from captionforge.metrics.meteor import meteor_lite
from captionforge.metrics.rouge import rouge_l
from captionforge.text import Language

METRIC_KEYS = ("CIDEr", "Bleu_1", "Bleu_2", "Bleu_3", "Bleu_4", "METEOR", "ROUGE_L")


@dataclass
class MetricReport:
    corpus: dict[str, float]
    per_sentence: dict[str, dict[str, float]] = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "corpus": {k: self.corpus[k] for k in METRIC_KEYS},
            "per_sentence": {
                key: {k: row[k] for k in METRIC_KEYS} for key, row in sorted(self.per_sentence.items())
            },
        }


def score_sentence(cand: Sequence[str], refs: Sequence[Sequence[str]], idf: IdfTable,
                   cider: str = "d", language=Language.ENGLISH) -> dict[str, float]:
    bleus = bleu_sentence_all(cand, refs, 4)
    row = {"CIDEr": cider_d(cand, refs, idf, clipped=(cider == "d"))}
    for n, b in enumerate(bleus, start=1):
        row[f"Bleu_{n}"] = b
    row["METEOR"] = meteor_lite(cand, refs, language)
    row["ROUGE_L"] = rouge_l(cand, refs)
    return row


def score_corpus(cands: Mapping[str, Sequence[str]], refs: Mapping[str, Sequence[Sequence[str]]],
                 idf: IdfTable | None = None, cider: str = "d", language=Language.ENGLISH,
                 jobs: int = 1) -> MetricReport:
    """Score id-aligned candidates against reference sets.

    BLEU at corpus level uses its own n-gram aggregation; every other corpus
    number is the mean of the per-sentence scores.  ``idf`` defaults to a table
    built from ``refs`` themselves.  Results do not depend on ``jobs``.
    """
    if set(cands) != set(refs):
        missing = sorted(set(cands) ^ set(refs))[:5]
        raise MismatchedIds(f"candidate and reference ids differ, e.g. {missing}")
    if cider not in ("d", "plain"):
        raise ValueError(f"cider must be 'd' or 'plain', got {cider!r}")
    keys = sorted(cands)
    if idf is None:
        idf = build_idf(refs[k] for k in keys)

    def one(key):
        return score_sentence(cands[key], refs[key], idf, cider, language)

    if jobs > 1 and len(keys) > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(one, keys))
    else:
        rows = [one(k) for k in keys]
    per_sentence = dict(zip(keys, rows))

    corpus = {}
    for name in ("CIDEr", "METEOR", "ROUGE_L"):
        corpus[name] = sum(r[name] for r in rows) / len(rows) if rows else 0.0
    for n, b in enumerate(bleu_corpus(cands, refs, 4), start=1):
        corpus[f"Bleu_{n}"] = b
    return MetricReport(corpus, per_sentence)
