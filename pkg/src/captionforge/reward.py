"""Hybrid reward: a nonnegative linear combination of sentence-level metrics."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from typing import Sequence

from captionforge.errors import InputError
from captionforge.metrics.bleu import bleu_sentence_all
from captionforge.metrics.cider import IdfTable, cider_d
from captionforge.metrics.meteor import meteor_lite
from captionforge.metrics.rouge import rouge_l
from captionforge.text import Caption, Language

# upper bound of each metric, used for the reward bound
METRIC_MAX = {"cider": 10.0, "bleu1": 1.0, "bleu2": 1.0, "bleu3": 1.0, "bleu4": 1.0,
              "meteor": 1.0, "rouge_l": 1.0}


@dataclass(frozen=True)
class HybridWeights:
    # toolkit defaults, not tuned values
    cider: float = 1.0
    bleu4: float = 0.5
    meteor: float = 1.0
    rouge_l: float = 0.5
    bleu1: float = 0.0
    bleu2: float = 0.0
    bleu3: float = 0.0

    def __post_init__(self):
        values = asdict(self)
        for name, w in values.items():
            if not w >= 0:
                raise InputError(f"weight {name} must be a nonnegative number, got {w!r}")
        if not any(w > 0 for w in values.values()):
            raise InputError("at least one reward weight must be positive")

    def items(self):
        return asdict(self).items()

    def upper_bound(self) -> float:
        return sum(w * METRIC_MAX[k] for k, w in self.items())

    def __add__(self, other: "HybridWeights") -> "HybridWeights":
        a, b = asdict(self), asdict(other)
        return HybridWeights(**{k: a[k] + b[k] for k in a})

    def scaled(self, factor: float) -> "HybridWeights":
        return HybridWeights(**{k: w * factor for k, w in self.items()})

    @classmethod
    def only(cls, **weights) -> "HybridWeights":
        base = dict.fromkeys(METRIC_MAX, 0.0)
        base.update(weights)
        return cls(**base)

    @classmethod
    def from_json(cls, obj: dict) -> "HybridWeights":
        unknown = set(obj) - set(METRIC_MAX)
        if unknown:
            raise InputError(f"unknown reward weight keys: {sorted(unknown)}")
        base = dict.fromkeys(METRIC_MAX, 0.0)
        base.update({k: float(v) for k, v in obj.items()})
        return cls(**base)

    @classmethod
    def load(cls, path) -> "HybridWeights":
        try:
            with open(path, encoding="utf-8") as f:
                return cls.from_json(json.load(f))
        except json.JSONDecodeError as exc:
            raise InputError(f"{path}: invalid JSON: {exc}") from None
        except (TypeError, ValueError) as exc:
            if isinstance(exc, InputError):
                raise
            raise InputError(f"{path}: bad weights: {exc}") from None


def _tokens(c):
    return c.tokens if isinstance(c, Caption) else c


def metric_terms(cand: Sequence[str], refs: Sequence[Sequence[str]], weights: HybridWeights,
                 idf: IdfTable, language=Language.ENGLISH) -> dict[str, float]:
    """Sentence-level scores for every metric carrying a nonzero weight."""
    w = dict(weights.items())
    terms = {}
    if w["cider"]:
        terms["cider"] = cider_d(cand, refs, idf)
    bleu_orders = [n for n in (1, 2, 3, 4) if w[f"bleu{n}"]]
    if bleu_orders:
        bleus = bleu_sentence_all(cand, refs, max(bleu_orders))
        for n in bleu_orders:
            terms[f"bleu{n}"] = bleus[n - 1]
    if w["meteor"]:
        terms["meteor"] = meteor_lite(cand, refs, language)
    if w["rouge_l"]:
        terms["rouge_l"] = rouge_l(cand, refs)
    return terms


def hybrid_reward(cand, refs, weights: HybridWeights, idf: IdfTable, language=None) -> float:
    if language is None:
        language = cand.language if isinstance(cand, Caption) else Language.ENGLISH
    cand = _tokens(cand)
    refs = [_tokens(r) for r in refs]
    w = dict(weights.items())
    total = 0.0
    for name, score in metric_terms(cand, refs, weights, idf, language).items():
        total += w[name] * score
    return total


def scst_advantage(sampled, greedy, refs, weights: HybridWeights, idf: IdfTable, language=None) -> float:
    """Reward of the sampled caption minus that of the greedy baseline."""
    return (hybrid_reward(sampled, refs, weights, idf, language)
            - hybrid_reward(greedy, refs, weights, idf, language))
