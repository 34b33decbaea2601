"""Greedy, sampling and beam-search decoding over any step model.

A step model exposes ``vocab_size``, ``eos_id``, ``bos_id``, ``banned`` (ids
never emitted), ``start(feature) -> state`` and
``next_probs(state, prev_id) -> (probs, new_state)``.  ``PolicyModel`` and
``EnsembleModel`` both qualify.

Ties are always broken towards the lexicographically smallest id sequence,
which for a single step means the lowest token id.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

import numpy as np


@dataclass
class Hypothesis:
    ids: tuple[int, ...]
    logprob: float
    finished: bool
    state: Any = field(default=None, repr=False, compare=False)

    def __len__(self):
        return len(self.ids)

    @property
    def length(self) -> int:
        """Emitted tokens, counting the EOS of a finished hypothesis."""
        return len(self.ids) + (1 if self.finished else 0)

    def score(self, length_norm: bool = True) -> float:
        if length_norm and self.length:
            return self.logprob / self.length
        return self.logprob


def _log(probs: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore"):
        return np.log(probs)


def _allowed_mask(model) -> np.ndarray:
    mask = np.ones(model.vocab_size, dtype=bool)
    mask[list(model.banned)] = False
    return mask


def greedy_decode(model, feature, max_len: int = 30) -> Hypothesis:
    allowed = _allowed_mask(model)
    state = model.start(feature)
    prev = model.bos_id
    ids: list[int] = []
    total = 0.0
    for _ in range(max_len):
        probs, state = model.next_probs(state, prev)
        scores = np.where(allowed, total + _log(probs), -np.inf)
        tok = int(np.argmax(scores))
        total = float(scores[tok])
        if tok == model.eos_id:
            return Hypothesis(tuple(ids), total, True)
        ids.append(tok)
        prev = tok
    return Hypothesis(tuple(ids), total, False)


def _as_rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def sample_decode(model, feature, seed, max_len: int = 30, temperature: float = 1.0) -> Hypothesis:
    """Multinomial rollout from ``softmax(logits / temperature)``.

    ``seed`` may be an int or a ``numpy.random.Generator`` (consumed in
    place).  The recorded log-prob is under the untempered model.
    """
    if not temperature > 0:
        raise ValueError(f"temperature must be positive, got {temperature}")
    rng = _as_rng(seed)
    allowed = _allowed_mask(model)
    state = model.start(feature)
    prev = model.bos_id
    ids: list[int] = []
    total = 0.0
    for _ in range(max_len):
        probs, state = model.next_probs(state, prev)
        logp = _log(probs)
        if temperature == 1.0:
            draw = np.where(allowed, probs, 0.0)
        else:
            z = np.where(allowed, logp / temperature, -np.inf)
            draw = np.exp(z - z.max())
        cdf = np.cumsum(draw)
        tok = int(np.searchsorted(cdf, rng.random() * cdf[-1], side="right"))
        tok = min(tok, len(cdf) - 1)
        while not draw[tok]:
            # only reachable through float round-off at the top of the cdf
            tok -= 1
        total += float(logp[tok])
        if tok == model.eos_id:
            return Hypothesis(tuple(ids), total, True)
        ids.append(tok)
        prev = tok
    return Hypothesis(tuple(ids), total, False)


def beam_search(model, feature, beam: int = 3, max_len: int = 30, length_norm: bool = True) -> list[Hypothesis]:
    """Beam search returning finished and surviving hypotheses, best first.

    Each step expands every live hypothesis over all allowed tokens and keeps
    the ``beam`` best by cumulative log-prob.  Expansions ending in EOS retire
    into the finished pool and stop competing for beam slots on later steps.
    The final ranking uses log-prob divided by emitted length (EOS included)
    unless ``length_norm`` is false.
    """
    if beam < 1:
        raise ValueError(f"beam must be >= 1, got {beam}")
    allowed = np.flatnonzero(_allowed_mask(model))
    live = [Hypothesis((), 0.0, False, model.start(feature))]
    done: list[Hypothesis] = []
    for _ in range(max_len):
        if not live:
            break
        expansions = []
        for hyp in live:
            prev = hyp.ids[-1] if hyp.ids else model.bos_id
            probs, state = model.next_probs(hyp.state, prev)
            logp = _log(probs)
            for tok in allowed:
                expansions.append((hyp.logprob + float(logp[tok]), hyp.ids + (int(tok),), state))
        expansions.sort(key=lambda e: (-e[0], e[1]))
        live = []
        for score, ids, state in expansions[:beam]:
            if ids[-1] == model.eos_id:
                done.append(Hypothesis(ids[:-1], score, True))
            else:
                live.append(Hypothesis(ids, score, False, state))
    pool = done + [Hypothesis(h.ids, h.logprob, False) for h in live]
    pool.sort(key=lambda h: (-h.score(length_norm), h.ids + ((model.eos_id,) if h.finished else ())))
    return pool
