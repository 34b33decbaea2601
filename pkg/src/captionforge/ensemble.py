"""Average / weighted ensembles fused per decoding step."""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from captionforge.decode import beam_search
from captionforge.errors import InputError, MismatchedVocab


def _check_weights(weights, k: int) -> list[float]:
    if len(weights) != k:
        raise InputError(f"{len(weights)} weights for {k} ensemble members")
    weights = [float(w) for w in weights]
    if any(not w >= 0 for w in weights):
        raise InputError(f"ensemble weights must be nonnegative: {weights}")
    if abs(sum(weights) - 1.0) > 1e-9:
        raise InputError(f"ensemble weights must sum to 1, got {sum(weights)!r}")
    return weights


def uniform_weights(k: int) -> list[float]:
    return [1.0 / k] * k


def fuse_step(distributions: Sequence[np.ndarray], weights: Sequence[float], mode: str = "prob") -> np.ndarray:
    """Combine member distributions into one probability vector.

    ``mode="prob"`` is the convex combination ``sum_i w_i p_i``;
    ``mode="log"`` is the normalized geometric mean ``prod_i p_i^w_i``.
    Members with zero weight are ignored, and when the remaining members agree
    exactly their common distribution is returned untouched.
    """
    if not distributions:
        raise InputError("need at least one distribution to fuse")
    weights = _check_weights(weights, len(distributions))
    dists = [np.asarray(p, dtype=np.float64) for p in distributions]
    if len({p.shape for p in dists}) != 1:
        raise MismatchedVocab(f"distribution sizes differ: {[p.shape for p in dists]}")
    active = [(w, p) for w, p in zip(weights, dists) if w > 0]
    first = active[0][1]
    if all(np.array_equal(first, p) for _, p in active[1:]):
        return first.copy()
    if mode == "prob":
        mix = np.zeros_like(first)
        for w, p in active:
            mix += w * p
    elif mode == "log":
        with np.errstate(divide="ignore"):
            logmix = sum(w * np.log(p) for w, p in active)
        mix = np.exp(logmix - np.max(logmix))
    else:
        raise ValueError(f"unknown fusion mode {mode!r}")
    return mix / mix.sum()


class EnsembleModel:
    """Step model whose distribution fuses its members'; each keeps its own state."""

    def __init__(self, members: Sequence, weights: Sequence[float] | str = "uniform", mode: str = "prob"):
        members = list(members)
        if not members:
            raise InputError("an ensemble needs at least one member")
        if isinstance(weights, str):
            if weights != "uniform":
                raise InputError(f"weights must be a list or 'uniform', got {weights!r}")
            weights = uniform_weights(len(members))
        self.weights = _check_weights(weights, len(members))
        ref = members[0]
        for m in members[1:]:
            if m.vocab_size != ref.vocab_size:
                raise MismatchedVocab(f"member vocab sizes differ: {ref.vocab_size} vs {m.vocab_size}")
            if getattr(m, "vocab", None) is not None and getattr(ref, "vocab", None) is not None \
                    and m.vocab != ref.vocab:
                raise MismatchedVocab("ensemble members were trained with different vocabularies")
            if (m.eos_id, m.bos_id, tuple(m.banned)) != (ref.eos_id, ref.bos_id, tuple(ref.banned)):
                raise MismatchedVocab("ensemble members disagree on reserved token ids")
        self.members = members
        self.mode = mode
        self.vocab_size = ref.vocab_size
        self.eos_id = ref.eos_id
        self.bos_id = ref.bos_id
        self.banned = tuple(ref.banned)
        self.vocab = getattr(ref, "vocab", None)

    def start(self, feature):
        return tuple(m.start(feature) for m in self.members)

    def next_probs(self, state, prev_id: int):
        outs = [m.next_probs(s, prev_id) for m, s in zip(self.members, state)]
        fused = fuse_step([p for p, _ in outs], self.weights, self.mode)
        return fused, tuple(s for _, s in outs)


def ensemble_beam_search(members, feature, weights="uniform", beam: int = 3, max_len: int = 30,
                         length_norm: bool = True, mode: str = "prob"):
    return beam_search(EnsembleModel(members, weights, mode), feature, beam, max_len, length_norm)


@dataclass
class EnsembleSpec:
    members: list[str]
    weights: list[float] | str = "uniform"

    @classmethod
    def load(cls, path) -> "EnsembleSpec":
        try:
            with open(path, encoding="utf-8") as f:
                obj = json.load(f)
        except json.JSONDecodeError as exc:
            raise InputError(f"{path}: invalid JSON: {exc}") from None
        members = obj.get("members")
        if not isinstance(members, list) or not members:
            raise InputError(f"{path}: 'members' must be a non-empty list of checkpoint paths")
        base = os.path.dirname(os.path.abspath(path))
        # relative paths resolve against the spec file first, then the cwd
        members = [os.path.join(base, m) if not os.path.isabs(m) and os.path.exists(os.path.join(base, m))
                   else m for m in members]
        weights = obj.get("weights", "uniform")
        if weights != "uniform":
            weights = _check_weights(weights, len(members))
        return cls(members, weights)
