"""A small recurrent softmax captioner with hand-written gradients.

One step of the model::

    h_t      = tanh(h_{t-1} @ recur + token_embed[y_{t-1}] + feature @ feature_proj)
    logits_t = h_t @ out_weight + out_bias

with ``h_0 = 0`` and ``y_0 = BOS``.  Everything is float64 numpy.
"""

from __future__ import annotations

from dataclasses import dataclass, fields
from typing import Iterable, Sequence

import numpy as np

from captionforge.errors import DimensionMismatch, IdOutOfRange, LengthMismatch
from captionforge.text import BOS, EOS, PAD

PARAM_NAMES = ("token_embed", "feature_proj", "recur", "out_weight", "out_bias")

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


@dataclass
class PolicyParams:
    token_embed: np.ndarray   # (V, d)
    feature_proj: np.ndarray  # (d_f, d)
    recur: np.ndarray         # (d, d)
    out_weight: np.ndarray    # (d, V)
    out_bias: np.ndarray      # (V,)

    def __post_init__(self):
        for f in fields(self):
            setattr(self, f.name, np.asarray(getattr(self, f.name), dtype=np.float64))
        V, d = self.token_embed.shape
        expected = {
            "feature_proj": (self.feature_proj.shape[0], d),
            "recur": (d, d),
            "out_weight": (d, V),
            "out_bias": (V,),
        }
        for name, shape in expected.items():
            if getattr(self, name).shape != shape:
                raise DimensionMismatch(f"{name} has shape {getattr(self, name).shape}, expected {shape}")

    @property
    def vocab_size(self) -> int:
        return self.token_embed.shape[0]

    @property
    def hidden(self) -> int:
        return self.token_embed.shape[1]

    @property
    def feature_size(self) -> int:
        return self.feature_proj.shape[0]

    def arrays(self) -> dict[str, np.ndarray]:
        return {name: getattr(self, name) for name in PARAM_NAMES}

    def copy(self) -> "PolicyParams":
        return PolicyParams(**{k: v.copy() for k, v in self.arrays().items()})

    def zeros_like(self) -> "PolicyParams":
        return PolicyParams(**{k: np.zeros_like(v) for k, v in self.arrays().items()})

    def flat(self) -> np.ndarray:
        return np.concatenate([v.ravel() for v in self.arrays().values()])

    def with_flat(self, vec: np.ndarray) -> "PolicyParams":
        out, pos = {}, 0
        for k, v in self.arrays().items():
            out[k] = np.asarray(vec[pos:pos + v.size], dtype=np.float64).reshape(v.shape).copy()
            pos += v.size
        return PolicyParams(**out)

    def all_finite(self) -> bool:
        return all(np.all(np.isfinite(v)) for v in self.arrays().values())

    def equal(self, other: "PolicyParams") -> bool:
        return all(np.array_equal(a, b) for a, b in zip(self.arrays().values(), other.arrays().values()))

    @classmethod
    def zeros(cls, vocab_size: int, hidden: int, feature_size: int) -> "PolicyParams":
        return cls(np.zeros((vocab_size, hidden)), np.zeros((feature_size, hidden)),
                   np.zeros((hidden, hidden)), np.zeros((hidden, vocab_size)), np.zeros(vocab_size))

    @classmethod
    def init(cls, vocab_size: int, hidden: int, feature_size: int, seed: int = 0,
             scale: float = 0.08) -> "PolicyParams":
        rng = np.random.default_rng(seed)
        shapes = [(vocab_size, hidden), (feature_size, hidden), (hidden, hidden),
                  (hidden, vocab_size), (vocab_size,)]
        return cls(*(rng.uniform(-scale, scale, size=s) for s in shapes))


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - np.max(logits, axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def log_softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - np.max(logits, axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def _check_feature(params: PolicyParams, feature) -> np.ndarray:
    feature = np.asarray(feature, dtype=np.float64)
    if feature.shape != (params.feature_size,):
        raise DimensionMismatch(f"feature has shape {feature.shape}, model expects ({params.feature_size},)")
    return feature


def step_logits(params: PolicyParams, state, prev_token_id: int, feature):
    """One recurrence step; returns ``(logits, new_state)``."""
    feature = _check_feature(params, feature)
    state = np.asarray(state, dtype=np.float64)
    if state.shape != (params.hidden,):
        raise DimensionMismatch(f"state has shape {state.shape}, expected ({params.hidden},)")
    if not 0 <= prev_token_id < params.vocab_size:
        raise IdOutOfRange(f"token id {prev_token_id} outside vocabulary of size {params.vocab_size}")
    new_state = np.tanh(state @ params.recur + params.token_embed[prev_token_id]
                        + feature @ params.feature_proj)
    return new_state @ params.out_weight + params.out_bias, new_state


def label_smoothed_xent(logits: np.ndarray, gold_id: int, eps: float = 0.1):
    """Cross-entropy against ``(1-eps)*onehot(gold) + eps/V``.

    Returns ``(loss, grad_logits)``; the gradient is ``softmax(logits) - q``.
    """
    logits = np.asarray(logits, dtype=np.float64)
    V = logits.shape[-1]
    if not 0 <= gold_id < V:
        raise IdOutOfRange(f"gold id {gold_id} outside vocabulary of size {V}")
    if not 0 <= eps < 1:
        raise ValueError(f"label smoothing must lie in [0, 1), got {eps}")
    q = np.full(V, eps / V)
    q[gold_id] += 1.0 - eps
    loss = -float(np.dot(q, log_softmax(logits)))
    return loss, softmax(logits) - q


def smoothed_target_entropy(V: int, eps: float = 0.1) -> float:
    """Self-entropy of the smoothed target, a lower bound on the loss."""
    q = np.full(V, eps / V)
    q[0] += 1.0 - eps
    q = q[q > 0]
    return float(-np.sum(q * np.log(q)))


def reinforce_grad(logits_sequence, sampled_ids: Sequence[int], advantage: float) -> np.ndarray:
    """Gradient of ``-advantage * log p(sampled)`` w.r.t. each step's logits.

    Masked (``-inf``) logits get zero probability and zero gradient.
    """
    logits_sequence = np.asarray(logits_sequence, dtype=np.float64)
    if logits_sequence.ndim != 2 or len(logits_sequence) != len(sampled_ids):
        raise LengthMismatch(f"{len(logits_sequence)} logit rows for {len(sampled_ids)} sampled tokens")
    grad = softmax(logits_sequence)
    grad[np.arange(len(sampled_ids)), np.asarray(sampled_ids, dtype=int)] -= 1.0
    return advantage * grad


def sequence_logprob(logits_sequence, ids: Sequence[int]) -> float:
    lp = log_softmax(np.asarray(logits_sequence, dtype=np.float64))
    return float(sum(lp[t, i] for t, i in enumerate(ids)))


def forward(params: PolicyParams, feature, input_ids: Sequence[int]):
    """Teacher-forced pass over ``input_ids``; returns ``(logits (T, V), states (T+1, d))``."""
    feature = _check_feature(params, feature)
    T = len(input_ids)
    states = np.zeros((T + 1, params.hidden))
    base = feature @ params.feature_proj
    for t, tok in enumerate(input_ids):
        states[t + 1] = np.tanh(states[t] @ params.recur + params.token_embed[tok] + base)
    logits = states[1:] @ params.out_weight + params.out_bias
    return logits, states


def backward(params: PolicyParams, feature, input_ids: Sequence[int], states: np.ndarray,
             grad_logits: np.ndarray, out: PolicyParams | None = None) -> PolicyParams:
    """Backpropagate ``grad_logits`` (T, V) through time, accumulating into ``out``."""
    feature = np.asarray(feature, dtype=np.float64)
    grads = params.zeros_like() if out is None else out
    T = len(input_ids)
    if grad_logits.shape != (T, params.vocab_size):
        raise LengthMismatch(f"grad_logits shape {grad_logits.shape} does not match {T} steps")
    h = states[1:]
    grads.out_weight += h.T @ grad_logits
    grads.out_bias += grad_logits.sum(axis=0)
    dh_all = grad_logits @ params.out_weight.T
    carry = np.zeros(params.hidden)
    dpre_sum = np.zeros(params.hidden)
    for t in range(T - 1, -1, -1):
        dpre = (dh_all[t] + carry) * (1.0 - h[t] ** 2)
        grads.recur += np.outer(states[t], dpre)
        grads.token_embed[input_ids[t]] += dpre
        dpre_sum += dpre
        carry = params.recur @ dpre
    grads.feature_proj += np.outer(feature, dpre_sum)
    return grads


def xent_sequence(params: PolicyParams, feature, ids: Sequence[int], eps: float = 0.1,
                  want_grad: bool = True):
    """Label-smoothed loss summed over the targets of an encoded caption.

    ``ids`` is ``BOS ... EOS``; inputs are ``ids[:-1]`` and targets ``ids[1:]``.
    Returns ``(loss_sum, n_tokens, grads_or_None)``.
    """
    inputs, targets = list(ids[:-1]), list(ids[1:])
    logits, states = forward(params, feature, inputs)
    loss = 0.0
    g = np.empty_like(logits)
    for t, gold in enumerate(targets):
        l, g[t] = label_smoothed_xent(logits[t], gold, eps)
        loss += l
    grads = backward(params, feature, inputs, states, g) if want_grad else None
    return loss, len(targets), grads


def mask_logits(logits: np.ndarray, banned: Iterable[int]) -> np.ndarray:
    out = np.array(logits, dtype=np.float64, copy=True)
    banned = list(banned)
    if banned:
        out[..., banned] = -np.inf
    return out


def reinforce_sequence(params: PolicyParams, feature, tokens: Sequence[int], finished: bool,
                       advantage: float, banned=(PAD, BOS), out: PolicyParams | None = None,
                       temperature: float = 1.0) -> PolicyParams:
    """Parameter gradient of ``-advantage * log p_T(tokens [+ EOS])``.

    ``p_T`` is the masked policy at sampling temperature ``temperature``, so
    the gradient matches the distribution the rollout was drawn from.
    """
    targets = list(tokens) + ([EOS] if finished else [])
    inputs = [BOS] + list(tokens)
    inputs = inputs[:len(targets)]
    logits, states = forward(params, feature, inputs)
    g = reinforce_grad(mask_logits(logits, banned) / temperature, targets, advantage / temperature)
    return backward(params, feature, inputs, states, g, out)


def global_norm(grads: PolicyParams) -> float:
    return float(np.sqrt(sum(np.sum(v * v) for v in grads.arrays().values())))


def clip_by_global_norm(grads: PolicyParams, max_norm: float) -> PolicyParams:
    norm = global_norm(grads)
    if norm > max_norm > 0:
        scale = max_norm / norm
        for v in grads.arrays().values():
            v *= scale
    return grads


@dataclass
class AdamState:
    m: dict
    v: dict
    t: int = 0
    beta1: float = ADAM_BETA1
    beta2: float = ADAM_BETA2
    eps: float = ADAM_EPS

    @classmethod
    def for_params(cls, params: PolicyParams) -> "AdamState":
        return cls({k: np.zeros_like(a) for k, a in params.arrays().items()},
                   {k: np.zeros_like(a) for k, a in params.arrays().items()})


def adam_update(params: PolicyParams, grads: PolicyParams, state: AdamState, lr: float):
    """Bias-corrected Adam step.  Mutates and returns ``(params, state)``."""
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.t
    c2 = 1.0 - b2 ** state.t
    for name in PARAM_NAMES:
        p, g = getattr(params, name), getattr(grads, name)
        if p.shape != g.shape or state.m[name].shape != p.shape:
            raise DimensionMismatch(f"{name}: param {p.shape}, grad {g.shape}, moment {state.m[name].shape}")
        m = state.m[name]
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p -= lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return params, state


def lr_schedule(epoch: int) -> float:
    """Warm-up ``min(epoch * 1e-4, 3e-4)``, halved at epoch 7 and every 3 epochs after."""
    if epoch < 1:
        raise ValueError(f"epochs are numbered from 1, got {epoch}")
    if epoch <= 6:
        return min(epoch * 1e-4, 3e-4)
    return 3e-4 * 0.5 ** ((epoch - 7) // 3 + 1)


class PolicyModel:
    """Decoder-facing wrapper around ``PolicyParams``.

    ``banned`` ids are never emitted: their logits are masked to ``-inf``
    before the softmax.
    """

    def __init__(self, params: PolicyParams, eos_id: int = EOS, bos_id: int = BOS,
                 banned: Sequence[int] = (PAD, BOS), vocab=None):
        self.params = params
        self.eos_id = eos_id
        self.bos_id = bos_id
        self.banned = tuple(banned)
        self.vocab = vocab

    @property
    def vocab_size(self) -> int:
        return self.params.vocab_size

    def start(self, feature):
        feature = _check_feature(self.params, feature)
        return np.zeros(self.params.hidden), feature

    def next_probs(self, state, prev_id: int):
        h, feature = state
        logits, h = step_logits(self.params, h, prev_id, feature)
        return softmax(mask_logits(logits, self.banned)), (h, feature)
