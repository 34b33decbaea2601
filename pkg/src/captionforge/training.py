"""Two-phase training of the toy policy: label-smoothed XE, then SCST."""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass
from typing import Callable, Mapping, Sequence

import numpy as np

from captionforge.decode import greedy_decode, sample_decode
from captionforge.errors import EmptyCorpus, InputError, MismatchedIds, NumericalError
from captionforge.metrics.cider import IdfTable
from captionforge.policy import (
    AdamState,
    PolicyModel,
    PolicyParams,
    adam_update,
    clip_by_global_norm,
    lr_schedule,
    reinforce_sequence,
    xent_sequence,
)
from captionforge.reward import HybridWeights, hybrid_reward, scst_advantage
from captionforge.text import Language

log = logging.getLogger(__name__)

SCHEDULES = ("transformer", "constant", "xlinear")


@dataclass
class TrainConfig:
    batch_size: int = 64
    label_smoothing: float = 0.1
    xe_epochs: int = 15
    rl_epochs: int = 10
    seed: int = 0
    schedule: str = "transformer"
    lr: float = 3e-4              # used by the constant and xlinear schedules
    rl_lr: float | None = None    # constant RL learning rate; None follows the schedule
    rl_batch_size: int | None = None  # None reuses batch_size
    hidden: int = 32
    max_len: int = 30
    clip_norm: float = 5.0        # global-norm clip, RL phase only
    temperature: float = 1.0
    init_scale: float = 0.08
    xlinear_switch_epoch: int = 70
    xlinear_final_lr: float = 1e-5

    def __post_init__(self):
        if self.batch_size < 1:
            raise InputError(f"batch_size must be >= 1, got {self.batch_size}")
        if not 0 <= self.label_smoothing < 1:
            raise InputError(f"label_smoothing must lie in [0, 1), got {self.label_smoothing}")
        if self.schedule not in SCHEDULES:
            raise InputError(f"schedule must be one of {SCHEDULES}, got {self.schedule!r}")

    def to_json(self) -> dict:
        return asdict(self)

    @classmethod
    def preset(cls, name: str, **overrides) -> "TrainConfig":
        """``full``: batch 64, warm-up/halving schedule, 15 XE + 10 RL epochs.

        ``desk``: settings for the bundled 50-example fixture, where a handful
        of epochs has to show the effect: constant XE rate 1e-2, batch 16,
        RL rate 1e-3 and rollouts sampled at temperature 0.2.
        """
        if name == "full":
            base = {}
        elif name == "desk":
            base = dict(batch_size=16, schedule="constant", lr=1e-2, rl_lr=1e-3, temperature=0.2,
                        xe_epochs=2, rl_epochs=5)
        else:
            raise InputError(f"unknown preset {name!r} (expected full or desk)")
        base.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**base)


def learning_rate(config: TrainConfig, epoch: int, phase: str = "xe") -> float:
    if phase == "scst" and config.rl_lr is not None:
        return config.rl_lr
    if config.schedule == "transformer":
        return lr_schedule(epoch)
    if config.schedule == "xlinear" and epoch > config.xlinear_switch_epoch:
        return config.xlinear_final_lr
    return config.lr


def _check_aligned(corpus: Mapping, features: Mapping) -> list[str]:
    if not corpus:
        raise EmptyCorpus("training corpus is empty")
    missing = sorted(set(corpus) - set(features))
    if missing:
        raise MismatchedIds(f"no feature vector for ids {missing[:5]}")
    return sorted(corpus)


def _check_finite(params: PolicyParams, what: str):
    if not params.all_finite():
        raise NumericalError(f"non-finite parameters after {what}")


def xent_loss(params: PolicyParams, corpus: Mapping[str, Sequence[Sequence[int]]], features,
              eps: float = 0.1) -> float:
    """Mean per-token label-smoothed loss over every encoded caption."""
    total = 0.0
    count = 0
    for key in sorted(corpus):
        for ids in corpus[key]:
            loss, n, _ = xent_sequence(params, features[key], ids, eps, want_grad=False)
            total += loss
            count += n
    return total / count


def train_xent(params: PolicyParams, corpus: Mapping[str, Sequence[Sequence[int]]],
               features: Mapping[str, np.ndarray], config: TrainConfig, epochs: int | None = None):
    """Teacher-forced mini-batch training.

    ``corpus`` maps an id to its encoded captions (``BOS ... EOS``).  Every
    caption is one training pair.  Returns ``(params, per-epoch mean loss)``;
    the input params are not modified.
    """
    keys = _check_aligned(corpus, features)
    pairs = [(k, list(ids)) for k in keys for ids in corpus[k]]
    if not pairs:
        raise EmptyCorpus("training corpus has no captions")
    epochs = config.xe_epochs if epochs is None else epochs
    params = params.copy()
    adam = AdamState.for_params(params)
    rng = np.random.default_rng(config.seed)
    losses = []
    for epoch in range(1, epochs + 1):
        lr = learning_rate(config, epoch)
        order = rng.permutation(len(pairs))
        epoch_loss = 0.0
        epoch_tokens = 0
        for start in range(0, len(order), config.batch_size):
            grads = params.zeros_like()
            batch_loss = 0.0
            batch_tokens = 0
            for idx in order[start:start + config.batch_size]:
                key, ids = pairs[idx]
                loss, n, g = xent_sequence(params, features[key], ids, config.label_smoothing)
                batch_loss += loss
                batch_tokens += n
                for name, arr in grads.arrays().items():
                    arr += getattr(g, name)
            if not math.isfinite(batch_loss):
                raise NumericalError(f"non-finite cross-entropy loss in epoch {epoch}")
            for arr in grads.arrays().values():
                arr /= batch_tokens
            adam_update(params, grads, adam, lr)
            _check_finite(params, f"XE epoch {epoch}")
            epoch_loss += batch_loss
            epoch_tokens += batch_tokens
        losses.append(epoch_loss / epoch_tokens)
        log.info("xe epoch %d lr %.2e loss %.4f", epoch, lr, losses[-1])
    return params, losses


def _ids_to_tokens(ids, vocab) -> list[str]:
    return [vocab.id_to_token[i] for i in ids]


def mean_greedy_reward(params: PolicyParams, refs: Mapping[str, Sequence[Sequence[str]]], features,
                       vocab, weights: HybridWeights, idf: IdfTable, language=Language.ENGLISH,
                       max_len: int = 30) -> float:
    model = PolicyModel(params, vocab=vocab)
    total = 0.0
    keys = sorted(refs)
    for key in keys:
        hyp = greedy_decode(model, features[key], max_len)
        total += hybrid_reward(_ids_to_tokens(hyp.ids, vocab), refs[key], weights, idf, language)
    return total / len(keys)


def train_scst(params: PolicyParams, refs: Mapping[str, Sequence[Sequence[str]]],
               features: Mapping[str, np.ndarray], vocab, weights: HybridWeights, idf: IdfTable,
               config: TrainConfig, language=Language.ENGLISH, epochs: int | None = None,
               sampler: Callable | None = None):
    """Self-critical training with the hybrid reward.

    For every example one multinomial rollout, drawn at ``config.temperature``,
    is scored against the greedy rollout of the same parameters and
    ``-advantage * log p_T(sample)`` is minimized with Adam on batch-mean
    gradients clipped to ``config.clip_norm``.

    Returns ``(params, rewards)`` where ``rewards[0]`` is the mean greedy
    hybrid reward before training and ``rewards[e]`` the value after epoch e.
    ``sampler(model, feature, rng, max_len)`` replaces multinomial sampling
    when given.
    """
    keys = _check_aligned(refs, features)
    epochs = config.rl_epochs if epochs is None else epochs
    language = Language.parse(language)
    params = params.copy()
    adam = AdamState.for_params(params)
    # offset keeps the RL stream independent of the XE shuffling stream
    rng = np.random.default_rng([config.seed, 1])
    if sampler is None:
        def sampler(model, feature, gen, max_len):
            return sample_decode(model, feature, gen, max_len, config.temperature)

    def evaluate():
        return mean_greedy_reward(params, refs, features, vocab, weights, idf, language, config.max_len)

    rewards = [evaluate()]
    log.info("scst initial greedy reward %.4f", rewards[0])
    for epoch in range(1, epochs + 1):
        lr = learning_rate(config, epoch, "scst")
        order = rng.permutation(len(keys))
        bs = config.rl_batch_size or config.batch_size
        for start in range(0, len(order), bs):
            batch = [keys[i] for i in order[start:start + bs]]
            model = PolicyModel(params, vocab=vocab)
            grads = params.zeros_like()
            for key in batch:
                feat = features[key]
                greedy = greedy_decode(model, feat, config.max_len)
                sample = sampler(model, feat, rng, config.max_len)
                adv = scst_advantage(_ids_to_tokens(sample.ids, vocab), _ids_to_tokens(greedy.ids, vocab),
                                     refs[key], weights, idf, language)
                if adv == 0.0:
                    continue
                reinforce_sequence(params, feat, sample.ids, sample.finished, adv, model.banned, grads,
                                   config.temperature)
            for arr in grads.arrays().values():
                arr /= len(batch)
            clip_by_global_norm(grads, config.clip_norm)
            adam_update(params, grads, adam, lr)
            _check_finite(params, f"SCST epoch {epoch}")
        rewards.append(evaluate())
        log.info("scst epoch %d lr %.2e greedy reward %.4f", epoch, lr, rewards[-1])
    return params, rewards
