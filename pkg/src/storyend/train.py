"""Training loop with per-epoch loss logging and dev-set model selection."""

from __future__ import annotations

import copy
import importlib
import logging
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import AdamState, NumericError, Tensor
from .config import RunConfig
from .data import EncodedExample, StoryExample, Vocabulary, build_vocab, encode_examples, make_batches
from .losses import itf_weights, nll_loss, total_loss
from .model import ModelConfig, Params, forward_batch, init_params

log = logging.getLogger(__name__)

DevScorer = Callable[[Params, ModelConfig, Sequence[EncodedExample]], float]


def dev_nll(params: Params, config: ModelConfig, examples: Sequence[EncodedExample],
            batch_size: int = 32) -> float:
    """Mean per-token NLL under teacher forcing (no tape)."""
    total, count = 0.0, 0
    for batch in make_batches(examples, batch_size, seed=None):
        logits, _ = forward_batch(batch, params, config)
        total += float(nll_loss(logits, batch.target_ids).data) * len(batch)
        count += len(batch)
    return total / max(count, 1)


def load_scorer(spec: str | None) -> DevScorer:
    if not spec:
        return dev_nll
    module, _, attr = spec.partition(":")
    return getattr(importlib.import_module(module), attr)


@dataclass
class TrainResult:
    params: Params
    best_params: Params
    vocab: Vocabulary
    config: RunConfig
    history: list[dict] = field(default_factory=list)
    best_epoch: int = 0


def format_epoch(entry: dict) -> str:
    parts = [f"epoch={entry['epoch']}"]
    parts += [f"{k}={v:.6f}" for k, v in entry.items() if k != "epoch"]
    return " ".join(parts)


def train(run_config: RunConfig, train_examples: Sequence[StoryExample],
          dev_examples: Sequence[StoryExample] | None = None, vocab: Vocabulary | None = None,
          on_epoch: Callable[[dict], None] | None = None, scorer: DevScorer | None = None,
          stop_when: Callable[[dict], bool] | None = None) -> TrainResult:
    """Train a model end to end; all randomness derives from ``run_config.train.seed``.

    ``stop_when(entry)`` may end training early after any epoch.
    """
    run_config = copy.deepcopy(run_config)
    tc = run_config.train
    vocab = vocab or build_vocab(train_examples, run_config.data.min_freq, run_config.data.max_context_len)
    run_config.model.vocab_size = len(vocab)
    mc = run_config.model
    k = run_config.k
    encoded = encode_examples(train_examples, vocab, k, run_config.data.max_context_len)
    dev_encoded = (encode_examples(dev_examples, vocab, k, run_config.data.max_context_len)
                   if dev_examples else encoded)
    weights = itf_weights(vocab, run_config.loss) if mc.use_itf else None
    scorer = scorer or load_scorer(tc.selector)

    params = init_params(mc, tc.seed)
    plist = list(params.values())
    state = AdamState.for_params(plist, lr=tc.lr)
    best_params = copy.deepcopy(params)
    best_score = np.inf
    best_epoch = 0
    history = []

    for epoch in range(1, tc.epochs + 1):
        sums: dict[str, float] = {}
        n_batches = 0
        for batch in make_batches(encoded, tc.batch_size, seed=tc.seed * 100_003 + epoch):
            with ad.Tape() as tape:
                logits, trace = forward_batch(batch, params, mc)
                breakdown = total_loss(mc.variant, logits, batch.target_ids, trace, batch.scores,
                                       weights, run_config.loss)
            if not np.isfinite(breakdown.total.data):
                raise NumericError(f"non-finite loss at epoch {epoch}")
            grads = ad.backward(tape, breakdown.total)
            ad.adam_step(plist, grads, state)
            for p in plist:
                p.grad = None
            for key, value in breakdown.as_dict().items():
                sums[key] = sums.get(key, 0.0) + value
            n_batches += 1
        entry = {"epoch": epoch, **{key: v / n_batches for key, v in sums.items()}}
        entry["dev_score"] = float(scorer(params, mc, dev_encoded))
        history.append(entry)
        log.info(format_epoch(entry))
        if on_epoch:
            on_epoch(entry)
        if entry["dev_score"] < best_score:
            best_score = entry["dev_score"]
            best_epoch = epoch
            best_params = {n: Tensor(t.data.copy(), requires_grad=True, name=n) for n, t in params.items()}
        if stop_when and stop_when(entry):
            break

    return TrainResult(params, best_params, vocab, run_config, history, best_epoch)
