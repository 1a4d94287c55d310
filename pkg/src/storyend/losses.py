"""Training objectives: NLL, ITF-weighted NLL, coverage and keyphrase attention losses.

Losses accept batched inputs (``logits`` of shape (B, T, V), targets (B, T)
padded with PAD) or a single sequence ((T, V) and (T,)).  Each story's loss
is averaged over its own steps, then stories are averaged.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .data import PAD, SOS, UNK, Vocabulary
from .model import AttentionTrace, Variant


@dataclass
class LossConfig:
    coverage_lambda: float = 1.0
    keyphrase_weight: float = 0.9
    reconstruction_weight: float = 0.1
    itf_alpha: float = 0.4
    itf_weight_cap: float = 100.0
    normalize_q: bool = False  # divide q by T_dec before comparing with p

    def __post_init__(self):
        if self.coverage_lambda < 0 or self.itf_alpha < 0:
            raise ValueError("coverage_lambda and itf_alpha must be nonnegative")
        if self.itf_weight_cap <= 0:
            raise ValueError("itf_weight_cap must be positive")
        if abs(self.keyphrase_weight + self.reconstruction_weight - 1.0) > 1e-9:
            raise ValueError("keyphrase_weight + reconstruction_weight must equal 1")


def _batched(logits: Tensor, targets):
    targets = np.asarray(targets, dtype=np.int64)
    if logits.ndim == 2:
        logits = ad.reshape(logits, (1,) + logits.shape)
        targets = targets[None, :]
    if logits.shape[:2] != targets.shape:
        raise ValueError(f"logits {logits.shape} and targets {targets.shape} disagree")
    V = logits.shape[-1]
    if targets.size and (targets.min() < 0 or targets.max() >= V):
        raise ValueError(f"target id outside [0, {V})")
    return logits, targets


def _step_mask(targets: np.ndarray, dtype) -> np.ndarray:
    mask = (targets != PAD).astype(dtype)
    if np.any(mask.sum(axis=1) == 0):
        raise ValueError("every sequence needs at least one target")
    return mask


def _per_story_mean(values: Tensor, mask: np.ndarray) -> Tensor:
    """Mean over each story's real steps, then over stories."""
    per_story = ad.sum_(values * mask, axis=1) / mask.sum(axis=1)
    return ad.mean(per_story)


def token_nll(logits: Tensor, targets) -> tuple[Tensor, np.ndarray]:
    """-log P(target) per step, shape (B, T), with the PAD mask.

    Target id PAD marks padding, never a real target.
    """
    logits, targets = _batched(logits, targets)
    B, T, _ = logits.shape
    logp = ad.log_softmax(logits, axis=-1)
    picked = logp[np.arange(B)[:, None], np.arange(T)[None, :], targets]
    return -picked, _step_mask(targets, logits.dtype)


def nll_loss(logits: Tensor, targets) -> Tensor:
    nll, mask = token_nll(logits, targets)
    return _per_story_mean(nll, mask)


def itf_weights(vocab_or_freq, config: LossConfig | None = None) -> np.ndarray:
    """Inverse-token-frequency weights (1/f)^alpha, capped, mean-normalized to 1.

    Accepts a Vocabulary or a raw frequency array.  With a Vocabulary, PAD,
    SOS and UNK are floored to frequency 1 when unseen (they are never, or
    only rarely, prediction targets).
    """
    config = config or LossConfig()
    if isinstance(vocab_or_freq, Vocabulary):
        freq = vocab_or_freq.frequency.astype(float).copy()
        for special in (PAD, SOS, UNK):
            freq[special] = max(freq[special], 1.0)
    else:
        freq = np.asarray(vocab_or_freq, dtype=float)
    if np.any(freq <= 0):
        raise ValueError(f"zero frequency for token id(s) {np.flatnonzero(freq <= 0).tolist()}")
    raw = np.power(1.0 / freq, config.itf_alpha)
    # raw weights are <= 1, so the cap is enforced on the mean-normalized scale
    weights = raw / raw.mean()
    for _ in range(100):
        capped = np.minimum(weights, config.itf_weight_cap)
        weights = capped / capped.mean()
        if weights.max() <= config.itf_weight_cap * (1 + 1e-12):
            break
    return weights


def itf_nll_loss(logits: Tensor, targets, weights) -> Tensor:
    """NLL with each step scaled by the weight of its target token."""
    nll, mask = token_nll(logits, targets)
    _, targets = _batched(logits, targets)
    w = np.asarray(weights, dtype=logits.dtype)[targets]
    return _per_story_mean(nll * w, mask)


def coverage_terms(rows: Tensor, coverage: Tensor) -> Tensor:
    """sum_i min(a_i^t, s_i^t) per step, shape (B, T_dec)."""
    return ad.sum_(ad.minimum(rows, coverage), axis=-1)


def coverage_penalty(trace: AttentionTrace, lam: float = 1.0) -> Tensor:
    """lambda times the per-story mean over steps of sum_i min(a^t_i, s^t_i)."""
    return lam * _per_story_mean(coverage_terms(trace.rows, trace.coverage), trace.step_mask)


def keyphrase_attention_loss(q, p, src_mask: np.ndarray | None = None) -> Tensor:
    """MSE between aggregate attention ``q`` and score vector ``p`` over real source positions."""
    q = q if isinstance(q, Tensor) else Tensor(np.asarray(q, dtype=float))
    p_arr = np.asarray(p.data if isinstance(p, Tensor) else p, dtype=q.dtype)
    if q.ndim == 1:
        q = ad.reshape(q, (1,) + q.shape)
    if p_arr.ndim == 1:
        p_arr = p_arr[None, :]
    if q.shape != p_arr.shape:
        raise ValueError(f"q shape {q.shape} != p shape {p_arr.shape}")
    mask = np.ones(q.shape, dtype=q.dtype) if src_mask is None else np.asarray(src_mask, dtype=q.dtype)
    return _per_story_mean(ad.square(q - p_arr), mask)


@dataclass
class LossBreakdown:
    total: Tensor
    reconstruction: float
    coverage: float | None = None
    keyphrase: float | None = None

    def as_dict(self) -> dict[str, float]:
        d = {"total": float(self.total.data), "reconstruction": self.reconstruction}
        if self.coverage is not None:
            d["coverage"] = self.coverage
        if self.keyphrase is not None:
            d["keyphrase"] = self.keyphrase
        return d


def total_loss(variant, logits: Tensor, targets, trace: AttentionTrace | None, p, weights,
               config: LossConfig | None = None) -> LossBreakdown:
    """Combine the objectives for ``variant``.

    ``weights`` selects ITF reconstruction when not None, plain NLL otherwise.
    """
    variant = Variant(variant)
    config = config or LossConfig()
    recon = nll_loss(logits, targets) if weights is None else itf_nll_loss(logits, targets, weights)
    if variant is Variant.COVERAGE:
        cov = coverage_penalty(trace, config.coverage_lambda)
        return LossBreakdown(recon + cov, float(recon.data), coverage=float(cov.data))
    if variant is Variant.KEYPHRASE_LOSS:
        if p is None:
            raise ValueError("keyphrase_loss variant needs a score vector p")
        q = trace.q
        if config.normalize_q:
            q = q / trace.step_mask.sum(axis=1, keepdims=True)
        kp = keyphrase_attention_loss(q, p, trace.src_mask)
        total = config.reconstruction_weight * recon + config.keyphrase_weight * kp
        return LossBreakdown(total, float(recon.data), keyphrase=float(kp.data))
    if variant in (Variant.KEYPHRASE_ADD, Variant.CONTEXT_CONCAT) and p is None:
        raise ValueError(f"{variant.value} variant needs a score vector p")
    return LossBreakdown(recon, float(recon.data))
