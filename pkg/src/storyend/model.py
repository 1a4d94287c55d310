"""GRU encoder-decoder with attention and keyphrase conditioning variants.

Everything is batched: token ids are ``(B, T)`` arrays, hidden states
``(B, H)`` Tensors.  Single sequences are promoted to a batch of one.
"""

from __future__ import annotations

import enum
from dataclasses import asdict, dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .data import PAD, SOS, Batch, EncodedExample, collate


class Variant(str, enum.Enum):
    BASELINE = "baseline"
    KEYPHRASE_ADD = "keyphrase_add"
    CONTEXT_CONCAT = "context_concat"
    COVERAGE = "coverage"
    KEYPHRASE_LOSS = "keyphrase_loss"


KEYPHRASE_VARIANTS = {Variant.KEYPHRASE_ADD, Variant.CONTEXT_CONCAT, Variant.KEYPHRASE_LOSS}

# Masked attention logits; exp() of this underflows to exactly zero.
_MASK_VALUE = -1e9


@dataclass
class ModelConfig:
    variant: Variant = Variant.BASELINE
    vocab_size: int = 0
    embedding_dim: int = 32
    hidden_dim: int = 64
    num_layers: int = 2
    use_itf: bool = False

    def __post_init__(self):
        self.variant = Variant(self.variant)
        for name in ("embedding_dim", "hidden_dim", "num_layers"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")

    @classmethod
    def full_scale(cls, vocab_size: int, **kwargs) -> "ModelConfig":
        return cls(vocab_size=vocab_size, hidden_dim=512, num_layers=2, **kwargs)

    @property
    def context_width(self) -> int:
        return 2 * self.hidden_dim if self.variant is Variant.CONTEXT_CONCAT else self.hidden_dim

    def to_dict(self) -> dict:
        d = asdict(self)
        d["variant"] = self.variant.value
        return d


Params = dict  # name -> Tensor


def param_shapes(config: ModelConfig) -> dict[str, tuple[int, ...]]:
    V, E, H = config.vocab_size, config.embedding_dim, config.hidden_dim
    shapes: dict[str, tuple[int, ...]] = {"src_embed": (V, E), "tgt_embed": (V, E)}
    for side, first_in in (("enc", E), ("dec", E + config.context_width)):
        for layer in range(config.num_layers):
            n_in = first_in if layer == 0 else H
            shapes[f"{side}.{layer}.W"] = (n_in, 3 * H)
            shapes[f"{side}.{layer}.U_zr"] = (H, 2 * H)
            shapes[f"{side}.{layer}.U_n"] = (H, H)
            shapes[f"{side}.{layer}.b"] = (3 * H,)
    shapes["attn.W_enc"] = (H, H)
    shapes["attn.W_dec"] = (H, H)
    shapes["attn.v"] = (H,)
    shapes["out.W"] = (H, V)
    shapes["out.b"] = (V,)
    return shapes


def init_params(config: ModelConfig, seed: int = 0, dtype=np.float32) -> Params:
    """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights, zero biases."""
    if config.vocab_size < 1:
        raise ValueError("vocab_size must be set before initializing parameters")
    rng = np.random.default_rng(seed)
    params = {}
    for name, shape in param_shapes(config).items():
        if name.endswith(".b"):
            data = np.zeros(shape)
        else:
            bound = 1.0 / np.sqrt(shape[0])
            data = rng.uniform(-bound, bound, size=shape)
        params[name] = Tensor(data.astype(dtype), requires_grad=True, name=name)
    return params


def _dtype(params: Params):
    return params["out.W"].dtype


# ---------------------------------------------------------------------------
# GRU
# ---------------------------------------------------------------------------

def gru_cell(x_proj: Tensor, h: Tensor, params: Params, prefix: str) -> Tensor:
    """One GRU step given the precomputed input projection ``x W + b``.

    z, r = sigmoid(xW_zr + h U_zr); n = tanh(xW_n + (r*h) U_n);
    h' = h + z * (n - h).
    """
    H = h.shape[-1]
    zr = ad.sigmoid(x_proj[:, : 2 * H] + h @ params[prefix + ".U_zr"])
    z = zr[:, :H]
    r = zr[:, H:]
    n = ad.tanh(x_proj[:, 2 * H:] + (r * h) @ params[prefix + ".U_n"])
    return h + z * (n - h)


@dataclass
class EncoderOutput:
    states: Tensor  # (B, T_src, H), top layer
    final: list[Tensor]  # per layer, (B, H)
    mask: np.ndarray  # (B, T_src), 1 on real tokens
    keys: Tensor  # states @ W_enc, reused by every decoder step

    @property
    def length(self) -> int:
        return self.states.shape[1]


def _as_batch(ids) -> np.ndarray:
    ids = np.asarray(ids, dtype=np.int64)
    return ids[None, :] if ids.ndim == 1 else ids


def encode(context_ids, params: Params, config: ModelConfig, lengths=None) -> EncoderOutput:
    """Run the multi-layer unidirectional GRU encoder over (B, T) ids."""
    ids = _as_batch(context_ids)
    B, T = ids.shape
    if T == 0:
        raise ValueError("cannot encode an empty context")
    if ids.max() >= config.vocab_size or ids.min() < 0:
        raise ValueError(f"token id outside vocabulary of size {config.vocab_size}")
    lengths = np.full(B, T) if lengths is None else np.asarray(lengths)
    dtype = _dtype(params)
    mask = (np.arange(T)[None, :] < lengths[:, None]).astype(dtype)
    H = config.hidden_dim

    layer_in = ad.embedding(params["src_embed"], ids)  # (B, T, E)
    final = []
    for layer in range(config.num_layers):
        prefix = f"enc.{layer}"
        proj = layer_in @ params[prefix + ".W"] + params[prefix + ".b"]  # (B, T, 3H)
        h = Tensor(np.zeros((B, H), dtype=dtype))
        outputs = []
        for t in range(T):
            h_new = gru_cell(proj[:, t, :], h, params, prefix)
            m = mask[:, t: t + 1]
            # padded positions carry the previous state forward
            h = h_new if m.all() else h + (h_new - h) * m
            outputs.append(h)
        final.append(h)
        layer_in = ad.stack(outputs, axis=1)
    keys = layer_in @ params["attn.W_enc"]
    return EncoderOutput(states=layer_in, final=final, mask=mask, keys=keys)


# ---------------------------------------------------------------------------
# Attention
# ---------------------------------------------------------------------------

def attend(h_dec: Tensor, enc: EncoderOutput, params: Params):
    """Additive attention: e = v^T tanh(W_dec h_dec + W_enc h_enc), a = softmax(e), c = sum a_i h_i.

    Returns ``(e, a, c)`` with shapes (B, T), (B, T), (B, H).
    """
    B, H = h_dec.shape
    query = ad.reshape(h_dec @ params["attn.W_dec"], (B, 1, H))
    e = ad.tanh(enc.keys + query) @ params["attn.v"]
    logits = e if enc.mask.all() else e + (1.0 - enc.mask) * _MASK_VALUE
    a = ad.softmax(logits, axis=-1)
    return e, a, weighted_sum(a, enc.states)


def weighted_sum(weights: Tensor, states: Tensor) -> Tensor:
    """(B, T) weights times (B, T, H) states -> (B, H)."""
    B, T = weights.shape
    return ad.reshape(ad.reshape(weights, (B, 1, T)) @ states, (B, states.shape[-1]))


def _score_tensor(p, like: Tensor) -> Tensor:
    if isinstance(p, Tensor):
        arr = p.data
    else:
        arr = np.asarray(p, dtype=like.dtype)
        if arr.ndim == 1:
            arr = arr[None, :]
    if np.any(arr < 0):
        raise ValueError("keyphrase scores must be nonnegative")
    return p if isinstance(p, Tensor) else Tensor(arr)


def condition_attention(a: Tensor, p, variant: Variant) -> Tensor:
    """KeyphraseAdd: a' = (a + p) / |a + p|_1.  Other variants return ``a`` unchanged."""
    p = _score_tensor(p, a)
    if a.shape != p.shape:
        raise ValueError(f"attention shape {a.shape} != score vector shape {p.shape}")
    if Variant(variant) is not Variant.KEYPHRASE_ADD:
        return a
    mixed = a + p
    return mixed / ad.sum_(mixed, axis=-1, keepdims=True)


def keyphrase_context(p, enc: EncoderOutput) -> Tensor:
    """k = sum_i p_i h_enc_i; constant across decoder steps."""
    p = _score_tensor(p, enc.states)
    if p.shape != enc.states.shape[:2]:
        raise ValueError(f"score vector shape {p.shape} does not match encoder states {enc.states.shape[:2]}")
    return weighted_sum(p, enc.states)


# ---------------------------------------------------------------------------
# Decoder
# ---------------------------------------------------------------------------

@dataclass
class DecoderState:
    hidden: list[Tensor]  # per layer, (B, H)
    key_context: Tensor | None = None  # ContextConcat only


def init_decoder_state(enc: EncoderOutput, p, config: ModelConfig) -> DecoderState:
    kctx = keyphrase_context(p, enc) if config.variant is Variant.CONTEXT_CONCAT else None
    return DecoderState(hidden=list(enc.final), key_context=kctx)


def decode_step(prev_ids, state: DecoderState, enc: EncoderOutput, p, params: Params,
                config: ModelConfig):
    """One decoder step with input feeding.

    Attention is computed from the previous top-layer state; the decoder
    input is ``[embedding(prev); context]``.  Returns
    ``(logits (B, V), new_state, attention_row (B, T_src))``; softmax of the
    logits is the vocabulary distribution.
    """
    prev_ids = np.atleast_1d(np.asarray(prev_ids, dtype=np.int64))
    _, a, c = attend(state.hidden[-1], enc, params)
    if config.variant is Variant.KEYPHRASE_ADD:
        a = condition_attention(a, p, config.variant)
        c = weighted_sum(a, enc.states)
    elif config.variant is Variant.CONTEXT_CONCAT:
        kctx = state.key_context if state.key_context is not None else keyphrase_context(p, enc)
        c = ad.concat([kctx, c], axis=-1)
    x = ad.concat([ad.embedding(params["tgt_embed"], prev_ids), c], axis=-1)
    hidden = []
    for layer, h in enumerate(state.hidden):
        prefix = f"dec.{layer}"
        x = gru_cell(x @ params[prefix + ".W"] + params[prefix + ".b"], h, params, prefix)
        hidden.append(x)
    logits = x @ params["out.W"] + params["out.b"]
    return logits, DecoderState(hidden, state.key_context), a


@dataclass
class AttentionTrace:
    rows: Tensor  # (B, T_dec, T_src), a^t per step (after keyphrase conditioning)
    coverage: Tensor  # (B, T_dec, T_src), s^t = sum of rows before step t
    q: Tensor  # (B, T_src), sum of rows over the real decoder steps
    step_mask: np.ndarray  # (B, T_dec)
    src_mask: np.ndarray  # (B, T_src)


def forward_batch(batch: Batch, params: Params, config: ModelConfig):
    """Teacher-forced pass over a padded batch; returns ``(logits (B, T_dec, V), trace)``."""
    dtype = _dtype(params)
    enc = encode(batch.context_ids, params, config, batch.context_lengths)
    p = Tensor(np.asarray(batch.scores, dtype=dtype))
    tgt = batch.target_ids
    B, T = tgt.shape
    inputs = np.concatenate([np.full((B, 1), SOS), tgt[:, :-1]], axis=1)
    step_mask = (tgt != PAD).astype(dtype)

    state = init_decoder_state(enc, p, config)
    logits, rows, coverage = [], [], []
    s = Tensor(np.zeros(enc.states.shape[:2], dtype=dtype))
    for t in range(T):
        out, state, a = decode_step(inputs[:, t], state, enc, p, params, config)
        logits.append(out)
        rows.append(a)
        coverage.append(s)
        s = s + a
    rows_t = ad.stack(rows, axis=1)
    if step_mask.all():
        q = s
    else:
        q = ad.sum_(rows_t * step_mask[:, :, None], axis=1)
    trace = AttentionTrace(rows_t, ad.stack(coverage, axis=1), q, step_mask, enc.mask)
    return ad.stack(logits, axis=1), trace


def forward_teacher_forced(example: EncodedExample, p, params: Params, config: ModelConfig):
    """Single-story teacher-forced pass; ``p`` overrides the example's own scores when given."""
    batch = collate([example])
    if p is not None:
        batch.scores = np.asarray(p, dtype=float)[None, :]
    if len(example.target_ids) == 0:
        raise ValueError("target must be non-empty")
    return forward_batch(batch, params, config)
