import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from storyend import autodiff as ad
from storyend.autodiff import Tensor
from storyend.data import EncodedExample, collate
from storyend.model import (EncoderOutput, ModelConfig, Variant, attend, condition_attention, decode_step, encode,
                            forward_batch, forward_teacher_forced, init_decoder_state, init_params, keyphrase_context,
                            param_shapes)

V = 20


def cfg(variant=Variant.BASELINE, **kw):
    base = dict(variant=variant, vocab_size=V, embedding_dim=8, hidden_dim=8, num_layers=2)
    base.update(kw)
    return ModelConfig(**base)


def example(rng, t_src=6, t_dec=4, p=None):
    ids = rng.integers(5, V, t_src)
    tgt = np.append(rng.integers(5, V, t_dec - 1), 2)
    if p is None:
        p = rng.dirichlet(np.ones(t_src)) * (rng.random(t_src) < 0.5)
    return EncodedExample("x", ["w"] * t_src, ids, tgt, np.asarray(p, dtype=float))


def fake_enc(states):
    states = Tensor(np.asarray(states, dtype=float)[None])
    T = states.shape[1]
    return EncoderOutput(states, [], np.ones((1, T)), states)


# --- config and parameters -----------------------------------------------

def test_full_scale_config():
    c = ModelConfig.full_scale(vocab_size=100)
    assert (c.hidden_dim, c.num_layers) == (512, 2)


def test_context_width():
    assert cfg().context_width == 8
    assert cfg(Variant.CONTEXT_CONCAT).context_width == 16
    shapes = param_shapes(cfg(Variant.CONTEXT_CONCAT))
    assert shapes["dec.0.W"][0] == 8 + 16


def test_init_params_deterministic_and_bounded():
    a, b = init_params(cfg(), 3), init_params(cfg(), 3)
    for name, t in a.items():
        assert t.data.tobytes() == b[name].data.tobytes()
        if name.endswith(".b") or name == "out.b":
            assert np.all(t.data == 0)
        else:
            assert np.all(np.abs(t.data) <= 1 / np.sqrt(t.shape[0]) + 1e-7)
    c = init_params(cfg(), 4)
    assert not np.array_equal(a["out.W"].data, c["out.W"].data)


# --- encoder -------------------------------------------------------------

def test_encode_length():
    params = init_params(cfg(), 0)
    enc = encode(np.arange(5, 12), params, cfg())
    assert enc.states.shape == (1, 7, 8)
    assert len(enc.final) == 2


def test_encode_deterministic():
    params = init_params(cfg(), 0)
    ids = np.array([5, 9, 7, 11])
    a, b = encode(ids, params, cfg()), encode(ids, params, cfg())
    assert a.states.data.tobytes() == b.states.data.tobytes()


def test_encode_zero_params_constant_states():
    params = init_params(cfg(), 0)
    for t in params.values():
        t.data[...] = 0
    enc = encode(np.array([5, 6, 7, 8, 9]), params, cfg())
    s = enc.states.data[0]
    assert np.all(s == s[0])


def test_encode_empty_and_out_of_range():
    params = init_params(cfg(), 0)
    with pytest.raises(ValueError):
        encode(np.array([], dtype=int), params, cfg())
    with pytest.raises(ValueError):
        encode(np.array([5, V]), params, cfg())


def test_padding_does_not_change_states():
    params = init_params(cfg(), 1, dtype=np.float64)
    ids = np.array([5, 9, 7])
    alone = encode(ids, params, cfg())
    padded = encode(np.array([[5, 9, 7, 0, 0], [6, 6, 6, 6, 6]]), params, cfg(), lengths=[3, 5])
    np.testing.assert_allclose(padded.states.data[0, :3], alone.states.data[0], atol=1e-12)
    for layer in range(2):
        np.testing.assert_allclose(padded.final[layer].data[0], alone.final[layer].data[0], atol=1e-12)


# --- attention -----------------------------------------------------------

def _params_with(W_dec=None, v=None, H=2):
    return {"attn.W_dec": Tensor(np.zeros((H, H)) if W_dec is None else W_dec),
            "attn.v": Tensor(np.zeros(H) if v is None else v)}


def test_attend_uniform_when_scores_equal():
    enc = fake_enc([[1.0, 0.0], [0.0, 1.0], [2.0, 2.0]])
    e, a, c = attend(Tensor(np.ones((1, 2))), enc, _params_with())
    np.testing.assert_allclose(a.data, [[1 / 3] * 3])
    np.testing.assert_allclose(c.data, [[1.0, 1.0]])


def test_attend_ln2_scores():
    # keys chosen so e = v . tanh(key) gives [ln 2, 0]
    h1, h2 = np.array([1.0, 3.0]), np.array([-2.0, 5.0])
    enc = fake_enc([h1, h2])
    x = np.arctanh(0.5)
    enc.keys = Tensor(np.array([[[x, 0.0], [0.0, 0.0]]]))
    v = np.array([np.log(2.0) / 0.5, 0.0])
    e, a, c = attend(Tensor(np.zeros((1, 2))), enc, _params_with(v=v))
    np.testing.assert_allclose(e.data, [[np.log(2.0), 0.0]], rtol=1e-12)
    np.testing.assert_allclose(a.data, [[2 / 3, 1 / 3]], rtol=1e-12)
    np.testing.assert_allclose(c.data, [(2 * h1 + h2) / 3], rtol=1e-12)


def test_attend_one_hot_endpoint():
    h1, h2 = np.array([1.0, 3.0]), np.array([-2.0, 5.0])
    enc = fake_enc([h1, h2])
    enc.keys = Tensor(np.array([[[1.0, 0.0], [-1.0, 0.0]]]))
    _, a, c = attend(Tensor(np.zeros((1, 2))), enc, _params_with(v=np.array([500.0, 0.0])))
    np.testing.assert_allclose(a.data, [[1.0, 0.0]], atol=1e-12)
    np.testing.assert_allclose(c.data, [h1], atol=1e-9)


def test_condition_attention_examples():
    a = Tensor(np.array([[0.5, 0.5]]))
    out = condition_attention(a, [0.5, 0.0], Variant.KEYPHRASE_ADD)
    np.testing.assert_allclose(out.data, [[2 / 3, 1 / 3]])
    np.testing.assert_allclose(condition_attention(a, [0.0, 0.0], Variant.KEYPHRASE_ADD).data, a.data)
    assert condition_attention(a, [0.5, 0.0], Variant.BASELINE) is a


def test_condition_attention_rejects_negative_scores():
    with pytest.raises(ValueError):
        condition_attention(Tensor(np.array([[0.5, 0.5]])), [-0.1, 0.2], Variant.KEYPHRASE_ADD)


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.integers(1, 12))
def test_condition_attention_stays_on_simplex(seed, T):
    rng = np.random.default_rng(seed)
    a = Tensor(rng.dirichlet(np.ones(T))[None])
    p = rng.dirichlet(np.ones(T)) * (rng.random(T) < 0.5)
    out = condition_attention(a, p, Variant.KEYPHRASE_ADD).data
    assert np.all(out >= 0)
    assert abs(out.sum() - 1) < 1e-12


def test_keyphrase_context_examples():
    h1, h2 = np.array([1.0, 3.0]), np.array([-2.0, 5.0])
    enc = fake_enc([h1, h2])
    np.testing.assert_allclose(keyphrase_context([1.0, 0.0], enc).data, [h1])
    np.testing.assert_allclose(keyphrase_context([0.0, 0.0], enc).data, [[0.0, 0.0]])
    np.testing.assert_allclose(keyphrase_context([2 / 3, 1 / 3], enc).data, [(2 * h1 + h2) / 3])


# --- decoder -------------------------------------------------------------

@pytest.mark.parametrize("variant", list(Variant))
def test_decode_step_distribution_sums_to_one(variant):
    rng = np.random.default_rng(0)
    c = cfg(variant)
    params = init_params(c, 2)
    ex = example(rng)
    enc = encode(ex.context_ids, params, c)
    p = ex.scores[None]
    state = init_decoder_state(enc, p, c)
    logits, state, a = decode_step([1], state, enc, p, params, c)
    probs = ad.softmax(logits).data
    assert logits.shape == (1, V)
    assert abs(probs.sum() - 1) < 1e-5
    assert abs(a.data.sum() - 1) < 1e-5


def test_context_concat_state_carries_keyphrase_context():
    rng = np.random.default_rng(0)
    c = cfg(Variant.CONTEXT_CONCAT)
    params = init_params(c, 2)
    ex = example(rng)
    enc = encode(ex.context_ids, params, c)
    state = init_decoder_state(enc, ex.scores[None], c)
    assert state.key_context.shape == (1, 8)


@pytest.mark.parametrize("variant", [Variant.KEYPHRASE_ADD, Variant.KEYPHRASE_LOSS])
def test_zero_p_reduces_to_baseline(variant):
    rng = np.random.default_rng(5)
    ex = example(rng, p=np.zeros(6))
    params = init_params(cfg(), 7, dtype=np.float64)
    base, _ = forward_teacher_forced(ex, None, params, cfg())
    other, _ = forward_teacher_forced(ex, None, params, cfg(variant))
    np.testing.assert_allclose(other.data, base.data, atol=1e-6)


def test_context_concat_zero_p_feeds_zero_context():
    rng = np.random.default_rng(5)
    c = cfg(Variant.CONTEXT_CONCAT)
    params = init_params(c, 7, dtype=np.float64)
    ex = example(rng, p=np.zeros(6))
    enc = encode(ex.context_ids, params, c)
    state = init_decoder_state(enc, ex.scores[None], c)
    assert np.all(state.key_context.data == 0)


# --- teacher forcing and the attention trace -----------------------------

@pytest.mark.parametrize("variant", list(Variant))
def test_forward_teacher_forced_trace(variant):
    rng = np.random.default_rng(1)
    c = cfg(variant)
    params = init_params(c, 0, dtype=np.float64)
    ex = example(rng, t_src=7, t_dec=5)
    logits, trace = forward_teacher_forced(ex, None, params, c)
    assert logits.shape == (1, 5, V)
    rows = trace.rows.data[0]
    assert rows.shape == (5, 7)
    np.testing.assert_allclose(rows.sum(axis=1), 1, atol=1e-5)
    assert np.all(rows >= 0)
    np.testing.assert_allclose(trace.q.data[0], rows.sum(axis=0), atol=1e-12)
    assert abs(trace.q.data.sum() - 5) < 1e-4
    cov = trace.coverage.data[0]
    assert np.all(cov[0] == 0)
    for t in range(1, 5):
        np.testing.assert_allclose(cov[t], rows[:t].sum(axis=0), atol=1e-12)


def test_forward_batch_matches_single_examples():
    rng = np.random.default_rng(2)
    c = cfg(Variant.COVERAGE)
    params = init_params(c, 0, dtype=np.float64)
    exs = [example(rng, t_src=6, t_dec=4), example(rng, t_src=4, t_dec=3)]
    logits, trace = forward_batch(collate(exs), params, c)
    for i, ex in enumerate(exs):
        single, tr = forward_teacher_forced(ex, None, params, c)
        T, S = len(ex.target_ids), len(ex.context_ids)
        np.testing.assert_allclose(logits.data[i, :T], single.data[0], atol=1e-10)
        np.testing.assert_allclose(trace.rows.data[i, :T, :S], tr.rows.data[0], atol=1e-10)
        np.testing.assert_allclose(trace.q.data[i, :S], tr.q.data[0], atol=1e-10)
        assert np.all(trace.rows.data[i, :, S:] == 0)


def test_forward_deterministic():
    rng = np.random.default_rng(3)
    ex = example(rng)
    a, _ = forward_teacher_forced(ex, None, init_params(cfg(), 9), cfg())
    b, _ = forward_teacher_forced(ex, None, init_params(cfg(), 9), cfg())
    assert a.data.tobytes() == b.data.tobytes()


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.sampled_from(list(Variant)))
def test_attention_rows_on_simplex_random_params(seed, variant):
    rng = np.random.default_rng(seed)
    c = cfg(variant)
    params = init_params(c, int(rng.integers(1000)))
    for t in params.values():
        t.data[...] = rng.normal(scale=2.0, size=t.shape)
    ex = example(rng, t_src=int(rng.integers(1, 10)), t_dec=int(rng.integers(1, 6)))
    _, trace = forward_teacher_forced(ex, None, params, c)
    rows = trace.rows.data
    assert np.all(rows >= 0)
    np.testing.assert_allclose(rows.sum(axis=-1), 1, atol=1e-5)
