import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from storyend import autodiff as ad
from storyend.autodiff import Tensor
from storyend.data import PAD, SOS, UNK, build_vocab, synth_corpus
from storyend.losses import (LossConfig, coverage_penalty, coverage_terms, itf_nll_loss, itf_weights,
                             keyphrase_attention_loss, nll_loss, total_loss)
from storyend.model import AttentionTrace, Variant


def logits_for(probs):
    return Tensor(np.log(np.asarray(probs, dtype=float)))


def trace_from_rows(rows):
    rows = np.asarray(rows, dtype=float)[None]
    cov = np.concatenate([np.zeros_like(rows[:, :1]), np.cumsum(rows, axis=1)[:, :-1]], axis=1)
    return AttentionTrace(Tensor(rows), Tensor(cov), Tensor(rows.sum(axis=1)),
                          np.ones(rows.shape[:2]), np.ones((1, rows.shape[2])))


# --- NLL -----------------------------------------------------------------

def test_nll_uniform_is_ln_v():
    loss = nll_loss(Tensor(np.zeros((3, 4))), [1, 2, 3])
    assert abs(float(loss.data) - np.log(4)) < 1e-12


def test_nll_certain_is_zero():
    logits = np.full((2, 4), -1e4)
    logits[0, 1] = logits[1, 3] = 0
    assert float(nll_loss(Tensor(logits), [1, 3]).data) == pytest.approx(0.0, abs=1e-12)


def test_nll_two_steps():
    logits = logits_for([[1e-12, 0.5, 0.5, 1e-12], [0.25, 0.25, 0.25, 0.25]])
    loss = float(nll_loss(logits, [1, 2]).data)
    assert loss == pytest.approx((np.log(2) + np.log(4)) / 2, rel=1e-9)


def test_nll_target_out_of_range():
    with pytest.raises(ValueError):
        nll_loss(Tensor(np.zeros((2, 4))), [1, 4])


def test_nll_ignores_padding():
    logits = np.random.default_rng(0).normal(size=(2, 3, 5))
    targets = np.array([[2, 4, PAD], [1, 3, 2]])
    batched = float(nll_loss(Tensor(logits), targets).data)
    first = float(nll_loss(Tensor(logits[0, :2]), targets[0, :2]).data)
    second = float(nll_loss(Tensor(logits[1]), targets[1]).data)
    assert batched == pytest.approx((first + second) / 2, rel=1e-12)


# --- ITF -----------------------------------------------------------------

def test_itf_equal_frequencies_give_ones():
    np.testing.assert_allclose(itf_weights(np.full(6, 7.0)), np.ones(6))


def test_itf_two_token_example():
    w = itf_weights(np.array([4.0, 1.0]), LossConfig(itf_alpha=1.0))
    np.testing.assert_allclose(w, [0.4, 1.6], rtol=1e-12)


def test_itf_zero_frequency_is_error():
    with pytest.raises(ValueError, match="zero frequency"):
        itf_weights(np.array([3.0, 0.0]))


def test_itf_cap_binds_on_normalized_scale():
    freq = np.array([1.0] + [1e8] * 999)
    w = itf_weights(freq, LossConfig(itf_alpha=1.0, itf_weight_cap=5.0))
    assert w.max() <= 5.0 + 1e-9
    assert abs(w.mean() - 1) < 1e-6


def test_itf_from_vocabulary_floors_unseen_specials():
    vocab = build_vocab(synth_corpus(0, 10))
    assert vocab.frequency[PAD] == vocab.frequency[SOS] == 0
    w = itf_weights(vocab)
    assert np.all(np.isfinite(w)) and np.all(w > 0)
    assert abs(w.mean() - 1) < 1e-6


@settings(max_examples=300, deadline=None)
@given(st.lists(st.integers(1, 10 ** 6), min_size=1, max_size=50), st.floats(0.0, 2.0))
def test_itf_weights_properties(freqs, alpha):
    freq = np.array(freqs, dtype=float)
    cfg = LossConfig(itf_alpha=alpha)
    w = itf_weights(freq, cfg)
    assert abs(w.mean() - 1) < 1e-6
    assert np.all(w <= cfg.itf_weight_cap + 1e-9)
    order = np.argsort(freq, kind="stable")
    assert np.all(np.diff(w[order]) <= 1e-12)


def test_itf_uniform_weights_equal_nll():
    rng = np.random.default_rng(0)
    logits, targets = Tensor(rng.normal(size=(5, 7))), rng.integers(1, 7, 5)
    assert abs(float(itf_nll_loss(logits, targets, np.ones(7)).data)
               - float(nll_loss(logits, targets).data)) < 1e-7


def test_itf_weighted_two_step_mean():
    logits = logits_for([[1e-12, 0.5, 0.5], [1e-12, 0.25, 0.75]])
    w = np.array([1.0, 3.0, 0.5])
    loss = float(itf_nll_loss(logits, [1, 1], w).data)
    assert loss == pytest.approx((3 * np.log(2) + 3 * np.log(4)) / 2, rel=1e-9)
    loss = float(itf_nll_loss(logits, [1, 2], w).data)
    assert loss == pytest.approx((3 * np.log(2) + 0.5 * -np.log(0.75)) / 2, rel=1e-9)


def test_itf_doubling_weight_doubles_step():
    rng = np.random.default_rng(1)
    logits = Tensor(rng.normal(size=(1, 4)))
    w = np.ones(4)
    w2 = w.copy()
    w2[2] = 2.0
    a = float(itf_nll_loss(logits, [2], w).data)
    b = float(itf_nll_loss(logits, [2], w2).data)
    assert b == pytest.approx(2 * a, rel=1e-12)


# --- coverage ------------------------------------------------------------

def test_coverage_first_step_zero_and_overlap():
    rows = [[0.5, 0.5], [0.5, 0.5]]
    terms = coverage_terms(Tensor(np.array(rows)[None]), trace_from_rows(rows).coverage).data[0]
    np.testing.assert_allclose(terms, [0.0, 1.0])


def test_coverage_disjoint_is_zero():
    rows = [[0.0, 1.0], [1.0, 0.0]]
    tr = trace_from_rows(rows)
    assert float(coverage_penalty(tr).data) == 0.0


def test_coverage_penalty_scaled_mean():
    rows = [[0.5, 0.5], [0.5, 0.5], [0.0, 1.0]]
    tr = trace_from_rows(rows)
    # steps: 0, min(.5,.5)+min(.5,.5)=1, min(0,1)+min(1,1)=1
    assert float(coverage_penalty(tr, 2.0).data) == pytest.approx(2.0 * (0 + 1 + 1) / 3)


@settings(max_examples=300, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.integers(2, 8), st.integers(1, 10))
def test_coverage_step_terms_in_unit_interval(seed, steps, T):
    rng = np.random.default_rng(seed)
    rows = rng.dirichlet(np.full(T, 0.3), size=steps)
    terms = coverage_terms(Tensor(rows[None]), trace_from_rows(rows).coverage).data[0]
    assert terms[0] == 0
    assert np.all(terms[1:] >= 0) and np.all(terms[1:] <= 1 + 1e-12)


# --- keyphrase attention loss ---------------------------------------------

def test_keyphrase_mse_examples():
    assert float(keyphrase_attention_loss([0.3, 0.7], [0.3, 0.7]).data) == 0.0
    assert float(keyphrase_attention_loss([1.0, 0.0], [0.0, 1.0]).data) == 1.0
    q, p = np.array([0.9, 0.2, 0.4]), np.array([0.1, 0.5, 0.0])
    a = float(keyphrase_attention_loss(q, p).data)
    b = float(keyphrase_attention_loss(p + 2 * (q - p), p).data)
    assert b == pytest.approx(4 * a, rel=1e-12)


def test_keyphrase_mse_length_mismatch():
    with pytest.raises(ValueError):
        keyphrase_attention_loss([1.0, 0.0], [1.0])


@settings(max_examples=300, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.integers(1, 10), st.floats(1e-6, 1.0))
def test_keyphrase_mse_zero_iff_equal(seed, T, delta):
    rng = np.random.default_rng(seed)
    p = rng.random(T)
    assert float(keyphrase_attention_loss(p.copy(), p).data) == 0.0
    q = p.copy()
    q[rng.integers(T)] += delta * rng.choice([-1, 1])
    assert float(keyphrase_attention_loss(q, p).data) > 0.0


# --- total loss ----------------------------------------------------------

def test_keyphrase_loss_weighting():
    # P(target) = e^-2 gives reconstruction 2.0
    V = 4
    p_t = np.exp(-2.0)
    probs = np.full(V, (1 - p_t) / (V - 1))
    probs[1] = p_t
    logits = logits_for([probs])
    # q - p = [1, 0] gives MSE 0.5
    tr = AttentionTrace(Tensor(np.array([[[1.0, 0.0]]])), Tensor(np.zeros((1, 1, 2))),
                        Tensor(np.array([[1.0, 0.0]])), np.ones((1, 1)), np.ones((1, 2)))
    out = total_loss(Variant.KEYPHRASE_LOSS, logits, [1], tr, np.array([0.0, 0.0]), None)
    assert out.reconstruction == pytest.approx(2.0, rel=1e-12)
    assert out.keyphrase == pytest.approx(0.5)
    assert float(out.total.data) == pytest.approx(0.65, rel=1e-12)


def test_coverage_zero_penalty_is_reconstruction():
    rng = np.random.default_rng(0)
    logits = Tensor(rng.normal(size=(2, 5)))
    tr = trace_from_rows([[1.0, 0.0], [0.0, 1.0]])
    out = total_loss(Variant.COVERAGE, logits, [1, 2], tr, None, None)
    assert float(out.total.data) == float(nll_loss(logits, [1, 2]).data)
    assert out.coverage == 0.0


def test_baseline_total_is_nll():
    rng = np.random.default_rng(0)
    logits = Tensor(rng.normal(size=(3, 5)))
    out = total_loss(Variant.BASELINE, logits, [1, 2, 4], None, None, None)
    assert float(out.total.data) == float(nll_loss(logits, [1, 2, 4]).data)
    assert set(out.as_dict()) == {"total", "reconstruction"}


def test_keyphrase_variants_need_p():
    logits = Tensor(np.zeros((1, 3)))
    tr = trace_from_rows([[1.0]])
    for v in (Variant.KEYPHRASE_LOSS, Variant.KEYPHRASE_ADD, Variant.CONTEXT_CONCAT):
        with pytest.raises(ValueError):
            total_loss(v, logits, [1], tr, None, None)


def test_loss_config_validation():
    with pytest.raises(ValueError):
        LossConfig(keyphrase_weight=0.5, reconstruction_weight=0.4)
    with pytest.raises(ValueError):
        LossConfig(coverage_lambda=-1)
    with pytest.raises(ValueError):
        LossConfig(itf_weight_cap=0)


def test_normalize_q_flag():
    rows = [[1.0, 0.0], [1.0, 0.0]]
    tr = trace_from_rows(rows)
    logits = Tensor(np.zeros((2, 3)))
    p = np.array([1.0, 0.0])
    raw = total_loss(Variant.KEYPHRASE_LOSS, logits, [1, 1], tr, p, None)
    norm = total_loss(Variant.KEYPHRASE_LOSS, logits, [1, 1], tr, p, None, LossConfig(normalize_q=True))
    assert raw.keyphrase == pytest.approx(0.5)  # q = [2, 0]
    assert norm.keyphrase == 0.0


@pytest.mark.parametrize("variant", list(Variant))
def test_losses_nonnegative_and_finite(variant):
    rng = np.random.default_rng(4)
    rows = rng.dirichlet(np.ones(5), size=3)
    tr = trace_from_rows(rows)
    logits = Tensor(rng.normal(size=(3, 9)))
    out = total_loss(variant, logits, [1, 2, 3], tr, rng.dirichlet(np.ones(5)), rng.random(9) + 0.5)
    for value in out.as_dict().values():
        assert np.isfinite(value) and value >= 0


def test_total_loss_gradients_flow():
    rng = np.random.default_rng(5)
    z = Tensor(rng.normal(size=(2, 4)), requires_grad=True)
    with ad.Tape() as tape:
        out = total_loss(Variant.BASELINE, z, [1, UNK], None, None, None)
    g = ad.backward(tape, out.total)
    assert g[z].shape == (2, 4)
    np.testing.assert_allclose(g[z].sum(axis=1), 0, atol=1e-12)
