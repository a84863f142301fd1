"""Latent-action dialog model: frozen recognition, the combined loss,
and the three generation modes."""

import numpy as np
import pytest

from latact import laed, networks
from latact.autodiff import Tensor
from latact.corpus import ContextResponsePair, Utterance
from latact.latent import LatentSpec


class ReplayRNG:
    def __init__(self, seed=5):
        self.seed = seed

    def uniform(self, lo, hi, size=None):
        return np.random.default_rng(self.seed).uniform(lo, hi, size=size)


SPEC = LatentSpec(M=2, K=3, tau=1.0)


def make_model(rng):
    pre = networks.AutoEncodingModel(rng, 11, SPEC, emb_dim=5,
                                     enc_hidden=4, dec_hidden=4)
    return laed.LaedModel(rng, pre, utt_hidden=3, ctx_hidden=4,
                          dec_hidden=4, policy_hidden=6)


def make_pairs():
    return [ContextResponsePair([Utterance([4, 5]), Utterance([6])],
                                Utterance([7, 8])),
            ContextResponsePair([Utterance([9, 10])],
                                Utterance([4, 6, 8]))]


def test_dim_mismatch_rejected(rng):
    pre = networks.AutoEncodingModel(rng, 11, SPEC, emb_dim=5,
                                     enc_hidden=4, dec_hidden=4)
    with pytest.raises(ValueError):
        laed.LaedModel(rng, pre, ctx_hidden=4, dec_hidden=8)


def test_recognition_is_frozen(rng):
    model = make_model(rng)
    assert not model.embedding.weight.requires_grad
    assert not model.encoder.head.W.requires_grad
    assert not any(p.requires_grad
                   for _, p in model.encoder.named_parameters())
    # trainable side stays live
    assert model.policy.fc1.W.requires_grad
    assert model.latents.table.requires_grad


def test_loss_terms_and_frozen_gradients(rng):
    model = make_model(rng)
    batch = laed.pair_batch(make_pairs())
    before = model.encoder.head.W.data.copy()
    out = laed.laed_loss(model, batch, ReplayRNG(), lam=1.0)
    assert out.attr is not None
    assert out.total_value == pytest.approx(
        out.policy_nll + out.nll + out.attr)
    out.total.backward()
    # attribute forcing reads the recognizer but never updates it
    assert model.encoder.head.W.grad is None
    assert model.embedding.weight.grad is None
    assert np.array_equal(model.encoder.head.W.data, before)
    # while the generation side receives gradient
    assert model.policy.fc1.W.grad is not None
    assert model.latents.table.grad is not None
    assert model.decoder.gru.W_ih.grad is not None
    assert model.context.proj.W.grad is not None


def test_lam_zero_skips_attribute_term(rng):
    model = make_model(rng)
    out = laed.laed_loss(model, laed.pair_batch(make_pairs()), ReplayRNG(),
                         lam=0.0)
    assert out.attr is None
    assert out.total_value == pytest.approx(out.policy_nll + out.nll)


def test_lam_scales_linearly(rng):
    model = make_model(rng)
    batch = laed.pair_batch(make_pairs())
    half = laed.laed_loss(model, batch, ReplayRNG(), lam=0.5)
    full = laed.laed_loss(model, batch, ReplayRNG(), lam=1.0)
    assert half.attr == pytest.approx(full.attr)  # same replayed sample
    assert full.total_value - half.total_value == pytest.approx(
        0.5 * full.attr)


def test_attr_laed_defaults_to_model_lam(rng):
    model = make_model(rng)
    model.lam = 0.25
    batch = laed.pair_batch(make_pairs())
    out = laed.attr_laed_loss(model, batch, ReplayRNG())
    assert out.extra["lam"] == 0.25
    assert out.total_value == pytest.approx(
        out.policy_nll + out.nll + 0.25 * out.attr)


def test_standalone_attribute_loss_matches(rng):
    model = make_model(rng)
    batch = laed.pair_batch(make_pairs())
    alone = float(laed.attribute_loss(model, batch, ReplayRNG()).data)
    inside = laed.laed_loss(model, batch, ReplayRNG(), lam=1.0).attr
    assert alone == pytest.approx(inside)


def test_relaxed_input_is_expected_embedding(rng):
    model = make_model(rng)
    V = model.vocab_size
    probs = np.random.default_rng(3).dirichlet(np.ones(V), size=2)
    steps = [Tensor(probs)]
    (vec,) = laed.relaxed_recognition_input(steps, model.embedding)
    assert np.allclose(vec.data, probs @ model.embedding.weight.data)
    # a one-hot distribution reproduces the table row exactly
    one = np.zeros((1, V))
    one[0, 7] = 1.0
    (row,) = laed.relaxed_recognition_input([Tensor(one)], model.embedding)
    assert np.allclose(row.data, model.embedding.weight.data[7])


def test_pair_batch_window_and_raw_contexts():
    pairs = [ContextResponsePair(
        [Utterance([4]), Utterance([5]), Utterance([6]), Utterance([7])],
        Utterance([8, 9]))]
    full = laed.pair_batch(pairs)
    assert full["contexts"] == [[[4], [5], [6], [7]]]
    clipped = laed.pair_batch(pairs, window=2)
    assert clipped["contexts"] == [[[6], [7]]]
    assert full["tokens"].shape == (1, 2)
    # raw token-id turns work the same as Utterance turns
    raw = laed.pair_batch([ContextResponsePair([[4], [5]], Utterance([8]))])
    assert raw["contexts"] == [[[4], [5]]]


def test_generate_mode_errors(rng):
    model = make_model(rng)
    ctx = [[[4, 5]]]
    with pytest.raises(ValueError):
        laed.generate(model, ctx, "beam")
    with pytest.raises(ValueError):
        laed.generate(model, ctx, "policy-sample")
    with pytest.raises(ValueError):
        laed.generate(model, ctx, "forced-code")


def test_generate_forced_codes(rng):
    model = make_model(rng)
    ctx = [[[4, 5]], [[6, 7], [8]]]
    recs = laed.generate(model, ctx, "forced-code", forced=[1, 2], max_len=6)
    assert len(recs) == 2
    for r in recs:
        assert np.array_equal(r["codes"], [1, 2])  # 1-d forced broadcast
        assert r["policy_rows"].shape == (2, 3)
        assert len(r["tokens"]) <= 6
    per_row = laed.generate(model, ctx, "forced-code",
                            forced=[[0, 0], [2, 1]], max_len=6)
    assert np.array_equal(per_row[0]["codes"], [0, 0])
    assert np.array_equal(per_row[1]["codes"], [2, 1])


def test_generate_argmax_deterministic(rng):
    model = make_model(rng)
    ctx = [[Utterance([4, 5]), Utterance([6])]]  # Utterance turns accepted
    a = laed.generate(model, ctx, "policy-argmax", max_len=6)
    b = laed.generate(model, ctx, "policy-argmax", max_len=6)
    assert np.array_equal(a[0]["codes"], b[0]["codes"])
    assert a[0]["tokens"] == b[0]["tokens"]
    assert np.array_equal(a[0]["codes"],
                          np.argmax(a[0]["policy_rows"], axis=-1))


def test_generate_sample_respects_policy(rng):
    # a near-deterministic policy row must dominate the sampled codes
    model = make_model(rng)
    ctx = [[[4]]] * 50
    recs = laed.generate(model, ctx, "policy-sample",
                         rng=np.random.default_rng(0), max_len=4)
    rows = recs[0]["policy_rows"]
    counts = np.zeros((2, 3))
    for r in recs:
        for m in range(2):
            counts[m, r["codes"][m]] += 1
    # empirical frequencies track the policy distribution loosely
    freqs = counts / 50
    assert np.all(np.abs(freqs - rows) < 0.35)
