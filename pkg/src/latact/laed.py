"""Latent-action encoder-decoder: response generation conditioned on the
discrete codes of a pre-trained recognition network, with a policy that
predicts codes from context and an optional attribute-forcing penalty
scored by the frozen recognizer."""

import numpy as np

from . import autodiff as ad
from . import corpus
from . import latent as lat
from . import objectives
from .autodiff import Tensor
from .networks import (ContextEncoder, LatentEmbeddingTable, PolicyNetwork,
                       SentenceDecoder)
from .nn import Module

GENERATION_MODES = ("policy-sample", "policy-argmax", "forced-code")


class LaedModel(Module):
    """Wraps a pre-trained recognition model. Its word embedding and
    recognition encoder are adopted and frozen: the recognizer must keep
    its standalone semantics, and it reads words through the embedding,
    so both stay fixed. The latent embedding table is re-learned here
    because the initial decoder state belongs to the new decoder."""

    def __init__(self, rng, pretrained, utt_hidden=256, ctx_hidden=512,
                 dec_hidden=512, policy_hidden=512, lam=1.0):
        if ctx_hidden != dec_hidden:
            raise ValueError("context and decoder dims must match for state addition")
        self.spec = pretrained.spec
        self.vocab_size = pretrained.vocab_size
        self.lam = lam
        self.embedding = pretrained.embedding
        self.encoder = pretrained.encoder
        self.embedding.freeze()
        self.encoder.freeze()
        emb_dim = self.embedding.weight.data.shape[1]
        self.context = ContextEncoder(rng, self.embedding, emb_dim,
                                      utt_hidden, ctx_hidden)
        self.latents = LatentEmbeddingTable(rng, self.spec, dec_hidden)
        self.decoder = SentenceDecoder(rng, self.embedding, emb_dim,
                                       dec_hidden, self.vocab_size)
        self.policy = PolicyNetwork(rng, ctx_hidden, policy_hidden, self.spec)


def relaxed_recognition_input(step_distributions, embedding):
    """Expected word embeddings E o_t, one vector batch per step. These
    keep the recognizer differentiable w.r.t. the decoder's outputs."""
    E = embedding.weight if hasattr(embedding, "weight") else embedding
    return [o @ E for o in step_distributions]


def _policy_nll(policy_logits, hard_codes):
    B = policy_logits.shape[0]
    logp = ad.log_softmax(policy_logits)
    picked = ad.take_along_last(logp, hard_codes)
    return -picked.sum() * (1.0 / B)


def _attr_nll(model, step_probs, token_mask, hard_codes):
    """-log q_R(z = sampled codes | relaxed decoder output)."""
    B = token_mask.shape[0]
    xs = relaxed_recognition_input(step_probs, model.embedding)
    h = model.encoder.run_vectors(xs, token_mask.T)
    logits = model.encoder.head(h).reshape(B, model.spec.M, model.spec.K)
    picked = ad.take_along_last(ad.log_softmax(logits), hard_codes)
    return -picked.sum() * (1.0 / B)


def laed_loss(model, batch, rng, lam=0.0):
    """Policy NLL + reconstruction NLL (and lam times the attribute NLL
    when lam > 0, sharing one decoder unroll). The teacher code z is a
    Gumbel sample from the frozen recognizer on the gold response, so no
    gradient reaches R by construction."""
    spec = model.spec
    h_e = model.context.encode_contexts(batch["contexts"])

    rec_logits = model.encoder.logits(batch["tokens"], batch["mask"])
    hard_out = []
    sample = lat.gumbel_softmax_tensor(rec_logits, spec.tau, rng,
                                       hard_out=hard_out)
    hard = hard_out[0]

    policy_nll = _policy_nll(model.policy.logits(h_e), hard)
    h0 = h_e + ad.latent_mix(sample, model.latents.table)
    rec_nll, step_probs = model.decoder.teacher_forced(
        h0, batch["dec_in"], batch["dec_tgt"], batch["dec_mask"],
        want_step_probs=lam > 0)
    total = policy_nll + rec_nll
    attr_val = None
    if lam > 0:
        attr = _attr_nll(model, step_probs, batch["mask"], hard)
        total = total + attr * lam
        attr_val = float(attr.data)
    with ad.no_grad():
        post = np.exp(rec_logits.data - rec_logits.data.max(-1, keepdims=True))
        post /= post.sum(-1, keepdims=True)
    return objectives.LossBreakdown(
        total=total, nll=float(rec_nll.data),
        policy_nll=float(policy_nll.data), attr=attr_val,
        mi=objectives.mutual_information_estimate(post),
        extra={"lam": lam})


def attribute_loss(model, batch, rng):
    """Standalone attribute-forcing term; shares no graph with laed_loss,
    so prefer attr_laed_loss during training."""
    spec = model.spec
    h_e = model.context.encode_contexts(batch["contexts"])
    rec_logits = model.encoder.logits(batch["tokens"], batch["mask"])
    hard_out = []
    sample = lat.gumbel_softmax_tensor(rec_logits, spec.tau, rng,
                                       hard_out=hard_out)
    h0 = h_e + ad.latent_mix(sample, model.latents.table)
    _, step_probs = model.decoder.teacher_forced(
        h0, batch["dec_in"], batch["dec_tgt"], batch["dec_mask"],
        want_step_probs=True)
    return _attr_nll(model, step_probs, batch["mask"], hard_out[0])


def attr_laed_loss(model, batch, rng, lam=None):
    if lam is None:
        lam = model.lam
    return laed_loss(model, batch, rng, lam=lam)


def _context_ids(contexts, window=None):
    # turns may be Utterance objects or raw token-id lists
    turns = [[u.tokens if hasattr(u, "tokens") else u for u in c]
             for c in contexts]
    if window is not None:
        turns = [c[-window:] for c in turns]
    return turns


def pair_batch(pairs, window=None):
    """Build the padded arrays for a list of context-response pairs."""
    contexts = _context_ids([p.context for p in pairs], window)
    responses = [p.response.tokens for p in pairs]
    tokens, mask = corpus.pad_block(responses)
    dec_in, dec_tgt, dec_mask = corpus.decoder_block(responses)
    return {"contexts": contexts, "tokens": tokens, "mask": mask,
            "dec_in": dec_in, "dec_tgt": dec_tgt, "dec_mask": dec_mask}


def generate(model, contexts, mode, rng=None, forced=None, max_len=40):
    """Greedy decoding for a batch of contexts (lists of token-id lists).

    mode picks the code source: sampled from the policy, the policy
    argmax, or a caller-forced assignment. Returns one record per context
    with the code used, the generated ids, and the policy rows."""
    if mode not in GENERATION_MODES:
        raise ValueError(f"unknown generation mode {mode!r}")
    contexts = _context_ids(contexts)
    B = len(contexts)
    spec = model.spec
    with ad.no_grad():
        h_e = model.context.encode_contexts(contexts)
        rows = model.policy.predict(h_e)
        if mode == "policy-argmax":
            codes = lat.greedy_map(rows)
        elif mode == "policy-sample":
            if rng is None:
                raise ValueError("policy-sample mode needs a noise source")
            g = lat.gumbel_noise(rng, rows.shape)
            codes = np.argmax(np.log(np.maximum(rows, 1e-300)) + g, axis=-1)
        else:
            if forced is None:
                raise ValueError("forced-code mode needs an assignment")
            codes = np.asarray(forced, dtype=np.intp)
            if codes.ndim == 1:
                codes = np.broadcast_to(codes, (B, spec.M)).copy()
        h0 = h_e.data + ad.latent_mix(
            Tensor(lat.one_hot(codes, spec.K)), model.latents.table).data
    token_lists = model.decoder.greedy(h0, corpus.BOS, corpus.EOS,
                                       max_len=max_len)
    return [{"codes": codes[b].copy(), "tokens": token_lists[b],
             "policy_rows": rows[b]} for b in range(B)]
