"""Parametric components: recognition encoder R, sentence decoders G,
hierarchical context encoder, and the policy network.

Batches arrive as right-padded (B, T) id blocks with float masks; all
recurrences run step by step over the time axis. The word embedding
matrix is shared: models own it once, sub-networks borrow it through an
underscore attribute so parameter walks see a single copy.
"""

import numpy as np

from . import autodiff as ad
from . import latent as lat
from .autodiff import Tensor
from .nn import GRU, Embedding, Linear, Module, init_hidden


class RecognitionEncoder(Module):
    """q_R(z|x): unidirectional GRU over word embeddings, last state fed
    through M affine heads (stored fused as one (hidden, M*K) matrix; the
    column blocks are exactly the per-variable heads)."""

    def __init__(self, rng, embedding, emb_dim, hidden, spec):
        self._emb = embedding
        self.spec = spec
        self.gru = GRU(rng, emb_dim, hidden)
        self.head = Linear(rng, hidden, spec.M * spec.K, zero_bias=True)

    def run_vectors(self, xs, mask):
        """xs: list of (B, emb) tensors; mask: (T, B). Returns last state."""
        h = init_hidden(xs[0].shape[0], self.gru.hidden_dim)
        _, h = self.gru.run(xs, h, mask=mask)
        return h

    def logits(self, tokens, mask):
        """tokens (B, T) ids, mask (B, T) -> latent logits (B, M, K)."""
        if np.any(mask.sum(axis=1) < 1):
            raise ValueError("empty token sequence in recognition batch")
        B, T = tokens.shape
        xs = [self._emb(tokens[:, t]) for t in range(T)]
        h = self.run_vectors(xs, mask.T)
        return self.head(h).reshape(B, self.spec.M, self.spec.K)

    def recognize(self, tokens, mask):
        """Posterior stacks (B, M, K) as plain arrays, no graph."""
        with ad.no_grad():
            logits = self.logits(tokens, mask).data
        e = np.exp(logits - logits.max(axis=-1, keepdims=True))
        return e / e.sum(axis=-1, keepdims=True)


class LatentEmbeddingTable(Module):
    """M matrices e_m of shape (K, D), stored stacked (M, K, D)."""

    def __init__(self, rng, spec, dim):
        self.spec = spec
        self.table = Tensor(
            rng.uniform(-0.08, 0.08, size=(spec.M, spec.K, dim)),
            requires_grad=True)

    def mix(self, weights):
        """weights: (B, M, K) Tensor of soft samples -> (B, D)."""
        return ad.latent_mix(weights, self.table)

    def select(self, codes):
        """Hard codes (B, M) ints -> (B, D) row sums."""
        w = Tensor(lat.one_hot(codes, self.spec.K))
        return ad.latent_mix(w, self.table)


def decode_init(sample, table, context_state=None):
    """Initial decoder state: sum of latent embeddings, plus the context
    encoding when present. Hard codes select rows; soft samples mix them."""
    M, K, _ = table.table.data.shape
    if isinstance(sample, Tensor):
        w = sample
    elif np.issubdtype(np.asarray(sample).dtype, np.integer):
        arr = np.asarray(sample)
        if arr.ndim == 1:
            arr = arr[None, :]
        w = Tensor(lat.one_hot(arr, K))
    else:
        arr = np.asarray(sample, dtype=np.float64)
        if arr.ndim == 2:
            arr = arr[None]
        w = Tensor(arr)
    if w.shape[-2:] != (M, K):
        raise ValueError(f"latent dims {w.shape[-2:]} do not match table ({M}, {K})")
    state = ad.latent_mix(w, table.table)
    if context_state is not None:
        if context_state.shape[-1] != table.table.data.shape[-1]:
            raise ValueError("context state dim does not match decoder dim")
        state = context_state + state
    return state


class SentenceDecoder(Module):
    """Autoregressive GRU generator with a vocabulary projection."""

    def __init__(self, rng, embedding, emb_dim, hidden, vocab_size):
        self._emb = embedding
        self.hidden_dim = hidden
        self.gru = GRU(rng, emb_dim, hidden)
        self.out = Linear(rng, hidden, vocab_size, zero_bias=True)

    def unroll(self, h0, dec_in):
        xs = [self._emb(dec_in[:, t]) for t in range(dec_in.shape[1])]
        states, _ = self.gru.run(xs, h0)
        return states

    def teacher_forced(self, h0, dec_in, dec_tgt, dec_mask, want_step_probs=False):
        """Mean-over-batch, sum-over-token NLL of the targets.

        Returns (nll Tensor, step_probs): step_probs holds the first T
        output distributions o_1..o_T (the content steps; the final
        end-of-sentence step is loss-only), empty unless requested.
        """
        B = dec_in.shape[0]
        states = self.unroll(h0, dec_in)
        total = None
        step_probs = []
        last = len(states) - 1
        for t, s in enumerate(states):
            logits = self.out(s)
            logp = ad.log_softmax(logits)
            picked = ad.take_along_last(logp, dec_tgt[:, t]) * dec_mask[:, t]
            total = picked.sum() if total is None else total + picked.sum()
            if want_step_probs and t < last:
                step_probs.append(ad.softmax(logits))
        nll = -total * (1.0 / B)
        return nll, step_probs

    def greedy(self, h0, bos, eos, max_len=40):
        """Deterministic argmax decoding from a (B, D) initial state array.
        Returns token id lists without the end marker."""
        with ad.no_grad():
            h = h0 if isinstance(h0, Tensor) else Tensor(h0)
            B = h.shape[0]
            tok = np.full(B, bos, dtype=np.intp)
            done = np.zeros(B, dtype=bool)
            outs = [[] for _ in range(B)]
            for _ in range(max_len):
                x = self._emb(tok)
                h = self.gru.step(x, h)
                nxt = np.argmax(self.out(h).data, axis=-1)
                for b in range(B):
                    if done[b]:
                        continue
                    if nxt[b] == eos:
                        done[b] = True
                    else:
                        outs[b].append(int(nxt[b]))
                if done.all():
                    break
                tok = nxt.astype(np.intp)
        return outs


def decode_teacher_forced(decoder, h0, target_ids, pad=0, bos=2, eos=3):
    """Single-sequence convenience: per-step output distributions
    o_1..o_|x| plus the full NLL (end marker included) as a float."""
    from . import corpus
    dec_in, dec_tgt, mask = corpus.decoder_block([list(target_ids)],
                                                 pad=pad, bos=bos, eos=eos)
    with ad.no_grad():
        nll, probs = decoder.teacher_forced(h0, dec_in, dec_tgt, mask,
                                            want_step_probs=True)
    return [p.data[0] for p in probs], float(nll.data)


class ContextEncoder(Module):
    """Hierarchical encoder: bidirectional utterance GRU (final states
    concatenated, then projected) under a unidirectional discourse GRU."""

    def __init__(self, rng, embedding, emb_dim, utt_hidden, ctx_hidden):
        self._emb = embedding
        self.ctx_hidden = ctx_hidden
        self.fwd = GRU(rng, emb_dim, utt_hidden)
        self.bwd = GRU(rng, emb_dim, utt_hidden)
        self.proj = Linear(rng, 2 * utt_hidden, ctx_hidden)
        self.discourse = GRU(rng, ctx_hidden, ctx_hidden)

    def encode_utterances(self, tokens, mask):
        """(U, T) id block -> (U, ctx_in) utterance vectors."""
        U, T = tokens.shape
        xs = [self._emb(tokens[:, t]) for t in range(T)]
        hf = init_hidden(U, self.fwd.hidden_dim)
        _, hf = self.fwd.run(xs, hf, mask=mask.T)
        hb = init_hidden(U, self.bwd.hidden_dim)
        _, hb = self.bwd.run(xs[::-1], hb, mask=mask.T[::-1])
        return self.proj(ad.concat([hf, hb], axis=1))

    def encode_contexts(self, contexts):
        """contexts: list (len B) of lists of token-id sequences.
        Returns h^e (B, ctx_hidden)."""
        if any(len(c) == 0 for c in contexts):
            raise ValueError("empty context")
        from . import corpus
        flat = [u for c in contexts for u in c]
        tokens, mask = corpus.pad_block(flat)
        utt_vecs = self.encode_utterances(tokens, mask)

        B = len(contexts)
        C = max(len(c) for c in contexts)
        idx = np.zeros((C, B), dtype=np.intp)
        step_mask = np.zeros((C, B))
        pos = 0
        for b, c in enumerate(contexts):
            for t in range(len(c)):
                idx[t, b] = pos + t
                step_mask[t, b] = 1.0
            pos += len(c)

        h = init_hidden(B, self.ctx_hidden)
        for t in range(C):
            x_t = ad.take_rows(utt_vecs, idx[t])
            h_new = self.discourse.step(x_t, h)
            m = step_mask[t][:, None]
            h = h_new * m + h * (1.0 - m)
        return h


class PolicyNetwork(Module):
    """p_pi(z|c): 2-layer MLP from the context state to M x K logits."""

    def __init__(self, rng, in_dim, hidden, spec):
        self.spec = spec
        self.fc1 = Linear(rng, in_dim, hidden)
        self.fc2 = Linear(rng, hidden, spec.M * spec.K, zero_bias=True)

    def logits(self, h):
        B = h.shape[0]
        return self.fc2(self.fc1(h).tanh()).reshape(B, self.spec.M, self.spec.K)

    def predict(self, h):
        """Probability rows (B, M, K) as arrays, no graph."""
        with ad.no_grad():
            logits = self.logits(h).data
        e = np.exp(logits - logits.max(axis=-1, keepdims=True))
        return e / e.sum(axis=-1, keepdims=True)


class AutoEncodingModel(Module):
    """Recognition + reconstruction stack shared by the autoencoding
    variants (plain, per-sample-KL, and batch-regularized)."""

    def __init__(self, rng, vocab_size, spec, emb_dim=200, enc_hidden=512,
                 dec_hidden=512):
        self.spec = spec
        self.vocab_size = vocab_size
        self.embedding = Embedding(rng, vocab_size, emb_dim)
        self.encoder = RecognitionEncoder(rng, self.embedding, emb_dim,
                                          enc_hidden, spec)
        self.latents = LatentEmbeddingTable(rng, spec, dec_hidden)
        self.decoder = SentenceDecoder(rng, self.embedding, emb_dim,
                                       dec_hidden, vocab_size)
        self.bow = Linear(rng, dec_hidden, vocab_size, zero_bias=True)


class SkipThoughtModel(Module):
    """Recognition on the current sentence, two generators predicting the
    previous and next sentences from the same initial state. The decoders
    share the word embedding but not recurrent weights."""

    def __init__(self, rng, vocab_size, spec, emb_dim=200, enc_hidden=512,
                 dec_hidden=512):
        self.spec = spec
        self.vocab_size = vocab_size
        self.embedding = Embedding(rng, vocab_size, emb_dim)
        self.encoder = RecognitionEncoder(rng, self.embedding, emb_dim,
                                          enc_hidden, spec)
        self.latents = LatentEmbeddingTable(rng, spec, dec_hidden)
        self.decoder_prev = SentenceDecoder(rng, self.embedding, emb_dim,
                                            dec_hidden, vocab_size)
        self.decoder_next = SentenceDecoder(rng, self.embedding, emb_dim,
                                            dec_hidden, vocab_size)
        self.bow = Linear(rng, dec_hidden, vocab_size, zero_bias=True)
