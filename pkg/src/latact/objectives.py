"""Training objectives and the information quantities they regularize.

Two layers live here. The array functions (entropy, KL, batch prior
regularization, the mutual-information estimate, and the ELBO
decomposition) are the canonical implementations used by metrics and
tests; they accept plain (N, M, K) posterior stacks. The loss builders
compose the same math through the autodiff graph and return a
LossBreakdown whose ``total`` is the differentiable scalar.

All quantities are in nats. Multi-variable terms sum over the M
independent latent variables. Reconstruction NLL is averaged over the
batch and summed over tokens, end-of-sentence included, so perplexity is
exp(total token NLL / total tokens) with no further convention.
"""

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from . import latent as lat


def uniform_prior(M, K):
    return np.full((M, K), 1.0 / K)


def entropy(p, axis=-1):
    """Shannon entropy in nats, zero-safe."""
    p = np.asarray(p, dtype=np.float64)
    plogp = np.where(p > 0, p * np.log(np.where(p > 0, p, 1.0)), 0.0)
    return -plogp.sum(axis=axis)


def kl_divergence(q, p, axis=-1):
    """KL(q || p), zero-safe in q. p must be strictly positive."""
    q = np.asarray(q, dtype=np.float64)
    p = np.asarray(p, dtype=np.float64)
    if np.any(p <= 0):
        raise ValueError("prior has zero mass")
    term = np.where(q > 0, q * (np.log(np.where(q > 0, q, 1.0)) - np.log(p)), 0.0)
    return term.sum(axis=axis)


def _check_stack(posteriors):
    posteriors = np.asarray(posteriors, dtype=np.float64)
    if posteriors.ndim == 2:
        posteriors = posteriors[:, None, :]
    if posteriors.ndim != 3:
        raise ValueError("posterior stack must be (N, M, K)")
    return posteriors


def batch_prior_regularization(posteriors, prior=None):
    """KL(q'(z) || p(z)) where q' is the batch-mean posterior, summed
    over the M variables. Nonnegative; zero iff q' equals the prior."""
    posteriors = _check_stack(posteriors)
    _, M, K = posteriors.shape
    if prior is None:
        prior = uniform_prior(M, K)
    q_prime = posteriors.mean(axis=0)
    return float(kl_divergence(q_prime, prior, axis=-1).sum())


def mutual_information_estimate(posteriors):
    """I(Z, X) on the empirical batch: sum over variables of
    H(q'_m) - (1/N) sum_n H(q(z_m|x_n))."""
    posteriors = _check_stack(posteriors)
    marginal_h = entropy(posteriors.mean(axis=0), axis=-1)
    conditional_h = entropy(posteriors, axis=-1).mean(axis=0)
    return float((marginal_h - conditional_h).sum())


def kl_decomposition(posteriors, prior=None):
    """The ELBO regularizer split: mean per-sample KL on the left, the
    mutual-information estimate plus the marginal KL on the right. The
    identity lhs = mi + marginal_kl is exact on any empirical batch."""
    posteriors = _check_stack(posteriors)
    _, M, K = posteriors.shape
    if prior is None:
        prior = uniform_prior(M, K)
    lhs = float(kl_divergence(posteriors, prior, axis=-1).sum(axis=-1).mean())
    return {
        "lhs": lhs,
        "mi": mutual_information_estimate(posteriors),
        "marginal_kl": batch_prior_regularization(posteriors, prior),
    }


def kl_anneal_schedule(step, warmup_steps):
    """Linear 0 -> 1 over warmup_steps, then flat 1."""
    if warmup_steps < 1:
        raise ValueError("warmup_steps must be >= 1")
    return min(1.0, step / warmup_steps)


@dataclass
class LossBreakdown:
    total: object  # scalar Tensor, or float once detached
    nll: float = 0.0
    bpr: float = None
    kl: float = None
    bow: float = None
    policy_nll: float = None
    attr: float = None
    mi: float = None
    extra: dict = field(default_factory=dict)

    @property
    def total_value(self):
        t = self.total
        return float(t.data) if isinstance(t, ad.Tensor) else float(t)

    def to_record(self):
        rec = {"total": self.total_value, "nll": self.nll}
        for key in ("bpr", "kl", "bow", "policy_nll", "attr", "mi"):
            val = getattr(self, key)
            if val is not None:
                rec[key] = float(val)
        rec.update(self.extra)
        return rec


# -- graph-side terms --------------------------------------------------------

def bpr_term(post, prior):
    """Differentiable BPR from a (B, M, K) posterior Tensor."""
    q_prime = post.mean(axis=0)
    log_p = np.log(prior)
    return (q_prime * (q_prime.log() - log_p)).sum()


def per_sample_kl_term(post, log_post, prior):
    """Differentiable mean-over-batch per-sample KL (the DVAE/ELBO term)."""
    B = post.shape[0]
    log_p = np.log(prior)
    return (post * (log_post - log_p)).sum() * (1.0 / B)


def bow_nll_term(head, h0, tokens, mask):
    """Order-invariant token NLL under one projection of the initial state."""
    B = tokens.shape[0]
    log_p = ad.log_softmax(head(h0))
    total = None
    for t in range(tokens.shape[1]):
        picked = ad.take_along_last(log_p, tokens[:, t]) * mask[:, t]
        total = picked.sum() if total is None else total + picked.sum()
    return -total * (1.0 / B)


def _recognize_and_sample(model, tokens, mask, rng, hard_out=None):
    logits = model.encoder.logits(tokens, mask)
    post = ad.softmax(logits)
    log_post = ad.log_softmax(logits)
    sample = lat.gumbel_softmax_tensor(logits, model.spec.tau, rng,
                                       hard_out=hard_out)
    return post, log_post, sample


# -- variant objectives ------------------------------------------------------

def di_vae_loss(model, batch, rng, prior=None):
    """Reconstruction NLL + batch prior regularization."""
    spec = model.spec
    if prior is None:
        prior = uniform_prior(spec.M, spec.K)
    post, _, sample = _recognize_and_sample(model, batch["tokens"],
                                            batch["mask"], rng)
    h0 = ad.latent_mix(sample, model.latents.table)
    nll, _ = model.decoder.teacher_forced(h0, batch["dec_in"],
                                          batch["dec_tgt"], batch["dec_mask"])
    bpr = bpr_term(post, prior)
    total = nll + bpr
    return LossBreakdown(total=total, nll=float(nll.data),
                         bpr=float(bpr.data),
                         mi=mutual_information_estimate(post.data))


def dvae_elbo_loss(model, batch, rng, anneal_weight=1.0, bow_weight=0.0,
                   prior=None):
    """ELBO with the per-sample KL, optionally annealed, plus the
    bag-of-words auxiliary loss. Both weights at zero give the plain
    discrete-autoencoder objective."""
    spec = model.spec
    if prior is None:
        prior = uniform_prior(spec.M, spec.K)
    post, log_post, sample = _recognize_and_sample(model, batch["tokens"],
                                                   batch["mask"], rng)
    h0 = ad.latent_mix(sample, model.latents.table)
    nll, _ = model.decoder.teacher_forced(h0, batch["dec_in"],
                                          batch["dec_tgt"], batch["dec_mask"])
    kl = per_sample_kl_term(post, log_post, prior)
    total = nll
    if anneal_weight > 0:
        total = total + kl * anneal_weight
    bow_val = None
    if bow_weight > 0:
        bow = bow_nll_term(model.bow, h0, batch["tokens"], batch["mask"])
        total = total + bow * bow_weight
        bow_val = float(bow.data)
    return LossBreakdown(total=total, nll=float(nll.data),
                         kl=float(kl.data), bow=bow_val,
                         mi=mutual_information_estimate(post.data),
                         extra={"anneal_weight": anneal_weight})


def di_vst_loss(model, batch, rng, prior=None):
    """Skip-thought objective: NLL of the previous and next sentences from
    one shared initial state, plus batch prior regularization."""
    spec = model.spec
    if prior is None:
        prior = uniform_prior(spec.M, spec.K)
    post, _, sample = _recognize_and_sample(model, batch["tokens"],
                                            batch["mask"], rng)
    h0 = ad.latent_mix(sample, model.latents.table)
    nll_p, _ = model.decoder_prev.teacher_forced(
        h0, batch["prev_in"], batch["prev_tgt"], batch["prev_mask"])
    nll_n, _ = model.decoder_next.teacher_forced(
        h0, batch["next_in"], batch["next_tgt"], batch["next_mask"])
    bpr = bpr_term(post, prior)
    total = nll_p + nll_n + bpr
    return LossBreakdown(total=total, nll=float(nll_p.data + nll_n.data),
                         bpr=float(bpr.data),
                         mi=mutual_information_estimate(post.data),
                         extra={"nll_prev": float(nll_p.data),
                                "nll_next": float(nll_n.data)})


def dvst_elbo_loss(model, batch, rng, anneal_weight=1.0, bow_weight=0.0,
                   prior=None):
    """ELBO form of the skip-thought objective, mirroring dvae_elbo_loss;
    the bag-of-words term covers both target sentences."""
    spec = model.spec
    if prior is None:
        prior = uniform_prior(spec.M, spec.K)
    post, log_post, sample = _recognize_and_sample(model, batch["tokens"],
                                                   batch["mask"], rng)
    h0 = ad.latent_mix(sample, model.latents.table)
    nll_p, _ = model.decoder_prev.teacher_forced(
        h0, batch["prev_in"], batch["prev_tgt"], batch["prev_mask"])
    nll_n, _ = model.decoder_next.teacher_forced(
        h0, batch["next_in"], batch["next_tgt"], batch["next_mask"])
    kl = per_sample_kl_term(post, log_post, prior)
    total = nll_p + nll_n
    if anneal_weight > 0:
        total = total + kl * anneal_weight
    bow_val = None
    if bow_weight > 0:
        bow = bow_nll_term(model.bow, h0, batch["prev_tokens"],
                           batch["prev_tok_mask"]) + \
              bow_nll_term(model.bow, h0, batch["next_tokens"],
                           batch["next_tok_mask"])
        total = total + bow * bow_weight
        bow_val = float(bow.data)
    return LossBreakdown(total=total, nll=float(nll_p.data + nll_n.data),
                         kl=float(kl.data), bow=bow_val,
                         mi=mutual_information_estimate(post.data),
                         extra={"nll_prev": float(nll_p.data),
                                "nll_next": float(nll_n.data),
                                "anneal_weight": anneal_weight})


def bag_of_words_loss(model, sample, target_ids):
    """Convenience around bow_nll_term for a single target sequence."""
    from . import networks
    from .corpus import pad_block
    h0 = networks.decode_init(sample, model.latents)
    tokens, mask = pad_block([list(target_ids)])
    return bow_nll_term(model.bow, h0, tokens, mask)
