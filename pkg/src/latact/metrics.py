"""Evaluation: perplexities, marginal statistics (reusing the objectives
implementations on full-split posterior stacks), homogeneity against gold
labels, attribute accuracy, and policy accuracy/perplexity."""

import json
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from . import corpus
from . import latent as lat
from . import objectives


def perplexity(total_token_nll, total_tokens):
    if total_tokens < 1:
        raise ValueError("perplexity needs at least one token")
    return float(np.exp(total_token_nll / total_tokens))


def contingency_table(labels, actions):
    """Counts[class, action] plus the row/column key orderings."""
    if len(labels) != len(actions) or not labels:
        raise ValueError("labels and actions must be equal-length and non-empty")
    classes = sorted(set(labels), key=str)
    acts = sorted(set(actions), key=str)
    ci = {c: i for i, c in enumerate(classes)}
    ai = {a: i for i, a in enumerate(acts)}
    table = np.zeros((len(classes), len(acts)))
    for c, a in zip(labels, actions):
        table[ci[c], ai[a]] += 1
    return table, classes, acts


def homogeneity(table):
    """1 - H(class|action)/H(class); 1.0 when classes carry no entropy.
    Rows are gold classes, columns are latent actions."""
    table = np.asarray(table, dtype=np.float64)
    if table.size == 0 or table.sum() == 0:
        raise ValueError("empty contingency table")
    total = table.sum()
    class_p = table.sum(axis=1) / total
    h_class = objectives.entropy(class_p)
    if h_class == 0:
        return 1.0
    action_mass = table.sum(axis=0)
    h_cond = 0.0
    for a in range(table.shape[1]):
        if action_mass[a] == 0:
            continue
        h_cond += (action_mass[a] / total) * objectives.entropy(
            table[:, a] / action_mass[a])
    return float(min(1.0, max(0.0, 1.0 - h_cond / h_class)))


def attribute_accuracy(records, recognizer):
    """Fraction of generated responses whose code the recognizer recovers.

    records: list of {codes, tokens}; empty generations count as misses
    on every variable. Returns the per-variable average (headline) and
    the stricter all-variables-exact rate.
    """
    if not records:
        raise ValueError("no generation records")
    M = len(records[0]["codes"])
    usable = [r for r in records if len(r["tokens"]) > 0]
    var_hits = 0.0
    exact_hits = 0.0
    if usable:
        tokens, mask = corpus.pad_block([r["tokens"] for r in usable])
        post = recognizer.recognize(tokens, mask)
        recovered = lat.greedy_map(post)
        forced = np.stack([r["codes"] for r in usable])
        match = recovered == forced
        var_hits = match.sum()
        exact_hits = match.all(axis=1).sum()
    n = len(records)
    return {"per_variable": float(var_hits / (n * M)),
            "exact": float(exact_hits / n),
            "empty_generations": n - len(usable)}


def policy_evaluation(model, pairs, batch_size=64, window=None):
    """Accuracy: argmax agreement between the frozen recognizer on the
    gold response and the policy on the context, averaged per variable.
    Perplexity: exp of the mean per-variable NLL the policy assigns to
    the recognizer's greedy codes (joint form reported alongside)."""
    from .laed import pair_batch
    n = 0
    hits = 0.0
    exact = 0.0
    nll_sum = 0.0
    joint_nll_sum = 0.0
    M = model.spec.M
    for start in range(0, len(pairs), batch_size):
        chunk = pairs[start:start + batch_size]
        batch = pair_batch(chunk, window=window)
        gold = lat.greedy_map(model.encoder.recognize(batch["tokens"],
                                                      batch["mask"]))
        with ad.no_grad():
            h_e = model.context.encode_contexts(batch["contexts"])
        rows = model.policy.predict(h_e)
        pred = lat.greedy_map(rows)
        hits += (pred == gold).sum()
        exact += (pred == gold).all(axis=1).sum()
        p_gold = np.take_along_axis(rows, gold[..., None], axis=-1)[..., 0]
        nll = -np.log(np.maximum(p_gold, 1e-300))
        nll_sum += nll.sum()
        joint_nll_sum += nll.sum(axis=1).sum()
        n += len(chunk)
    return {"accuracy": float(hits / (n * M)),
            "accuracy_exact": float(exact / n),
            "perplexity": perplexity(nll_sum, n * M),
            "perplexity_joint": perplexity(joint_nll_sum, n)}


@dataclass
class MetricsReport:
    split: str
    ppl: float = None
    marginal_kl: float = None
    mi: float = None
    homogeneity: dict = None
    attribute_accuracy: dict = None
    policy_accuracy: float = None
    policy_ppl: float = None
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.ppl is not None and self.ppl < 1.0 - 1e-9:
            raise ValueError("perplexity below 1")
        for h in (self.homogeneity or {}).values():
            if not 0.0 <= h <= 1.0:
                raise ValueError("homogeneity out of [0, 1]")

    def to_dict(self):
        out = {"split": self.split}
        for key in ("ppl", "marginal_kl", "mi", "homogeneity",
                    "attribute_accuracy", "policy_accuracy", "policy_ppl"):
            val = getattr(self, key)
            if val is not None:
                out[key] = val
        out.update(self.extra)
        return out

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def text_table(self):
        cols = [("split", self.split)]
        for key, label in (("ppl", "PPL"), ("marginal_kl", "KL(q||p)"),
                           ("mi", "I(x,z)"), ("policy_accuracy", "pi-acc"),
                           ("policy_ppl", "pi-PPL")):
            val = getattr(self, key)
            if val is not None:
                cols.append((label, f"{val:.4g}"))
        head = "  ".join(f"{k:>10}" for k, _ in cols)
        row = "  ".join(f"{v:>10}" for _, v in cols)
        return head + "\n" + row


def _posterior_chunks(model, seqs, batch_size):
    for start in range(0, len(seqs), batch_size):
        chunk = seqs[start:start + batch_size]
        tokens, mask = corpus.pad_block(chunk)
        yield chunk, tokens, mask, model.encoder.recognize(tokens, mask)


def evaluate_autoencoder(model, seqs, split="valid", batch_size=64,
                         labels=None):
    """Reconstruction PPL with greedy hard codes, plus split-level
    marginal KL / MI and optional homogeneity against gold labels."""
    posts = []
    total_nll = 0.0
    total_toks = 0
    codes_all = []
    for chunk, tokens, mask, post in _posterior_chunks(model, seqs, batch_size):
        posts.append(post)
        codes = lat.greedy_map(post)
        codes_all.extend(lat.assignment_string(c) for c in codes)
        dec_in, dec_tgt, dec_mask = corpus.decoder_block(chunk)
        with ad.no_grad():
            h0 = model.latents.select(codes)
            nll, _ = model.decoder.teacher_forced(h0, dec_in, dec_tgt, dec_mask)
        total_nll += float(nll.data) * len(chunk)
        total_toks += int(dec_mask.sum())
    stack = np.concatenate(posts, axis=0)
    decomp = objectives.kl_decomposition(stack)
    homog = None
    if labels is not None:
        table, _, _ = contingency_table(list(labels), codes_all)
        homog = {"label": homogeneity(table)}
    return MetricsReport(split=split,
                         ppl=perplexity(total_nll, total_toks),
                         marginal_kl=decomp["marginal_kl"],
                         mi=decomp["mi"],
                         homogeneity=homog)


def evaluate_skipthought(model, triples, split="valid", batch_size=64):
    """Previous/next prediction PPL from greedy codes of the current
    sentence, plus split-level marginal statistics."""
    posts = []
    tot = {"prev": [0.0, 0], "next": [0.0, 0]}
    cur = [t.current.tokens for t in triples]
    prev = [t.previous.tokens for t in triples]
    nxt = [t.next.tokens for t in triples]
    for start in range(0, len(triples), batch_size):
        sl = slice(start, start + batch_size)
        tokens, mask = corpus.pad_block(cur[sl])
        post = model.encoder.recognize(tokens, mask)
        posts.append(post)
        codes = lat.greedy_map(post)
        with ad.no_grad():
            h0 = model.latents.select(codes)
            for name, seqs, dec in (("prev", prev[sl], model.decoder_prev),
                                    ("next", nxt[sl], model.decoder_next)):
                dec_in, dec_tgt, dec_mask = corpus.decoder_block(seqs)
                nll, _ = dec.teacher_forced(h0, dec_in, dec_tgt, dec_mask)
                tot[name][0] += float(nll.data) * len(seqs)
                tot[name][1] += int(dec_mask.sum())
    stack = np.concatenate(posts, axis=0)
    decomp = objectives.kl_decomposition(stack)
    both_nll = tot["prev"][0] + tot["next"][0]
    both_toks = tot["prev"][1] + tot["next"][1]
    return MetricsReport(split=split,
                         ppl=perplexity(both_nll, both_toks),
                         marginal_kl=decomp["marginal_kl"],
                         mi=decomp["mi"],
                         extra={"ppl_prev": perplexity(*tot["prev"]),
                                "ppl_next": perplexity(*tot["next"])})


def evaluate_laed(model, pairs, split="valid", batch_size=64, window=None,
                  attr_samples=0, rng=None, max_len=40):
    """Reconstruction PPL with teacher codes, policy metrics, and
    (optionally) attribute accuracy over policy-sampled generations."""
    from . import laed as laed_mod
    total_nll = 0.0
    total_toks = 0
    posts = []
    for start in range(0, len(pairs), batch_size):
        chunk = pairs[start:start + batch_size]
        batch = laed_mod.pair_batch(chunk, window=window)
        post = model.encoder.recognize(batch["tokens"], batch["mask"])
        posts.append(post)
        codes = lat.greedy_map(post)
        with ad.no_grad():
            h_e = model.context.encode_contexts(batch["contexts"])
            h0 = h_e + model.latents.select(codes)
            nll, _ = model.decoder.teacher_forced(
                h0, batch["dec_in"], batch["dec_tgt"], batch["dec_mask"])
        total_nll += float(nll.data) * len(chunk)
        total_toks += int(batch["dec_mask"].sum())
    stack = np.concatenate(posts, axis=0)
    decomp = objectives.kl_decomposition(stack)
    pol = policy_evaluation(model, pairs, batch_size=batch_size, window=window)
    attr = None
    if attr_samples > 0:
        if rng is None:
            rng = np.random.default_rng(0)
        subset = pairs[:attr_samples]
        records = []
        for start in range(0, len(subset), batch_size):
            chunk = subset[start:start + batch_size]
            ctxs = [[u.tokens for u in p.context] for p in chunk]
            if window is not None:
                ctxs = [c[-window:] for c in ctxs]
            recs = laed_mod.generate(model, ctxs, "policy-sample", rng=rng,
                                     max_len=max_len)
            records.extend(recs)
        attr = attribute_accuracy(records, model.encoder)
    return MetricsReport(split=split,
                         ppl=perplexity(total_nll, total_toks),
                         marginal_kl=decomp["marginal_kl"],
                         mi=decomp["mi"],
                         attribute_accuracy=attr,
                         policy_accuracy=pol["accuracy"],
                         policy_ppl=pol["perplexity"],
                         extra={"policy_accuracy_exact": pol["accuracy_exact"],
                                "policy_ppl_joint": pol["perplexity_joint"]})
