"""Human-readable views of trained models: per-action utterance tables,
code-interpolation walks, and the per-run report bundle.

Everything here is read-only over a checkpoint and deterministic given
the run seed, so re-emitting a report reproduces it byte for byte.
"""

import json
import os

import numpy as np

from . import autodiff as ad
from . import corpus as corpus_mod
from . import laed as laed_mod
from . import latent as lat
from . import metrics as metrics_mod
from . import networks, training


def assign_actions(model, seqs, batch_size=64):
    """Greedy-map every id-sequence to its latent action, in order."""
    codes = []
    for start in range(0, len(seqs), batch_size):
        chunk = seqs[start:start + batch_size]
        tokens, mask = corpus_mod.pad_block(chunk)
        post = model.encoder.recognize(tokens, mask)
        codes.append(lat.greedy_map(post))
    return np.concatenate(codes, axis=0)


def action_table(model, seqs, vocab, samples_per_action=5, seed=1,
                 batch_size=64):
    """Group a corpus split by latent action; reservoir-sample each group.

    Returns (table, n_empty): table maps action string to {"count",
    "samples"} in first-appearance order; n_empty counts the actions of
    the latent space that no utterance landed in. Together the groups
    partition the input."""
    if samples_per_action < 1:
        raise ValueError("samples_per_action must be positive")
    codes = assign_actions(model, seqs, batch_size=batch_size)
    rng = np.random.default_rng(seed)
    table = {}
    for seq, code in zip(seqs, codes):
        key = lat.assignment_string(code)
        slot = table.setdefault(key, {"count": 0, "samples": []})
        slot["count"] += 1
        text = " ".join(vocab.decode(seq))
        # reservoir: keep each member with probability cap/count
        if len(slot["samples"]) < samples_per_action:
            slot["samples"].append(text)
        else:
            j = int(rng.integers(0, slot["count"]))
            if j < samples_per_action:
                slot["samples"][j] = text
    n_empty = model.spec.n_actions - len(table)
    return table, n_empty


def action_table_text(table, n_empty=0):
    total = sum(slot["count"] for slot in table.values())
    lines = [f"# {len(table)} actions over {total} utterances"
             f" ({n_empty} empty actions omitted)"]
    for key in sorted(table):
        slot = table[key]
        lines.append("")
        lines.append(f"ACTION {key} (n={slot['count']})")
        lines.extend(f"  {text}" for text in slot["samples"])
    return "\n".join(lines) + "\n"


def interpolate(model, x1, x2, vocab, max_len=40):
    """Walk the latent space from sentence x1 to sentence x2.

    The path starts at x1's greedy code (shown with the original
    sentence), then flips one differing variable per step in ascending
    index order, decoding each intermediate code, and ends at x2's
    greedy code. Returns a list of (assignment string, sentence)."""
    if not isinstance(model, networks.AutoEncodingModel):
        raise ValueError("interpolation requires reconstruction-trained model")
    x1 = list(x1)
    x2 = list(x2)
    codes = assign_actions(model, [x1, x2])
    cur = codes[0].copy()
    target = codes[1]
    path = [(lat.assignment_string(cur), " ".join(vocab.decode(x1)))]
    with ad.no_grad():
        for m in range(len(cur)):
            if cur[m] == target[m]:
                continue
            cur = lat.flip_code(cur, m, int(target[m]), K=model.spec.K)
            h0 = networks.decode_init(cur[None, :], model.latents)
            toks = model.decoder.greedy(h0.data, corpus_mod.BOS,
                                        corpus_mod.EOS, max_len=max_len)[0]
            path.append((lat.assignment_string(cur),
                         " ".join(vocab.decode(toks))))
    return path


def interpolation_text(path):
    lines = [f"{key:>16}  {sent}" for key, sent in path]
    return "\n".join(lines) + "\n"


def generation_samples(model, pairs, vocab, window=None, n=10, max_len=40):
    """Qualitative dialog records: context, reference, and the decode for
    the policy's argmax action."""
    subset = pairs[:n]
    if not subset:
        return []
    ctxs = [[u.tokens for u in p.context] for p in subset]
    if window is not None:
        ctxs = [c[-window:] for c in ctxs]
    recs = laed_mod.generate(model, ctxs, "policy-argmax", max_len=max_len)
    out = []
    for p, rec in zip(subset, recs):
        out.append({
            "context": [" ".join(vocab.decode(u.tokens)) for u in p.context],
            "reference": " ".join(vocab.decode(p.response.tokens)),
            "action": lat.assignment_string(rec["codes"]),
            "generated": " ".join(vocab.decode(rec["tokens"])),
        })
    return out


def _write(path, text):
    with open(path, "w", encoding="utf-8") as f:
        f.write(text)


def emit_report(run_dir, samples_per_action=5, n_generation=10):
    """Assemble the report bundle for a completed run.

    Writes under run_dir/report: metrics.json, action_table.txt/.json,
    and for dialog-generation runs generation_samples.json. Returns the
    list of files written. Deterministic for a fixed run directory."""
    cfg, vocab, model = training.load_run(run_dir)
    data = training.load_data(cfg, vocab=vocab)
    out_dir = os.path.join(run_dir, "report")
    os.makedirs(out_dir, exist_ok=True)
    written = []

    def emit(name, text):
        path = os.path.join(out_dir, name)
        _write(path, text)
        written.append(path)

    family = cfg.family()
    if family == "laed":
        rng = np.random.default_rng(cfg.seed)
        report = metrics_mod.evaluate_laed(
            model, data.test, split="test", batch_size=cfg.batch_size,
            window=cfg.context_window, attr_samples=min(200, len(data.test)),
            rng=rng, max_len=cfg.max_gen_len)
        utts = [p.response.tokens for p in data.test]
    elif family == "autoenc":
        report = metrics_mod.evaluate_autoencoder(
            model, data.test, split="test", batch_size=cfg.batch_size,
            labels=data.test_labels)
        utts = data.test
    else:
        report = metrics_mod.evaluate_skipthought(
            model, data.test, split="test", batch_size=cfg.batch_size)
        utts = [t.current.tokens for t in data.test]
    emit("metrics.json", report.to_json() + "\n")

    table, n_empty = action_table(model, utts, vocab,
                                  samples_per_action=samples_per_action,
                                  seed=cfg.seed)
    emit("action_table.txt", action_table_text(table, n_empty))
    emit("action_table.json",
         json.dumps({"empty_actions": n_empty, "actions": table},
                    indent=2, sort_keys=True) + "\n")

    if family == "laed":
        samples = generation_samples(model, data.test, vocab,
                                     window=cfg.context_window,
                                     n=n_generation, max_len=cfg.max_gen_len)
        emit("generation_samples.json",
             json.dumps(samples, indent=2, sort_keys=True) + "\n")
    return written
