"""Action tables, interpolation walks, and the report bundle."""

import json
import os

import numpy as np
import pytest

from latact import interpretation, networks, training
from latact import latent as lat
from latact.latent import LatentSpec

WORDS = ["alpha", "beta", "gamma", "delta", "eps"]
SPEC = LatentSpec(M=2, K=3, tau=1.0)


def write_sentence_corpus(path, n=40):
    lines = []
    for i in range(n):
        lines.append(" ".join([WORDS[i % 5], WORDS[(i + 1) % 5],
                               WORDS[(i * 3) % 5]]))
    with open(path, "w", encoding="utf-8") as f:
        f.write("\n".join(lines) + "\n")


def write_dialog_corpus(path, n=12, turns=4):
    with open(path, "w", encoding="utf-8") as f:
        for d in range(n):
            rec = {"turns": [
                {"speaker": "usr" if t % 2 == 0 else "sys",
                 "text": f"{WORDS[(d + t) % 5]} {WORDS[(d * 2 + t) % 5]}",
                 "act": str((d + t) % 3)}
                for t in range(turns)]}
            f.write(json.dumps(rec) + "\n")


def tiny_model(rng, vocab=11):
    return networks.AutoEncodingModel(rng, vocab, SPEC, emb_dim=5,
                                      enc_hidden=4, dec_hidden=4)


def test_assign_actions_order_and_batching(rng):
    model = tiny_model(rng)
    seqs = [[4, 5], [6], [7, 8, 9], [10], [4, 6]]
    whole = interpretation.assign_actions(model, seqs, batch_size=64)
    chunked = interpretation.assign_actions(model, seqs, batch_size=2)
    assert whole.shape == (5, 2)
    assert np.array_equal(whole, chunked)


class FixedCodeModel:
    """Recognition stub mapping first token -> a fixed action."""

    def __init__(self, M=1, K=4):
        self.spec = LatentSpec(M=M, K=K, tau=1.0)

    class encoder:
        @staticmethod
        def recognize(tokens, mask):
            B = tokens.shape[0]
            post = np.zeros((B, 1, 4))
            for b in range(B):
                post[b, 0, int(tokens[b, 0]) % 4] = 1.0
            return post


class EchoVocab:
    def decode(self, ids):
        return [f"w{i}" for i in ids]


def test_action_table_partition():
    model = FixedCodeModel()
    seqs = [[4], [5], [8], [9], [4, 7], [5, 5], [4]]  # codes 0,1,0,1,0,1,0
    table, n_empty = interpretation.action_table(model, seqs, EchoVocab(),
                                                 samples_per_action=2)
    assert set(table) == {"0", "1"}
    assert table["0"]["count"] == 4 and table["1"]["count"] == 3
    assert sum(slot["count"] for slot in table.values()) == len(seqs)
    assert n_empty == 4 - 2
    for slot in table.values():
        assert len(slot["samples"]) <= 2
        assert all(isinstance(s, str) for s in slot["samples"])
    with pytest.raises(ValueError):
        interpretation.action_table(model, seqs, EchoVocab(),
                                    samples_per_action=0)


def test_action_table_reservoir_determinism():
    model = FixedCodeModel()
    seqs = [[4, i] for i in range(30)]  # all the same action
    t1, _ = interpretation.action_table(model, seqs, EchoVocab(),
                                        samples_per_action=3, seed=9)
    t2, _ = interpretation.action_table(model, seqs, EchoVocab(),
                                        samples_per_action=3, seed=9)
    assert t1 == t2
    assert len(t1["0"]["samples"]) == 3
    # every sample is a member of the group
    member_texts = {" ".join(f"w{i}" for i in s) for s in seqs}
    assert set(t1["0"]["samples"]) <= member_texts


def test_action_table_text_format():
    table = {"1-2": {"count": 3, "samples": ["a b", "c"]},
             "0-0": {"count": 1, "samples": ["d"]}}
    txt = interpretation.action_table_text(table, n_empty=5)
    lines = txt.splitlines()
    assert lines[0] == "# 2 actions over 4 utterances (5 empty actions omitted)"
    # blocks ordered by action key
    assert lines.index("ACTION 0-0 (n=1)") < lines.index("ACTION 1-2 (n=3)")
    assert "  a b" in lines


def test_interpolate_path(rng):
    model = tiny_model(rng)
    vocab = EchoVocab()
    x1, x2 = [4, 5, 6], [7, 8]
    codes = interpretation.assign_actions(model, [x1, x2])
    n_flips = int((codes[0] != codes[1]).sum())
    path = interpretation.interpolate(model, x1, x2, vocab, max_len=6)
    assert len(path) == n_flips + 1
    assert len(path) <= model.spec.M + 1
    assert path[0][0] == lat.assignment_string(codes[0])
    assert path[0][1] == "w4 w5 w6"  # row zero shows the source sentence
    assert path[-1][0] == lat.assignment_string(codes[1])
    for key, sent in path:
        assert isinstance(key, str) and isinstance(sent, str)
    # ascending flip order: each step changes exactly one variable
    prev = codes[0]
    for key, _ in path[1:]:
        cur = np.array([int(v) for v in key.split("-")])
        assert (cur != prev).sum() == 1
        prev = cur


def test_interpolate_same_sentence(rng):
    model = tiny_model(rng)
    path = interpretation.interpolate(model, [4, 5], [4, 5], EchoVocab())
    assert len(path) == 1


def test_interpolate_needs_autoencoder(rng):
    skip = networks.SkipThoughtModel(rng, 11, SPEC, emb_dim=5,
                                     enc_hidden=4, dec_hidden=4)
    with pytest.raises(ValueError, match="reconstruction"):
        interpretation.interpolate(skip, [4], [5], EchoVocab())


def test_interpolation_text():
    txt = interpretation.interpolation_text([("0-1", "a b"), ("1-1", "c")])
    lines = txt.splitlines()
    assert len(lines) == 2
    assert lines[0].endswith("a b") and "0-1" in lines[0]


def autoenc_run(tmp_path):
    corpus_path = str(tmp_path / "sentences.txt")
    write_sentence_corpus(corpus_path)
    cfg = training.ModelConfig(variant="di-vae", corpus_path=corpus_path,
                               run_dir=str(tmp_path / "run"), M=2, K=3,
                               emb_dim=4, enc_hidden=5, dec_hidden=5,
                               vocab_cap=50, batch_size=8, max_epochs=2,
                               seed=3, max_gen_len=8)
    training.train(cfg)
    return cfg


def test_emit_report_autoencoder(tmp_path):
    cfg = autoenc_run(tmp_path)
    written = interpretation.emit_report(cfg.run_dir, samples_per_action=2)
    names = {os.path.basename(p) for p in written}
    assert names == {"metrics.json", "action_table.txt", "action_table.json"}
    report_dir = os.path.join(cfg.run_dir, "report")
    metrics = json.load(open(os.path.join(report_dir, "metrics.json")))
    assert metrics["split"] == "test" and metrics["ppl"] >= 1.0
    txt = open(os.path.join(report_dir, "action_table.txt")).read()
    assert txt.startswith("# ")
    blob = json.load(open(os.path.join(report_dir, "action_table.json")))
    assert "actions" in blob and "empty_actions" in blob


def test_emit_report_byte_stable(tmp_path):
    cfg = autoenc_run(tmp_path)
    first = interpretation.emit_report(cfg.run_dir)
    snapshots = {p: open(p, "rb").read() for p in first}
    second = interpretation.emit_report(cfg.run_dir)
    assert first == second
    for p in second:
        assert open(p, "rb").read() == snapshots[p], p


def test_emit_report_dialog_run(tmp_path):
    corpus_path = str(tmp_path / "dialogs.jsonl")
    write_dialog_corpus(corpus_path)
    cfg = training.ModelConfig(variant="st-ed", corpus_path=corpus_path,
                               corpus_format="dialogs",
                               run_dir=str(tmp_path / "run"), M=1, K=2,
                               emb_dim=4, enc_hidden=5, utt_hidden=4,
                               ctx_hidden=5, dec_hidden=5, policy_hidden=6,
                               context_window=2, vocab_cap=50, batch_size=8,
                               max_epochs=2, seed=3, max_gen_len=8,
                               lam=1.0, lam_warmup=5)
    training.train(cfg)
    written = interpretation.emit_report(cfg.run_dir, n_generation=2)
    names = {os.path.basename(p) for p in written}
    assert "generation_samples.json" in names
    samples = json.load(open(os.path.join(cfg.run_dir, "report",
                                          "generation_samples.json")))
    assert len(samples) == 2
    for rec in samples:
        assert set(rec) == {"context", "reference", "action", "generated"}
        assert isinstance(rec["context"], list)
