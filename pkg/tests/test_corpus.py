"""Text handling: vocabulary, corpus loaders, dialog item extraction, and
the padded batch blocks."""

import json

import numpy as np
import pytest

from latact import corpus
from latact.corpus import (BOS, EOS, PAD, SPECIALS, UNK, Utterance,
                           Vocabulary, build_vocab)


def test_special_ids_fixed():
    assert (PAD, UNK, BOS, EOS) == (0, 1, 2, 3)
    assert SPECIALS == ["<pad>", "<unk>", "<s>", "</s>"]


def test_vocab_requires_specials_first():
    with pytest.raises(ValueError):
        Vocabulary(["a", "b"])


def test_build_vocab_cap_and_ties():
    sents = [["b", "b", "a", "a", "c"], ["d", "d", "d"]]
    v = build_vocab(sents, cap=3)
    # d(3) first, then the a/b tie resolves lexically, c dropped by cap
    assert v.id_to_token[4:] == ["d", "a", "b"]
    assert v.lookup("c") == UNK
    assert v.lookup("d") == 4


def test_build_vocab_specials_never_counted():
    sents = [["<unk>", "w", "w"]]
    v = build_vocab(sents, cap=5)
    assert v.id_to_token.count("<unk>") == 1
    assert v.lookup("w") == 4


def test_build_vocab_empty_corpus():
    with pytest.raises(ValueError):
        build_vocab([], cap=10)


def test_encode_decode_roundtrip():
    v = build_vocab([["hello", "world"]], cap=10)
    ids = v.encode(["hello", "world", "mars"])
    assert ids[-1] == UNK
    assert v.decode(ids) == ["hello", "world", "<unk>"]


def test_vocab_save_load_roundtrip(tmp_path):
    v = build_vocab([["x", "y", "z"]], cap=10)
    p = tmp_path / "vocab"
    v.save(str(p))
    w = Vocabulary.load(str(p))
    assert w.id_to_token == v.id_to_token


def test_tokenizers():
    assert corpus.whitespace_tokenize("  a  b\tc \n") == ["a", "b", "c"]
    assert corpus.simple_tokenize("Stop, now!") == ["stop", ",", "now", "!"]


def _dialog(n, label=None):
    return [Utterance([10 + i, 11 + i], act_label=label) for i in range(n)]


def test_make_triples_interior_only():
    triples = corpus.make_triples([_dialog(4), _dialog(2), _dialog(1)])
    assert len(triples) == 2  # only the 4-turn dialog has interior turns
    assert triples[0].previous.tokens == [10, 11]
    assert triples[0].current.tokens == [11, 12]
    assert triples[0].next.tokens == [12, 13]


def test_make_context_pairs_window():
    pairs = corpus.make_context_pairs([_dialog(5)], window=2)
    assert len(pairs) == 4  # every non-initial turn is a response
    assert all(len(p.context) <= 2 for p in pairs)
    last = pairs[-1]
    assert last.response.tokens == [14, 15]
    assert [u.tokens for u in last.context] == [[12, 13], [13, 14]]
    with pytest.raises(ValueError):
        corpus.make_context_pairs([_dialog(3)], window=0)


def test_batch_iterator_partitions():
    items = list(range(23))
    seen = []
    for batch in corpus.batch_iterator(items, 5, seed=3):
        assert len(batch) <= 5
        seen.extend(batch)
    assert sorted(seen) == items
    # same seed, same order
    again = [b for b in corpus.batch_iterator(items, 5, seed=3)]
    assert [x for b in again for x in b] == seen
    other = [x for b in corpus.batch_iterator(items, 5, seed=4) for x in b]
    assert other != seen


def test_batch_iterator_drop_last():
    items = list(range(23))
    batches = list(corpus.batch_iterator(items, 5, seed=0, drop_last=True))
    assert len(batches) == 4
    assert all(len(b) == 5 for b in batches)


def test_load_sentence_corpus(tmp_path):
    p = tmp_path / "sents.txt"
    p.write_text("a b c\n\nd e\n   \n", encoding="utf-8")
    sents, dropped = corpus.load_sentence_corpus(str(p))
    assert sents == [["a", "b", "c"], ["d", "e"]]
    assert dropped == 2


def test_load_dialog_corpus(tmp_path):
    p = tmp_path / "dialogs.jsonl"
    rec = {"turns": [
        {"speaker": "usr", "text": "hi there", "act": "greet"},
        {"speaker": "sys", "text": "hello", "act": "greet", "emotion": "joy"},
        {"speaker": "usr", "text": "   "},
    ]}
    p.write_text(json.dumps(rec) + "\n", encoding="utf-8")
    dialogs, dropped = corpus.load_dialog_corpus(str(p))
    assert len(dialogs) == 1 and len(dialogs[0]) == 2
    assert dropped == 1
    assert dialogs[0][0].speaker == "usr"
    assert dialogs[0][1].emotion_label == "joy"


def test_load_dialog_corpus_bad_line_number(tmp_path):
    p = tmp_path / "bad.jsonl"
    p.write_text('{"turns": [{"text": "ok"}]}\nnot json\n', encoding="utf-8")
    with pytest.raises(ValueError, match="line 2"):
        corpus.load_dialog_corpus(str(p))


def test_encode_dialogs_preserves_labels():
    v = build_vocab([["hi", "there"]], cap=10)
    d = [[Utterance(["hi", "mars"], speaker="usr", act_label="greet")]]
    out = corpus.encode_dialogs(d, v)
    assert out[0][0].tokens == [v.lookup("hi"), UNK]
    assert out[0][0].act_label == "greet"
    assert d[0][0].tokens == ["hi", "mars"]  # original untouched


def test_split_dialogs_reproducible():
    dialogs = [_dialog(2) for _ in range(20)]
    a = corpus.split_dialogs(dialogs, seed=5)
    b = corpus.split_dialogs(dialogs, seed=5)
    assert [len(x) for x in a] == [16, 2, 2]
    for pa, pb in zip(a, b):
        assert all(x is y for x, y in zip(pa, pb))
    c = corpus.split_dialogs(dialogs, seed=6)
    assert any(x is not y for x, y in zip(a[0], c[0]))


def test_pad_block():
    tokens, mask = corpus.pad_block([[5, 6, 7], [8]])
    assert tokens.shape == (2, 3)
    assert np.array_equal(tokens, [[5, 6, 7], [8, PAD, PAD]])
    assert np.array_equal(mask, [[1, 1, 1], [1, 0, 0]])


def test_decoder_block_shifts_and_eos():
    dec_in, dec_tgt, mask = corpus.decoder_block([[5, 6], [7]])
    assert np.array_equal(dec_in, [[BOS, 5, 6], [BOS, 7, PAD]])
    assert np.array_equal(dec_tgt, [[5, 6, EOS], [7, EOS, PAD]])
    # mask covers length + 1 steps: the EOS prediction is scored
    assert np.array_equal(mask, [[1, 1, 1], [1, 1, 0]])


def test_corpus_stats():
    dialogs = [_dialog(3), _dialog(2)]
    stats = corpus.corpus_stats(dialogs)
    assert stats["n_dialogs"] == 2
    assert stats["avg_dialog_len"] == 2.5
    assert stats["avg_utterance_len"] == 2.0
