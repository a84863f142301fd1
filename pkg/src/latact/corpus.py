"""Corpus ingestion: vocabularies, utterances, dialogs, and the batch
shapes the trainers consume (padded token blocks, skip-thought triples,
context-response pairs)."""

import collections
import json
import re
from dataclasses import dataclass, field

import numpy as np

PAD, UNK, BOS, EOS = 0, 1, 2, 3
SPECIALS = ["<pad>", "<unk>", "<s>", "</s>"]

_PUNCT = re.compile(r"(\W)")


def whitespace_tokenize(text):
    return text.split()


def simple_tokenize(text):
    """Lowercase and split punctuation off words, for raw dialog text."""
    out = []
    for piece in text.lower().split():
        out.extend(p for p in _PUNCT.split(piece) if p and not p.isspace())
    return out


class Vocabulary:
    """Token/id bijection with fixed special ids at the bottom."""

    def __init__(self, tokens):
        self.id_to_token = list(tokens)
        if self.id_to_token[:len(SPECIALS)] != SPECIALS:
            raise ValueError("vocabulary must start with the special tokens")
        self.token_to_id = {t: i for i, t in enumerate(self.id_to_token)}
        if len(self.token_to_id) != len(self.id_to_token):
            raise ValueError("duplicate token in vocabulary")

    def __len__(self):
        return len(self.id_to_token)

    def lookup(self, token):
        return self.token_to_id.get(token, UNK)

    def encode(self, tokens):
        return [self.token_to_id.get(t, UNK) for t in tokens]

    def decode(self, ids):
        return [self.id_to_token[i] for i in ids]

    def save(self, path):
        with open(path, "w", encoding="utf-8") as f:
            for tok in self.id_to_token:
                f.write(tok + "\n")

    @classmethod
    def load(cls, path):
        with open(path, encoding="utf-8") as f:
            return cls([line.rstrip("\n") for line in f])


def build_vocab(sentences, cap):
    """Keep the `cap` most frequent word types, ties broken lexically.

    sentences: iterable of token lists. Specials never count against cap.
    """
    counts = collections.Counter()
    n = 0
    for toks in sentences:
        n += 1
        counts.update(toks)
    if n == 0 or not counts:
        raise ValueError("empty corpus")
    for sp in SPECIALS:
        counts.pop(sp, None)
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    return Vocabulary(SPECIALS + [tok for tok, _ in ranked[:cap]])


@dataclass
class Utterance:
    tokens: list
    speaker: str = None
    act_label: str = None
    emotion_label: str = None

    def __len__(self):
        return len(self.tokens)


@dataclass
class SentenceTriple:
    previous: Utterance
    current: Utterance
    next: Utterance


@dataclass
class ContextResponsePair:
    context: list
    response: Utterance


def make_triples(dialogs):
    """One triple per interior utterance; dialogs shorter than 3 give none."""
    out = []
    for d in dialogs:
        for i in range(1, len(d) - 1):
            out.append(SentenceTriple(d[i - 1], d[i], d[i + 1]))
    return out


def make_context_pairs(dialogs, window=10):
    if window < 1:
        raise ValueError("context window must be >= 1")
    out = []
    for d in dialogs:
        for i in range(1, len(d)):
            out.append(ContextResponsePair(d[max(0, i - window):i], d[i]))
    return out


def batch_iterator(items, batch_size, seed, drop_last=False):
    """One epoch of batches: global shuffle by seed, then consecutive cuts."""
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    order = np.random.default_rng(seed).permutation(len(items))
    for start in range(0, len(items), batch_size):
        chunk = order[start:start + batch_size]
        if drop_last and len(chunk) < batch_size:
            return
        yield [items[i] for i in chunk]


def corpus_stats(dialogs, vocab=None):
    n_utts = sum(len(d) for d in dialogs)
    n_toks = sum(len(u) for d in dialogs for u in d)
    return {
        "vocab_size": len(vocab) if vocab is not None else None,
        "n_dialogs": len(dialogs),
        "avg_dialog_len": n_utts / len(dialogs) if dialogs else 0.0,
        "avg_utterance_len": n_toks / n_utts if n_utts else 0.0,
    }


# -- file formats -----------------------------------------------------------

def load_sentence_corpus(path, tokenizer=whitespace_tokenize):
    """Plain text, one sentence per line. Empty lines dropped with a count.

    Returns (list of token lists, dropped count).
    """
    sents, dropped = [], 0
    with open(path, encoding="utf-8") as f:
        for line in f:
            toks = tokenizer(line)
            if toks:
                sents.append(toks)
            else:
                dropped += 1
    return sents, dropped


def load_dialog_corpus(path, tokenizer=whitespace_tokenize):
    """JSON-lines, one dialog per line:
    {"turns": [{"speaker": "usr"|"sys", "text": str, "act": str?, "emotion": str?}]}

    Returns (list of dialogs, dropped-empty-utterance count). Raises
    ValueError carrying the 1-based line number on parse failure.
    """
    dialogs, dropped = [], 0
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                turns = rec["turns"]
            except (json.JSONDecodeError, KeyError, TypeError) as e:
                raise ValueError(f"bad dialog record at line {lineno}: {e}") from None
            dialog = []
            for t in turns:
                toks = tokenizer(t["text"])
                if not toks:
                    dropped += 1
                    continue
                dialog.append(Utterance(toks, speaker=t.get("speaker"),
                                        act_label=t.get("act"),
                                        emotion_label=t.get("emotion")))
            if dialog:
                dialogs.append(dialog)
    return dialogs, dropped


def encode_dialogs(dialogs, vocab):
    """Replace token strings with ids in place-like copies."""
    out = []
    for d in dialogs:
        out.append([Utterance(vocab.encode(u.tokens), u.speaker, u.act_label,
                              u.emotion_label) for u in d])
    return out


def split_dialogs(dialogs, seed, ratios=(0.8, 0.1, 0.1)):
    """Shuffled train/valid/test split by dialog."""
    order = np.random.default_rng(seed).permutation(len(dialogs))
    n = len(dialogs)
    n_train = int(round(ratios[0] * n))
    n_valid = int(round(ratios[1] * n))
    parts = (order[:n_train], order[n_train:n_train + n_valid],
             order[n_train + n_valid:])
    return tuple([dialogs[i] for i in part] for part in parts)


# -- padded batch blocks ----------------------------------------------------

def pad_block(seqs, pad=PAD):
    """Right-pad id sequences into (B, T) ints plus a float (B, T) mask."""
    B = len(seqs)
    T = max(len(s) for s in seqs)
    toks = np.full((B, T), pad, dtype=np.intp)
    mask = np.zeros((B, T))
    for i, s in enumerate(seqs):
        toks[i, :len(s)] = s
        mask[i, :len(s)] = 1.0
    return toks, mask


def decoder_block(seqs, pad=PAD, bos=BOS, eos=EOS):
    """Teacher-forcing arrays: inputs <s> w1..wT, targets w1..wT </s>.

    The mask covers length+1 steps so end-of-sentence is a predicted token.
    """
    B = len(seqs)
    T = max(len(s) for s in seqs) + 1
    dec_in = np.full((B, T), pad, dtype=np.intp)
    dec_tgt = np.full((B, T), pad, dtype=np.intp)
    mask = np.zeros((B, T))
    dec_in[:, 0] = bos
    for i, s in enumerate(seqs):
        L = len(s)
        dec_in[i, 1:L + 1] = s
        dec_tgt[i, :L] = s
        dec_tgt[i, L] = eos
        mask[i, :L + 1] = 1.0
    return dec_in, dec_tgt, mask
