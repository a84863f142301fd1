"""Synthetic corpora with known latent structure, used by the acceptance
experiments. The cluster corpus makes cluster identity recoverable by
construction; the Markov dialog corpus makes the next utterance type a
(near-)deterministic function of the current one."""

import numpy as np

from .corpus import Utterance

_SHARED = ["the", "a", "and", "to", "of", "it", "is", "was", "on", "so",
           "but", "then", "now", "just", "very"]


def _cluster_lexicon(c):
    nouns = [f"n{c}_{i}" for i in range(8)]
    verbs = [f"v{c}_{i}" for i in range(6)]
    mods = [f"m{c}_{i}" for i in range(6)]
    return nouns, verbs, mods


def _cluster_sentence(c, rng):
    nouns, verbs, mods = _cluster_lexicon(c)
    n = lambda: nouns[rng.integers(len(nouns))]
    v = lambda: verbs[rng.integers(len(verbs))]
    m = lambda: mods[rng.integers(len(mods))]
    d = lambda: _SHARED[rng.integers(len(_SHARED))]
    patterns = (
        lambda: [d(), n(), v(), d(), n()],
        lambda: [d(), m(), n(), v()],
        lambda: [n(), v(), m(), n()],
        lambda: [d(), n(), v(), d(), m(), n()],
        lambda: [m(), n(), v(), n()],
    )
    return patterns[rng.integers(len(patterns))]()


def cluster_corpus(seed=0, n_clusters=10, n_sentences=5000):
    """Templated sentences from n_clusters disjoint content vocabularies
    over a shared function-word pool. Returns (sentences, labels) with
    sentences as token-string lists and labels the generating cluster."""
    rng = np.random.default_rng(seed)
    sentences, labels = [], []
    for _ in range(n_sentences):
        c = int(rng.integers(n_clusters))
        sentences.append(_cluster_sentence(c, rng))
        labels.append(c)
    return sentences, labels


def _type_sentence(t, rng):
    nouns = [f"t{t}n{i}" for i in range(6)]
    verbs = [f"t{t}v{i}" for i in range(4)]
    n = lambda: nouns[rng.integers(len(nouns))]
    v = lambda: verbs[rng.integers(len(verbs))]
    d = lambda: _SHARED[rng.integers(len(_SHARED))]
    patterns = (
        lambda: [n(), v(), n()],
        lambda: [d(), n(), v()],
        lambda: [n(), v(), d(), n()],
        lambda: [d(), n(), v(), n()],
    )
    return patterns[rng.integers(len(patterns))]()


def markov_dialogs(seed=0, n_dialogs=700, n_types=10, determinism=1.0,
                   min_len=5, max_len=8):
    """Dialogs whose utterance types follow a first-order chain: with
    probability `determinism` the next type is a fixed permutation of the
    current one, otherwise a fixed alternative. Utterance surface forms
    are type-specific. Returns dialogs of Utterance (token strings, with
    the type recorded as act_label) plus the permutation used."""
    rng = np.random.default_rng(seed)
    perm = (np.arange(n_types) + 1) % n_types
    alt = (np.arange(n_types) + 3) % n_types
    dialogs = []
    for _ in range(n_dialogs):
        length = int(rng.integers(min_len, max_len + 1))
        t = int(rng.integers(n_types))
        turns = []
        for i in range(length):
            turns.append(Utterance(_type_sentence(t, rng),
                                   speaker="usr" if i % 2 == 0 else "sys",
                                   act_label=str(t)))
            t = int(perm[t] if rng.uniform() < determinism else alt[t])
        dialogs.append(turns)
    return dialogs, perm
