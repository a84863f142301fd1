"""Experiment configuration, the optimization loop for every variant,
checkpointing, and the two sweeps.

Runs are directories: a flat `config` file, the `vocab`, JSON-lines
`log.jsonl` with one record per optimization step plus one per validation
pass, `params-step-S.npz` checkpoints, and a `best` marker naming the
checkpoint with the lowest validation objective. The validation objective
is the training loss at its final weights (anneal weight 1, the
configured attribute weight), so epochs are comparable.
"""

import dataclasses
import json
import os
from dataclasses import dataclass, field

import numpy as np

from . import corpus as corpus_mod
from . import laed as laed_mod
from . import metrics as metrics_mod
from . import networks, objectives
from .corpus import Vocabulary, batch_iterator
from .latent import LatentSpec
from .nn import Adam, clip_global_norm

AUTOENC_VARIANTS = ("dae", "dvae", "di-vae")
SKIP_VARIANTS = ("dst", "dvst", "di-vst")
LAED_VARIANTS = ("ae-ed", "st-ed")
VARIANTS = AUTOENC_VARIANTS + SKIP_VARIANTS + LAED_VARIANTS


class ConfigError(Exception):
    pass


class DataError(Exception):
    pass


@dataclass
class ModelConfig:
    variant: str = "di-vae"
    corpus_path: str = ""
    corpus_format: str = "sentences"  # sentences | dialogs
    run_dir: str = "run"
    recognition_run: str = ""  # LAED: checkpoint dir of the pre-trained R
    M: int = 20
    K: int = 10
    tau: float = 1.0
    emb_dim: int = 200
    enc_hidden: int = 512
    utt_hidden: int = 256
    ctx_hidden: int = 512
    dec_hidden: int = 512
    policy_hidden: int = 512
    vocab_cap: int = 10000
    batch_size: int = 30
    lr: float = 0.001
    lam: float = 1.0
    lam_warmup: int = 30
    kl_anneal: bool = True
    warmup_steps: int = 10000
    bow_weight: float = 1.0
    context_window: int = 10
    max_epochs: int = 50
    patience: int = 5
    grad_clip: float = 5.0
    max_gen_len: int = 40
    seed: int = 1
    drop_last: bool = False
    log_every: int = 10

    def family(self):
        if self.variant in AUTOENC_VARIANTS:
            return "autoenc"
        if self.variant in SKIP_VARIANTS:
            return "skip"
        return "laed"

    def spec(self):
        return LatentSpec(M=self.M, K=self.K, tau=self.tau)


_BOOL_WORDS = {"true": True, "1": True, "yes": True,
               "false": False, "0": False, "no": False}


def _coerce(name, raw, typ):
    try:
        if typ is bool:
            if isinstance(raw, bool):
                return raw
            word = str(raw).strip().lower()
            if word not in _BOOL_WORDS:
                raise ValueError(raw)
            return _BOOL_WORDS[word]
        return typ(raw)
    except (TypeError, ValueError):
        raise ConfigError(f"bad value for config key '{name}': {raw!r}") from None


def config_from_items(items, base=None):
    """Build a ModelConfig from {key: raw value}, type-coerced against the
    dataclass fields. Unknown keys are config errors."""
    cfg = dataclasses.replace(base) if base is not None else ModelConfig()
    defaults = ModelConfig()
    types = {f.name: type(getattr(defaults, f.name))
             for f in dataclasses.fields(ModelConfig)}
    for key, raw in items.items():
        if key not in types:
            raise ConfigError(f"unknown config key '{key}'")
        setattr(cfg, key, _coerce(key, raw, types[key]))
    return cfg


def parse_config_file(path):
    """Flat `key = value` lines; # starts a comment; blank lines ignored."""
    items = {}
    try:
        with open(path, encoding="utf-8") as f:
            lines = f.readlines()
    except OSError as e:
        raise ConfigError(f"cannot read config file {path}: {e}") from None
    for lineno, line in enumerate(lines, start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
        key, val = body.split("=", 1)
        items[key.strip()] = val.strip()
    return items


def write_config_file(cfg, path):
    with open(path, "w", encoding="utf-8") as f:
        for fld in dataclasses.fields(ModelConfig):
            f.write(f"{fld.name} = {getattr(cfg, fld.name)}\n")


def validate_config(cfg, explicit=()):
    cfg.variant = cfg.variant.lower()
    if cfg.variant not in VARIANTS:
        raise ConfigError(f"unknown variant '{cfg.variant}'")
    for key in ("M", "K", "emb_dim", "enc_hidden", "utt_hidden", "ctx_hidden",
                "dec_hidden", "policy_hidden", "vocab_cap", "batch_size",
                "max_epochs", "patience", "context_window", "warmup_steps",
                "max_gen_len"):
        if getattr(cfg, key) < 1:
            raise ConfigError(f"config key '{key}' must be positive")
    for key in ("tau", "lr"):
        if getattr(cfg, key) <= 0:
            raise ConfigError(f"config key '{key}' must be positive")
    if cfg.lam < 0 or cfg.bow_weight < 0 or cfg.grad_clip <= 0:
        raise ConfigError("lam, bow_weight must be >= 0 and grad_clip > 0")
    if cfg.family() != "laed":
        for key in ("lam", "lam_warmup", "recognition_run"):
            if key in explicit:
                raise ConfigError(
                    f"config key '{key}' applies only to LAED variants")
    return cfg


# -- data ---------------------------------------------------------------------

@dataclass
class TrainData:
    """Variant-ready splits. Items are id-token lists (autoencoding),
    SentenceTriples (skip-thought), or ContextResponsePairs (dialog
    generation); labels ride along for sentence corpora."""
    vocab: Vocabulary
    train: list
    valid: list
    test: list
    train_labels: list = None
    valid_labels: list = None
    test_labels: list = None
    dialogs: tuple = None  # raw id-encoded dialog splits, kept for LAED reuse


def _split_list(items, seed, ratios=(0.8, 0.1, 0.1)):
    order = np.random.default_rng(seed).permutation(len(items))
    n_train = int(round(ratios[0] * len(items)))
    n_valid = int(round(ratios[1] * len(items)))
    cut = (order[:n_train], order[n_train:n_train + n_valid],
           order[n_train + n_valid:])
    return tuple([items[i] for i in part] for part in cut)


def data_from_sentences(cfg, sentences, labels=None, vocab=None):
    """Split raw token-string sentences 80/10/10 by the run seed, build
    the capped vocabulary on the training split, and id-encode."""
    if not sentences:
        raise DataError("empty corpus")
    idx = list(range(len(sentences)))
    tr, va, te = _split_list(idx, cfg.seed)
    if vocab is None:
        vocab = corpus_mod.build_vocab([sentences[i] for i in tr], cfg.vocab_cap)
    enc = lambda part: [vocab.encode(sentences[i]) for i in part]
    lab = lambda part: [labels[i] for i in part] if labels is not None else None
    return TrainData(vocab, enc(tr), enc(va), enc(te),
                     lab(tr), lab(va), lab(te))


def data_from_dialogs(cfg, dialogs, vocab=None):
    """Split by dialog, build the vocabulary on training utterances, and
    derive the variant's item type."""
    if not dialogs:
        raise DataError("empty corpus")
    tr, va, te = _split_list(dialogs, cfg.seed)
    if vocab is None:
        vocab = corpus_mod.build_vocab((u.tokens for d in tr for u in d),
                                       cfg.vocab_cap)
    tr, va, te = (corpus_mod.encode_dialogs(part, vocab) for part in (tr, va, te))
    family = cfg.family()
    if family == "autoenc":
        items = tuple([u.tokens for d in part for u in d] for part in (tr, va, te))
        labels = tuple([u.act_label for d in part for u in d]
                       for part in (tr, va, te))
        return TrainData(vocab, *items, *labels, dialogs=(tr, va, te))
    if family == "skip":
        items = tuple(corpus_mod.make_triples(part) for part in (tr, va, te))
        if not items[0]:
            raise DataError("no skip-thought triples: dialogs shorter than 3 turns")
        return TrainData(vocab, *items, dialogs=(tr, va, te))
    items = tuple(corpus_mod.make_context_pairs(part, cfg.context_window)
                  for part in (tr, va, te))
    if not items[0]:
        raise DataError("no context-response pairs: single-turn dialogs")
    return TrainData(vocab, *items, dialogs=(tr, va, te))


def load_data(cfg, vocab=None):
    if not cfg.corpus_path:
        raise DataError("no corpus_path configured")
    if cfg.corpus_format == "sentences":
        if cfg.family() != "autoenc":
            raise DataError(f"variant {cfg.variant} needs a dialog corpus")
        try:
            sents, _ = corpus_mod.load_sentence_corpus(cfg.corpus_path)
        except OSError as e:
            raise DataError(f"cannot read corpus: {e}") from None
        if not sents:
            raise DataError(f"no sentences in {cfg.corpus_path}")
        return data_from_sentences(cfg, sents, vocab=vocab)
    if cfg.corpus_format != "dialogs":
        raise ConfigError(f"unknown corpus_format '{cfg.corpus_format}'")
    try:
        dialogs, _ = corpus_mod.load_dialog_corpus(cfg.corpus_path)
    except OSError as e:
        raise DataError(f"cannot read corpus: {e}") from None
    except ValueError as e:
        raise DataError(str(e)) from None
    if not dialogs:
        raise DataError(f"no dialogs in {cfg.corpus_path}")
    return data_from_dialogs(cfg, dialogs, vocab=vocab)


# -- batches ------------------------------------------------------------------

def build_batch(family, items, window=None):
    if family == "autoenc":
        tokens, mask = corpus_mod.pad_block(items)
        dec_in, dec_tgt, dec_mask = corpus_mod.decoder_block(items)
        return {"tokens": tokens, "mask": mask, "dec_in": dec_in,
                "dec_tgt": dec_tgt, "dec_mask": dec_mask}
    if family == "skip":
        cur = [t.current.tokens for t in items]
        batch = {}
        batch["tokens"], batch["mask"] = corpus_mod.pad_block(cur)
        for name, seqs in (("prev", [t.previous.tokens for t in items]),
                           ("next", [t.next.tokens for t in items])):
            i, t, m = corpus_mod.decoder_block(seqs)
            batch[f"{name}_in"], batch[f"{name}_tgt"], batch[f"{name}_mask"] = i, t, m
            tk, tm = corpus_mod.pad_block(seqs)
            batch[f"{name}_tokens"], batch[f"{name}_tok_mask"] = tk, tm
        return batch
    return laed_mod.pair_batch(items, window=window)


def compute_loss(cfg, model, batch, rng, step, final_weights=False):
    """Dispatch the variant objective at this step's schedule weights.
    final_weights pins anneal weight 1 and the configured attribute
    weight, the convention for validation passes."""
    v = cfg.variant
    if v == "di-vae":
        return objectives.di_vae_loss(model, batch, rng)
    if v == "di-vst":
        return objectives.di_vst_loss(model, batch, rng)
    if v in ("dae", "dst"):
        fn = objectives.dvae_elbo_loss if v == "dae" else objectives.dvst_elbo_loss
        return fn(model, batch, rng, anneal_weight=0.0, bow_weight=0.0)
    if v in ("dvae", "dvst"):
        if final_weights or not cfg.kl_anneal:
            w = 1.0
        else:
            w = objectives.kl_anneal_schedule(step, cfg.warmup_steps)
        fn = objectives.dvae_elbo_loss if v == "dvae" else objectives.dvst_elbo_loss
        return fn(model, batch, rng, anneal_weight=w, bow_weight=cfg.bow_weight)
    if final_weights or cfg.lam_warmup < 1:
        lam = cfg.lam
    else:
        lam = cfg.lam * min(1.0, step / cfg.lam_warmup)
    return laed_mod.attr_laed_loss(model, batch, rng, lam=lam)


# -- model construction and checkpoints ---------------------------------------

def build_model(cfg, vocab_size, rng, pretrained=None):
    spec = cfg.spec()
    family = cfg.family()
    if family == "autoenc":
        return networks.AutoEncodingModel(rng, vocab_size, spec, cfg.emb_dim,
                                          cfg.enc_hidden, cfg.dec_hidden)
    if family == "skip":
        return networks.SkipThoughtModel(rng, vocab_size, spec, cfg.emb_dim,
                                         cfg.enc_hidden, cfg.dec_hidden)
    if pretrained is None:
        raise ConfigError("LAED variants need a pre-trained recognition model")
    return laed_mod.LaedModel(rng, pretrained, cfg.utt_hidden, cfg.ctx_hidden,
                              cfg.dec_hidden, cfg.policy_hidden, cfg.lam)


def save_checkpoint(run_dir, model, opt, step, best_val, tag=None):
    tag = tag or f"params-step-{step}"
    arrays = {f"p/{name}": p.data for name, p in model.named_parameters()}
    arrays["meta/step"] = np.array(step)
    arrays["meta/best_val"] = np.array(best_val)
    if opt is not None:
        arrays["meta/opt_t"] = np.array(opt.t)
        for i, (m, v) in enumerate(zip(opt.m, opt.v)):
            arrays[f"om/{i}"] = m
            arrays[f"ov/{i}"] = v
    np.savez(os.path.join(run_dir, tag + ".npz"), **arrays)
    return tag


def mark_best(run_dir, tag):
    with open(os.path.join(run_dir, "best"), "w", encoding="utf-8") as f:
        f.write(tag + "\n")


def load_checkpoint_arrays(run_dir, which="best"):
    if which == "best":
        try:
            with open(os.path.join(run_dir, "best"), encoding="utf-8") as f:
                which = f.read().strip()
        except OSError:
            raise DataError(f"run {run_dir} has no best marker") from None
    path = os.path.join(run_dir, which + ".npz")
    if not os.path.exists(path):
        raise DataError(f"missing checkpoint {path}")
    return dict(np.load(path).items())


def restore_model(model, arrays, opt=None):
    state = {name[2:]: arr for name, arr in arrays.items()
             if name.startswith("p/")}
    model.load_state_dict(state)
    if opt is not None and "meta/opt_t" in arrays:
        opt.load_state_dict({
            "t": int(arrays["meta/opt_t"]),
            "m": [arrays[f"om/{i}"] for i in range(len(opt.m))],
            "v": [arrays[f"ov/{i}"] for i in range(len(opt.v))]})
    return float(arrays["meta/best_val"]), int(arrays["meta/step"])


def load_run(run_dir, which="best"):
    """Rebuild (cfg, vocab, model) from a run directory."""
    cfg_path = os.path.join(run_dir, "config")
    if not os.path.exists(cfg_path):
        raise DataError(f"{run_dir} is not a run directory (no config)")
    cfg = config_from_items(parse_config_file(cfg_path))
    vocab = Vocabulary.load(os.path.join(run_dir, "vocab"))
    rng = np.random.default_rng(cfg.seed)
    pretrained = None
    if cfg.family() == "laed":
        rec_dir = cfg.recognition_run or os.path.join(run_dir, "recognition")
        _, _, pretrained = load_run(rec_dir)
    model = build_model(cfg, len(vocab), rng, pretrained=pretrained)
    arrays = load_checkpoint_arrays(run_dir, which)
    restore_model(model, arrays)
    return cfg, vocab, model


# -- the loop -----------------------------------------------------------------

@dataclass
class TrainResult:
    cfg: ModelConfig
    model: object
    vocab: Vocabulary
    data: TrainData
    best_val: float
    best_step: int
    report: metrics_mod.MetricsReport
    history: list = field(default_factory=list)

    @property
    def run_dir(self):
        return self.cfg.run_dir


def evaluate_split(cfg, model, items, labels, split):
    family = cfg.family()
    if family == "autoenc":
        return metrics_mod.evaluate_autoencoder(model, items, split=split,
                                                batch_size=cfg.batch_size,
                                                labels=labels)
    if family == "skip":
        return metrics_mod.evaluate_skipthought(model, items, split=split,
                                                batch_size=cfg.batch_size)
    return metrics_mod.evaluate_laed(model, items, split=split,
                                     batch_size=cfg.batch_size,
                                     window=cfg.context_window,
                                     max_len=cfg.max_gen_len)


def validation_objective(cfg, model, items, step):
    """Mean per-item training objective at final schedule weights, with a
    fixed noise stream so reloads reproduce the value exactly."""
    rng = np.random.default_rng(cfg.seed + 7919)
    family = cfg.family()
    total = 0.0
    n = 0
    for start in range(0, len(items), cfg.batch_size):
        chunk = items[start:start + cfg.batch_size]
        batch = build_batch(family, chunk, window=cfg.context_window)
        lb = compute_loss(cfg, model, batch, rng, step, final_weights=True)
        total += lb.total_value * len(chunk)
        n += len(chunk)
    return total / max(n, 1)


def _resolve_recognition(cfg, data, pretrained, log):
    """LAED setup: adopt the given model, load recognition_run, or
    pre-train the matching recognition variant into run_dir/recognition."""
    if pretrained is not None:
        if data is None:
            raise DataError("a pre-trained model passed in memory needs "
                            "in-memory data built on its vocabulary")
        return pretrained, data
    if cfg.recognition_run:
        rec_cfg, rec_vocab, rec_model = load_run(cfg.recognition_run)
        if data is None:
            data = load_data(cfg, vocab=rec_vocab)
        return rec_model, data
    rec_variant = "di-vae" if cfg.variant == "ae-ed" else "di-vst"
    rec_cfg = dataclasses.replace(
        cfg, variant=rec_variant, lam=1.0, lam_warmup=30,
        recognition_run="", run_dir=os.path.join(cfg.run_dir, "recognition"))
    log(f"pre-training recognition ({rec_variant}) in {rec_cfg.run_dir}")
    rec_data = None
    if data is not None and data.dialogs is not None:
        tr, va, te = data.dialogs
        if rec_variant == "di-vae":
            rec_data = TrainData(data.vocab,
                                 *([u.tokens for d in part for u in d]
                                   for part in (tr, va, te)))
        else:
            rec_data = TrainData(data.vocab,
                                 *(corpus_mod.make_triples(part)
                                   for part in (tr, va, te)))
    rec_result = train(rec_cfg, data=rec_data)
    if data is None:
        data = load_data(cfg, vocab=rec_result.vocab)
    return rec_result.model, data


def train(cfg, data=None, pretrained=None, quiet=True):
    """Run one experiment to convergence; returns the best model, its
    validation value, and the test-split metrics report."""
    validate_config(cfg)
    if data is None and cfg.family() != "laed":
        data = load_data(cfg)
    os.makedirs(cfg.run_dir, exist_ok=True)
    log_path = os.path.join(cfg.run_dir, "log.jsonl")
    log_f = open(log_path, "w", encoding="utf-8")

    def log(msg):
        if not quiet:
            print(msg)

    try:
        if cfg.family() == "laed":
            pretrained, data = _resolve_recognition(cfg, data, pretrained, log)
        rng = np.random.default_rng(cfg.seed)
        noise = np.random.default_rng(cfg.seed + 101)
        model = build_model(cfg, len(data.vocab), rng, pretrained=pretrained)
        opt = Adam(model.trainable_parameters(), lr=cfg.lr)
        write_config_file(cfg, os.path.join(cfg.run_dir, "config"))
        data.vocab.save(os.path.join(cfg.run_dir, "vocab"))

        family = cfg.family()
        step = 0
        best_val = float("inf")
        best_step = -1
        best_tag = None
        bad_epochs = 0
        history = []
        for epoch in range(cfg.max_epochs):
            for items in batch_iterator(data.train, cfg.batch_size,
                                        seed=cfg.seed * 100003 + epoch,
                                        drop_last=cfg.drop_last):
                batch = build_batch(family, items, window=cfg.context_window)
                lb = compute_loss(cfg, model, batch, noise, step)
                model.zero_grad()
                lb.total.backward()
                clip_global_norm(opt.params, cfg.grad_clip)
                opt.step()
                step += 1
                if step % cfg.log_every == 0 or step == 1:
                    rec = {"kind": "step", "step": step, "epoch": epoch}
                    rec.update(lb.to_record())
                    log_f.write(json.dumps(rec) + "\n")
            val = validation_objective(cfg, model, data.valid, step)
            report = evaluate_split(cfg, model, data.valid,
                                    data.valid_labels, "valid")
            rec = {"kind": "validation", "step": step, "epoch": epoch,
                   "objective": val}
            rec.update(report.to_dict())
            log_f.write(json.dumps(rec) + "\n")
            log_f.flush()
            history.append(rec)
            log(f"epoch {epoch}: val objective {val:.4f} ppl {report.ppl:.2f} "
                f"mi {report.mi:.3f}")
            if val < best_val - 1e-9:
                best_val = val
                best_step = step
                best_tag = save_checkpoint(cfg.run_dir, model, opt, step, val)
                mark_best(cfg.run_dir, best_tag)
                bad_epochs = 0
            else:
                bad_epochs += 1
                if bad_epochs >= cfg.patience:
                    break
        if best_tag is None:
            best_tag = save_checkpoint(cfg.run_dir, model, opt, step, best_val)
            mark_best(cfg.run_dir, best_tag)
        restore_model(model, load_checkpoint_arrays(cfg.run_dir, "best"))
        report = evaluate_split(cfg, model, data.test,
                                data.test_labels, "test")
        rec = {"kind": "test", "step": best_step}
        rec.update(report.to_dict())
        log_f.write(json.dumps(rec) + "\n")
        with open(os.path.join(cfg.run_dir, "metrics.json"), "w",
                  encoding="utf-8") as f:
            f.write(report.to_json() + "\n")
        return TrainResult(cfg, model, data.vocab, data, best_val, best_step,
                           report, history)
    finally:
        log_f.close()


# -- sweeps -------------------------------------------------------------------

def sweep_batch_size(cfg, sizes, data=None):
    """One training per batch size, all else identical. Rows ordered by N."""
    rows = []
    for n in sorted(sizes):
        sub = dataclasses.replace(cfg, batch_size=int(n),
                                  run_dir=os.path.join(cfg.run_dir, f"N{n}"))
        res = train(sub, data=data)
        rows.append({"N": int(n), "ppl": res.report.ppl, "mi": res.report.mi,
                     "marginal_kl": res.report.marginal_kl})
    return rows


def sweep_latent_shape(cfg, shapes, data=None):
    """One training per (K, M) latent shape under a fixed K**M budget."""
    rows = []
    for K, M in shapes:
        sub = dataclasses.replace(cfg, K=int(K), M=int(M),
                                  run_dir=os.path.join(cfg.run_dir, f"K{K}M{M}"))
        res = train(sub, data=data)
        rows.append({"K": int(K), "M": int(M), "ppl": res.report.ppl,
                     "mi": res.report.mi,
                     "marginal_kl": res.report.marginal_kl})
    return rows


def budget_shapes(budget=1000):
    """The latent shapes compared at a fixed code budget."""
    return [(1000, 1), (10, 3), (4, 5)]


def sweep_table(rows):
    keys = list(rows[0].keys())
    head = "  ".join(f"{k:>12}" for k in keys)
    lines = [head]
    for row in rows:
        lines.append("  ".join(
            f"{row[k]:>12.4g}" if isinstance(row[k], float) else f"{row[k]:>12}"
            for k in keys))
    return "\n".join(lines)
