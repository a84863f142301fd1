"""Command-line entry point.

Subcommands: train, eval, interpret, interpolate, generate, sweep. Exit
codes: 0 ok, 2 config error, 3 data error, 4 training/runtime failure.
Every config key is exposed as a long-form --snake_case flag on train
and sweep; precedence is defaults < --config file < flags.
"""

import argparse
import dataclasses
import json
import os
import sys

import numpy as np

from . import corpus as corpus_mod
from . import interpretation, laed, training
from . import latent as lat
from .training import ConfigError, DataError, ModelConfig

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_RUNTIME = 4


def _add_config_flags(sub):
    for fld in dataclasses.fields(ModelConfig):
        sub.add_argument(f"--{fld.name}", default=None, metavar="V",
                         help=f"config key (default: {fld.default})")


def _gather_config(args):
    """defaults < config file < explicit flags; returns (cfg, explicit keys)."""
    items = {}
    if args.config:
        items.update(training.parse_config_file(args.config))
    for fld in dataclasses.fields(ModelConfig):
        val = getattr(args, fld.name, None)
        if val is not None:
            items[fld.name] = val
    cfg = training.config_from_items(items)
    training.validate_config(cfg, explicit=tuple(items))
    return cfg


def _load_run(run_dir, which="best"):
    return training.load_run(run_dir, which=which)


def cmd_train(args):
    cfg = _gather_config(args)
    res = training.train(cfg, quiet=args.quiet)
    print(res.report.text_table())
    print(f"run directory: {cfg.run_dir}")
    return EXIT_OK


def cmd_eval(args):
    cfg, vocab, model = _load_run(args.run)
    data = training.load_data(cfg, vocab=vocab)
    items = {"train": data.train, "valid": data.valid, "test": data.test}
    labels = {"train": data.train_labels, "valid": data.valid_labels,
              "test": data.test_labels}
    if args.split not in items:
        raise ConfigError(f"unknown split '{args.split}'")
    report = training.evaluate_split(cfg, model, items[args.split],
                                     labels[args.split], args.split)
    print(report.text_table())
    out = os.path.join(args.run, f"metrics-{args.split}.json")
    with open(out, "w", encoding="utf-8") as f:
        f.write(report.to_json() + "\n")
    print(f"wrote {out}")
    return EXIT_OK


def cmd_interpret(args):
    files = interpretation.emit_report(args.run,
                                       samples_per_action=args.samples)
    table_path = os.path.join(args.run, "report", "action_table.txt")
    with open(table_path, encoding="utf-8") as f:
        print(f.read(), end="")
    for path in files:
        print(f"wrote {path}")
    return EXIT_OK


def cmd_interpolate(args):
    cfg, vocab, model = _load_run(args.run)
    x1 = vocab.encode(corpus_mod.whitespace_tokenize(args.src))
    x2 = vocab.encode(corpus_mod.whitespace_tokenize(args.dst))
    if not x1 or not x2:
        raise DataError("interpolation endpoints must be non-empty")
    path = interpretation.interpolate(model, x1, x2, vocab,
                                      max_len=cfg.max_gen_len)
    print(interpretation.interpolation_text(path), end="")
    return EXIT_OK


def _read_contexts(path, vocab):
    """One context per line: a JSON array of utterance strings, or plain
    text treated as a single-turn context."""
    contexts = []
    try:
        with open(path, encoding="utf-8") as f:
            lines = f.readlines()
    except OSError as e:
        raise DataError(f"cannot read context file {path}: {e}") from None
    for lineno, line in enumerate(lines, start=1):
        line = line.strip()
        if not line:
            continue
        if line.startswith("["):
            try:
                turns = json.loads(line)
            except json.JSONDecodeError as e:
                raise DataError(f"{path}:{lineno}: bad JSON context: {e}") \
                    from None
            if (not isinstance(turns, list) or not turns
                    or not all(isinstance(t, str) for t in turns)):
                raise DataError(f"{path}:{lineno}: context must be a "
                                "non-empty array of strings")
        else:
            turns = [line]
        contexts.append([vocab.encode(corpus_mod.whitespace_tokenize(t))
                         for t in turns])
    if not contexts:
        raise DataError(f"no contexts in {path}")
    return contexts


def cmd_generate(args):
    cfg, vocab, model = _load_run(args.run)
    if cfg.family() != "laed":
        raise ConfigError("generate needs a dialog-generation run")
    contexts = [c[-cfg.context_window:]
                for c in _read_contexts(args.context, vocab)]
    forced = None
    mode = "policy-argmax"
    if args.action:
        try:
            forced = lat.parse_assignment(args.action)
        except ValueError as e:
            raise ConfigError(f"bad --action: {e}") from None
        if len(forced) != cfg.M:
            raise ConfigError(f"--action needs {cfg.M} values, "
                              f"got {len(forced)}")
        if any(v < 0 or v >= cfg.K for v in forced):
            raise ConfigError(f"--action values must lie in [0, {cfg.K})")
        mode = "forced-code"
    recs = laed.generate(model, contexts, mode, forced=forced,
                         max_len=cfg.max_gen_len)
    for rec in recs:
        print(json.dumps({
            "action": lat.assignment_string(rec["codes"]),
            "response": " ".join(vocab.decode(rec["tokens"])),
        }))
    return EXIT_OK


def cmd_sweep(args):
    cfg = _gather_config(args)
    if args.kind == "batch":
        rows = training.sweep_batch_size(cfg, sizes=(2, 5, 10, 30))
    elif args.kind == "shape":
        rows = training.sweep_latent_shape(cfg, training.budget_shapes())
    else:
        raise ConfigError(f"unknown sweep kind '{args.kind}'")
    text = training.sweep_table(rows)
    print(text)
    os.makedirs(cfg.run_dir, exist_ok=True)
    with open(os.path.join(cfg.run_dir, "sweep.json"), "w",
              encoding="utf-8") as f:
        json.dump(rows, f, indent=2, sort_keys=True)
        f.write("\n")
    with open(os.path.join(cfg.run_dir, "sweep.txt"), "w",
              encoding="utf-8") as f:
        f.write(text + "\n")
    print(f"wrote {cfg.run_dir}/sweep.json")
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(
        prog="latact",
        description="Discrete latent-action sentence representations "
                    "and interpretable dialog generation.")
    subs = parser.add_subparsers(dest="command", required=True)

    p = subs.add_parser("train", help="train one model variant")
    p.add_argument("--config", default=None, help="flat key=value file")
    p.add_argument("--quiet", action="store_true",
                   help="suppress per-epoch progress lines")
    _add_config_flags(p)
    p.set_defaults(fn=cmd_train)

    p = subs.add_parser("eval", help="re-evaluate a finished run")
    p.add_argument("--run", required=True, help="run directory")
    p.add_argument("--split", default="test",
                   choices=("train", "valid", "test"))
    p.set_defaults(fn=cmd_eval)

    p = subs.add_parser("interpret",
                        help="emit the action table and report bundle")
    p.add_argument("--run", required=True)
    p.add_argument("--samples", type=int, default=5,
                   help="utterances sampled per action")
    p.set_defaults(fn=cmd_interpret)

    p = subs.add_parser("interpolate",
                        help="walk the code space between two sentences")
    p.add_argument("--run", required=True)
    p.add_argument("--from", dest="src", required=True, metavar="TEXT")
    p.add_argument("--to", dest="dst", required=True, metavar="TEXT")
    p.set_defaults(fn=cmd_interpolate)

    p = subs.add_parser("generate", help="decode responses for contexts")
    p.add_argument("--run", required=True)
    p.add_argument("--context", required=True,
                   help="file with one context per line")
    p.add_argument("--action", default=None, metavar="CODE",
                   help="force this latent action, e.g. 1-4-2")
    p.set_defaults(fn=cmd_generate)

    p = subs.add_parser("sweep", help="batch-size or latent-shape sweep")
    p.add_argument("--kind", required=True, choices=("batch", "shape"))
    p.add_argument("--config", default=None)
    _add_config_flags(p)
    p.set_defaults(fn=cmd_sweep)
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        # argparse exits 2 on bad flags, matching the config-error code
        return int(e.code or 0)
    try:
        return args.fn(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as e:
        print(f"data error: {e}", file=sys.stderr)
        return EXIT_DATA
    except Exception as e:  # noqa: BLE001 - CLI boundary
        print(f"error: {e}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
