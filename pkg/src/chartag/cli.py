"""Command-line interface: train, tag, eval, gradcheck, coverage.

Configuration is layered: built-in defaults, then ``--config`` file entries
(flat ``key=value`` lines, ``#`` comments), then explicit flags.  The
effective configuration is echoed as comments into the metrics CSV.
"""

from __future__ import annotations

import argparse
import os
import sys

from .checkpoint import load_checkpoint, restore_network, save_checkpoint
from .data import (CorpusError, Sentence, coverage_report, load_corpus,
                   load_embeddings)
from .encoders import KINDS, EncoderConfig
from .evaluation import error_rate, report_table
from .model import ModelConfig
from .training import TrainConfig, gradcheck_model, train_model

_INT = "int"
_FLOAT = "float"
_BOOL = "bool"
_STR = "str"
_INTS = "int_tuple"

_ENCODER_KEYS = {
    "kind": _STR, "char_dim": _INT, "dnn_hidden": _INT, "max_word_len": _INT,
    "conv_layers": _INT, "conv_filters": _INT, "conv_width": _INT,
    "highway_widths": _INTS, "highway_filters": _INTS, "highway_layers": _INT,
    "lstm_sizes": _INTS, "blstm_sizes": _INTS, "word_dim": _INT,
    "pretrained_mode": _STR,
}
_MODEL_KEYS = {
    "context_layers": _INT, "context_hidden": _INT, "skip_connections": _BOOL,
    "tagset": _STR, "keep_prob": _FLOAT, "recurrent_dropout": _STR,
}
_TRAIN_KEYS = {
    "base_lr": _FLOAT, "rms_decay": _FLOAT, "rms_eps": _FLOAT,
    "batch_size": _INT, "lr_halving_period": _INT, "max_epochs": _INT,
    "patience": _INT, "grad_clip_norm": _FLOAT, "seed": _INT,
}
_EXTRA_KEYS = {"embeddings": _STR}


def _coerce(key, raw):
    for table in (_ENCODER_KEYS, _MODEL_KEYS, _TRAIN_KEYS, _EXTRA_KEYS):
        if key in table:
            kind = table[key]
            break
    else:
        raise ValueError(f"unknown configuration key {key!r}")
    if kind == _INT:
        return int(raw)
    if kind == _FLOAT:
        return float(raw)
    if kind == _BOOL:
        low = str(raw).strip().lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"cannot parse boolean {raw!r} for {key}")
    if kind == _INTS:
        return tuple(int(v) for v in str(raw).split(",") if v != "")
    return str(raw)


def parse_config_file(path):
    values = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected key=value")
            key, _, raw = line.partition("=")
            values[key.strip()] = _coerce(key.strip(), raw.strip())
    return values


def build_configs(overrides, pretrained_dim=None):
    enc_kwargs = {k: v for k, v in overrides.items() if k in _ENCODER_KEYS}
    model_kwargs = {k: v for k, v in overrides.items() if k in _MODEL_KEYS}
    train_kwargs = {k: v for k, v in overrides.items() if k in _TRAIN_KEYS}
    if pretrained_dim is not None:
        enc_kwargs["pretrained_dim"] = pretrained_dim
    model = ModelConfig(encoder=EncoderConfig(**enc_kwargs), **model_kwargs)
    train = TrainConfig(**train_kwargs)
    return model, train


def _collect_overrides(args):
    overrides = {}
    if args.config:
        overrides.update(parse_config_file(args.config))
    for key, attr in (("kind", "encoder"), ("tagset", "tagset"),
                      ("seed", "seed"), ("conv_layers", "conv_layers"),
                      ("batch_size", "batch_size"), ("base_lr", "lr"),
                      ("keep_prob", "keep_prob"), ("max_epochs", "max_epochs"),
                      ("patience", "patience"),
                      ("pretrained_mode", "pretrained_mode"),
                      ("embeddings", "embeddings")):
        value = getattr(args, attr, None)
        if value is not None:
            overrides[key] = value
    if getattr(args, "skip_connections", False):
        overrides["skip_connections"] = True
    for item in getattr(args, "set", None) or []:
        if "=" not in item:
            raise ValueError(f"--set expects key=value, got {item!r}")
        key, _, raw = item.partition("=")
        overrides[key] = _coerce(key, raw)
    return overrides


def cmd_train(args):
    overrides = _collect_overrides(args)
    embeddings_path = overrides.pop("embeddings", None)
    mode = overrides.get("pretrained_mode", "none")
    pretrained = None
    if mode != "none":
        if not embeddings_path:
            print("error: pretrained_mode set but no --embeddings file",
                  file=sys.stderr)
            return 2
        pretrained = load_embeddings(embeddings_path, mode)
    model_config, train_config = build_configs(
        overrides, pretrained_dim=None if pretrained is None else pretrained.dim)

    train_sents = load_corpus(args.train, model_config.tagset)
    dev_sents = load_corpus(args.dev, model_config.tagset)
    os.makedirs(args.out, exist_ok=True)
    metrics_path = args.metrics or os.path.join(args.out, "metrics.csv")

    network, result = train_model(model_config, train_config, train_sents,
                                  dev_sents, pretrained=pretrained,
                                  log_path=metrics_path, verbose=not args.quiet)
    if result.diverged:
        print("error: training diverged (non-finite loss); best checkpoint "
              "saved from the last good epoch", file=sys.stderr)
        if result.best_epoch >= 0:
            save_checkpoint(args.out, network, train_config)
        return 3
    save_checkpoint(args.out, network, train_config)
    print(f"best dev error {result.best_dev_error:.2f}% at epoch "
          f"{result.best_epoch}; checkpoint in {args.out}")
    return 0


def cmd_tag(args):
    network = restore_network(load_checkpoint(args.model))
    with open(args.input, encoding="utf-8") as fh:
        raw_lines = [line.rstrip("\n") for line in fh]
    token_lines = [line.split() for line in raw_lines if line.split()]
    predictions = (network.predict_strings(token_lines, batch_size=args.batch_size)
                   if token_lines else [])
    with open(args.output, "w", encoding="utf-8") as fh:
        for tokens, tags in zip(token_lines, predictions):
            for token, tag in zip(tokens, tags):
                fh.write(f"{token}\t{tag}\n")
            fh.write("\n")
    return 0


def cmd_eval(args):
    loaded = load_checkpoint(args.model)
    if args.tagset and args.tagset != loaded.model_config.tagset:
        print(f"error: checkpoint was trained on tag set "
              f"{loaded.model_config.tagset!r}, not {args.tagset!r}",
              file=sys.stderr)
        return 2
    network = restore_network(loaded)
    tagset = loaded.model_config.tagset
    test = load_corpus(args.test, tagset)
    preds = network.predict(test, batch_size=args.batch_size)
    report = error_rate(preds, [s.tags for s in test], network.vocabs.tags, tagset)
    text, csv = report_table([report])
    print(text, end="")
    if args.csv:
        with open(args.csv, "w", encoding="utf-8") as fh:
            fh.write(csv)
    return 0


def toy_model_config(kind, skip_connections):
    """Small but structurally complete config for gradient checking."""
    encoder = EncoderConfig(
        kind=kind, char_dim=4 if kind == "cnnhighway" else 5,
        dnn_hidden=7, max_word_len=6, conv_layers=2, conv_filters=6,
        conv_width=3, highway_widths=(1, 2, 3), highway_filters=(3, 4, 5),
        highway_layers=2, lstm_sizes=(7, 5), blstm_sizes=(6, 5), word_dim=5)
    return ModelConfig(encoder=encoder, context_layers=2, context_hidden=6,
                       skip_connections=skip_connections, tagset="pos",
                       keep_prob=1.0)


def toy_batch_sentences():
    return [Sentence(["aba", "cd"], ["T1", "T2"]),
            Sentence(["dcba", "e", "aa"], ["T2", "T1", "T3"])]


def cmd_gradcheck(args):
    kinds = list(KINDS) if args.encoder == "all" else [args.encoder]
    sentences = toy_batch_sentences()
    failed = False
    for kind in kinds:
        for skip in (False, True):
            config = toy_model_config(kind, skip)
            max_err, details = gradcheck_model(config, sentences, eps=args.eps,
                                               seed=args.seed)
            status = "ok" if max_err < args.threshold else "FAIL"
            label = f"{kind}{'+skip' if skip else ''}"
            print(f"{label:<18} max_rel_err {max_err:.3e}  {status}")
            if max_err >= args.threshold:
                failed = True
                worst = max(details, key=details.get)
                print(f"  worst parameter: {worst} ({details[worst]:.3e})")
    return 1 if failed else 0


def cmd_coverage(args):
    train = load_corpus(args.train, "pos")
    test = load_corpus(args.test, "pos")
    report = coverage_report(train, test)
    print(f"unseen      {100 * report.unseen:.1f}%")
    print(f"1-4 occ.    {100 * report.rare:.1f}%")
    print(f">=5 occ.    {100 * report.frequent:.1f}%")
    if args.csv:
        with open(args.csv, "w", encoding="utf-8") as fh:
            fh.write(report.as_csv())
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="chartag",
        description="Character-based neural morphological tagger")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a tagger")
    p.add_argument("--train", required=True, help="training corpus (TSV)")
    p.add_argument("--dev", required=True, help="development corpus (TSV)")
    p.add_argument("--out", required=True, help="checkpoint output directory")
    p.add_argument("--tagset", choices=("pos", "morph", "posmorph"))
    p.add_argument("--encoder", choices=KINDS)
    p.add_argument("--config", help="key=value configuration file")
    p.add_argument("--seed", type=int)
    p.add_argument("--conv-layers", type=int, dest="conv_layers")
    p.add_argument("--skip-connections", action="store_true",
                   dest="skip_connections")
    p.add_argument("--batch-size", type=int, dest="batch_size")
    p.add_argument("--lr", type=float)
    p.add_argument("--keep-prob", type=float, dest="keep_prob")
    p.add_argument("--max-epochs", type=int, dest="max_epochs")
    p.add_argument("--patience", type=int)
    p.add_argument("--embeddings", help="word2vec text file")
    p.add_argument("--pretrained-mode", choices=("fixed", "finetuned"),
                   dest="pretrained_mode")
    p.add_argument("--set", action="append", metavar="KEY=VALUE",
                   help="override any configuration key")
    p.add_argument("--metrics", help="metrics CSV path (default OUT/metrics.csv)")
    p.add_argument("--quiet", action="store_true")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("tag", help="tag plain text (one sentence per line)")
    p.add_argument("--model", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--batch-size", type=int, default=16, dest="batch_size")
    p.set_defaults(func=cmd_tag)

    p = sub.add_parser("eval", help="score a tagged corpus")
    p.add_argument("--model", required=True)
    p.add_argument("--test", required=True)
    p.add_argument("--tagset", choices=("pos", "morph", "posmorph"))
    p.add_argument("--csv", help="also write the report as CSV")
    p.add_argument("--batch-size", type=int, default=16, dest="batch_size")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("gradcheck", help="finite-difference gradient check")
    p.add_argument("--encoder", choices=KINDS + ("all",), default="all")
    p.add_argument("--eps", type=float, default=1e-4)
    p.add_argument("--threshold", type=float, default=1e-3)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("coverage", help="training-occurrence coverage of a test set")
    p.add_argument("--train", required=True)
    p.add_argument("--test", required=True)
    p.add_argument("--csv", help="also write the report as CSV")
    p.set_defaults(func=cmd_coverage)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (CorpusError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
