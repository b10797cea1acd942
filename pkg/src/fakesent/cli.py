"""Command-line interface: the pipeline as subcommands.

    gen-fakes   corrupt a corpus into a labeled real/fake dataset
    train       train the encoder + classifier on a labeled dataset
    encode      dump encodings for a corpus with a trained model
    evaluate    accuracy and per-class metrics on a labeled dataset
    probe       logistic-regression probing of a frozen encoder
    gradcheck   finite-difference check of the full model gradient

Configuration: every value can come from a key=value config file
(``--config``); explicit flags win over the file, the file wins over
defaults. Each run with a file output writes its fully resolved config
next to that output as ``<output>.config`` (with the tool version in a
comment), and resolving that file again reproduces the same settings.

Exit codes: 0 success, 2 usage or config error, 3 data error,
4 numerical error. Failures print one line: ``<category>: <message>``.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from . import __version__
from . import checkpoint as ckpt
from . import classifier as cl
from . import fakegen as fg
from . import numcore as nc
from . import probe as pb
from .corpus import (
    Sentence,
    build_vocab,
    init_embeddings,
    load_corpus,
    load_embeddings,
)
from .encoder import SentenceEncoder
from .errors import ConfigParseError, DataError, NumericalError


def _bool(text: str) -> bool:
    if text.lower() in ("true", "1", "yes"):
        return True
    if text.lower() in ("false", "0", "no"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


# key -> (parser, default); None default means optional unless listed in REQUIRED
SCHEMAS = {
    "gen-fakes": {
        "strategy": (str, None),
        "fakes_per_real": (int, 1),
        "seed": (int, None),
        "in": (str, None),
        "out": (str, None),
    },
    "train": {
        "data": (str, None),
        "valid": (str, None),
        "embeddings": (str, None),
        "dim": (int, 300),
        "emb_scale": (float, 1.0),
        "min_count": (int, 1),
        "hidden": (int, 2048),
        "mlp": (str, "1024,512"),
        "epochs": (int, 15),
        "batch": (int, 64),
        "lr": (float, 0.1),
        "lr_decay": (float, 0.5),
        "precision": (str, "float32"),
        "freeze_embeddings": (_bool, False),
        "seed": (int, None),
        "out": (str, None),
        "metrics": (str, None),
    },
    "encode": {
        "model": (str, None),
        "in": (str, None),
        "out": (str, None),
        "batch": (int, 64),
    },
    "evaluate": {
        "model": (str, None),
        "data": (str, None),
        "report": (str, None),
        "batch": (int, 64),
    },
    "probe": {
        "model": (str, None),
        "corpus": (str, None),
        "tasks": (str, "sentlen,wc,bshift"),
        "seed": (int, 0),
        "report": (str, None),
        "l2_grid": (str, "1e-4,1e-3,1e-2,1e-1,1"),
        "max_iter": (int, 300),
        "tol": (float, 1e-5),
    },
    "gradcheck": {
        "h": (int, 8),
        "d": (int, 8),
        "vocab": (int, 50),
        "batch": (int, 4),
        "min_len": (int, 2),
        "max_len": (int, 6),
        "samples": (int, 200),
        "eps": (float, 1e-5),
        "seed": (int, 1),
        "threshold": (float, 1e-4),
    },
}

REQUIRED = {
    "gen-fakes": ("strategy", "seed", "in", "out"),
    "train": ("data", "valid", "seed", "out"),
    "encode": ("model", "in", "out"),
    "evaluate": ("model", "data"),
    "probe": ("model", "corpus", "report"),
    "gradcheck": (),
}


def parse_config_file(path) -> dict[str, str]:
    values = {}
    try:
        with open(path, encoding="utf-8") as f:
            for lineno, line in enumerate(f):
                line = line.strip()
                if not line or line.startswith("#"):
                    continue
                if "=" not in line:
                    raise ConfigParseError(f"{path}:{lineno + 1}: expected key=value")
                key, _, value = line.partition("=")
                values[key.strip()] = value.strip()
    except OSError as e:
        raise ConfigParseError(f"cannot read config {path}: {e}")
    return values


def resolve_config(command: str, config_path, flags: dict) -> dict:
    """Merge defaults, config-file values, and flags (highest precedence)."""
    schema = SCHEMAS[command]
    file_values = parse_config_file(config_path) if config_path else {}
    unknown = set(file_values) - set(schema)
    if unknown:
        raise ConfigParseError(f"unknown config keys for {command}: {sorted(unknown)}")
    resolved = {}
    for key, (parse, default) in schema.items():
        flag_value = flags.get(key)
        if flag_value is not None:
            resolved[key] = flag_value
        elif key in file_values:
            try:
                resolved[key] = parse(file_values[key])
            except ValueError as e:
                raise ConfigParseError(f"config key {key}: {e}")
        else:
            resolved[key] = default
    return resolved


def _format_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    return repr(value) if isinstance(value, float) else str(value)


def write_resolved_config(path, resolved: dict) -> None:
    with open(path, "w", encoding="utf-8") as f:
        f.write(f"# fakesent {__version__}\n")
        for key in sorted(resolved):
            if resolved[key] is not None:
                f.write(f"{key}={_format_value(resolved[key])}\n")


def _require(parser, command, resolved):
    for key in REQUIRED[command]:
        if resolved.get(key) is None:
            parser.error(f"{command}: --{key.replace('_', '-')} is required")


def _parse_mlp(text: str) -> tuple[int, int]:
    try:
        h1, h2 = (int(v) for v in text.split(","))
    except ValueError:
        raise ConfigParseError(f"--mlp expects two comma-separated widths, got {text!r}")
    return h1, h2


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def cmd_gen_fakes(cfg) -> int:
    if cfg["strategy"] not in fg.STRATEGIES:
        raise ConfigParseError(f"--strategy must be one of {fg.STRATEGIES}")
    corpus = load_corpus(cfg["in"])
    data = fg.build_dataset(corpus, cfg["strategy"], cfg["fakes_per_real"], cfg["seed"])
    fg.write_dataset(cfg["out"], data)
    write_resolved_config(cfg["out"] + ".config", cfg)
    reals = sum(1 for ex in data if ex.label == fg.REAL)
    print(json.dumps({"examples": len(data), "real": reals, "fake": len(data) - reals}))
    return 0


def cmd_train(cfg) -> int:
    train_data = fg.load_dataset(cfg["data"])
    valid_data = fg.load_dataset(cfg["valid"])
    vocab = build_vocab((ex.sentence for ex in train_data), min_count=cfg["min_count"])
    rng = np.random.default_rng(cfg["seed"])
    dtype = np.float32 if cfg["precision"] == "float32" else np.float64
    if cfg["embeddings"]:
        table = load_embeddings(cfg["embeddings"], vocab, rng, dtype=dtype)
    else:
        table = init_embeddings(vocab, cfg["dim"], rng, dtype=dtype, scale=cfg["emb_scale"])
    encoder = SentenceEncoder.create(vocab, table, cfg["hidden"], rng)
    h1, h2 = _parse_mlp(cfg["mlp"])
    model = cl.DetectorModel.create(encoder, h1, h2, rng)
    train_cfg = cl.TrainConfig(
        batch_size=cfg["batch"],
        epochs=cfg["epochs"],
        learning_rate=cfg["lr"],
        lr_decay_factor=cfg["lr_decay"],
        seed=cfg["seed"],
        precision=cfg["precision"],
        freeze_embeddings=cfg["freeze_embeddings"],
    )
    metrics_path = cfg["metrics"] or cfg["out"] + ".metrics.jsonl"
    resolved = dict(cfg)
    resolved["metrics"] = str(metrics_path)
    write_resolved_config(cfg["out"] + ".config", resolved)
    report = cl.train(model, train_data, valid_data, train_cfg, cfg["out"], metrics_path)
    print(
        json.dumps(
            {
                "best_epoch": report.best_epoch,
                "best_valid_accuracy": report.best_valid_accuracy,
                "checkpoint": report.checkpoint_path,
                "metrics": str(metrics_path),
            }
        )
    )
    return 0


def cmd_encode(cfg) -> int:
    model = ckpt.load_model(cfg["model"])
    corpus = load_corpus(cfg["in"])
    vectors = model.encoder.encode_batch(corpus, batch_size=cfg["batch"])
    with open(cfg["out"], "w", encoding="utf-8") as f:
        for sent, vec in zip(corpus, vectors):
            values = " ".join(np.format_float_positional(v, unique=True, trim="-") for v in vec)
            f.write(f"{sent.id} {values}\n")
    write_resolved_config(cfg["out"] + ".config", cfg)
    print(json.dumps({"sentences": len(corpus), "dim": int(vectors.shape[1])}))
    return 0


def cmd_evaluate(cfg) -> int:
    model = ckpt.load_model(cfg["model"])
    data = fg.load_dataset(cfg["data"])
    metrics = cl.evaluate(model, data, batch_size=cfg["batch"])
    payload = {
        "accuracy": metrics.accuracy,
        "count": metrics.count,
        "per_class": {
            name: {"precision": m.precision, "recall": m.recall, "support": m.support}
            for name, m in metrics.per_class.items()
        },
    }
    text = json.dumps(payload, sort_keys=True)
    if cfg["report"]:
        with open(cfg["report"], "w", encoding="utf-8") as f:
            f.write(text + "\n")
        write_resolved_config(cfg["report"] + ".config", cfg)
    print(text)
    return 0


def cmd_probe(cfg) -> int:
    model = ckpt.load_model(cfg["model"])
    corpus = load_corpus(cfg["corpus"])
    tasks = [t.strip() for t in cfg["tasks"].split(",") if t.strip()]
    for t in tasks:
        if t not in pb.TASKS:
            raise ConfigParseError(f"unknown probing task {t!r}; choose from {pb.TASKS}")
    try:
        grid = tuple(float(v) for v in cfg["l2_grid"].split(","))
    except ValueError:
        raise ConfigParseError(f"--l2-grid must be comma-separated floats, got {cfg['l2_grid']!r}")
    probe_cfg = pb.ProbeConfig(l2_grid=grid, max_iterations=cfg["max_iter"], tolerance=cfg["tol"])
    results = pb.run_probes(model.encoder, corpus, tasks, seed=cfg["seed"], cfg=probe_cfg)
    payload = {task: r.to_dict() for task, r in results.items()}
    text = json.dumps(payload, sort_keys=True)
    with open(cfg["report"], "w", encoding="utf-8") as f:
        f.write(text + "\n")
    write_resolved_config(cfg["report"] + ".config", cfg)
    print(text)
    return 0


def cmd_gradcheck(cfg) -> int:
    rng = np.random.default_rng(cfg["seed"])
    tokens = [f"t{i:03d}" for i in range(cfg["vocab"])]
    vocab = build_vocab([Sentence(tuple(tokens), "v")])
    table = init_embeddings(vocab, cfg["d"], rng, dtype=np.float64)
    encoder = SentenceEncoder.create(vocab, table, cfg["h"], rng)
    model = cl.DetectorModel.create(encoder, 2 * cfg["h"], cfg["h"], rng)
    sentences = []
    for i in range(cfg["batch"]):
        n = int(rng.integers(cfg["min_len"], cfg["max_len"] + 1))
        toks = tuple(tokens[int(k)] for k in rng.integers(0, len(tokens), size=n))
        sentences.append(Sentence(toks, str(i)))
    idx, lengths = encoder.prepare_batch(sentences)
    labels = rng.integers(0, 2, size=cfg["batch"])

    def loss_fn(tape):
        loss, _ = model.batch_loss(tape, idx, lengths, labels)
        return loss

    err = nc.grad_check(
        loss_fn,
        model.all_parameters(),
        eps=cfg["eps"],
        samples=cfg["samples"],
        rng=np.random.default_rng(cfg["seed"]),
    )
    print(f"max relative error {err:.6e}")
    if err < cfg["threshold"]:
        return 0
    print(f"numerical-error: gradient check failed at threshold {cfg['threshold']}", file=sys.stderr)
    return 4


COMMANDS = {
    "gen-fakes": cmd_gen_fakes,
    "train": cmd_train,
    "encode": cmd_encode,
    "evaluate": cmd_evaluate,
    "probe": cmd_probe,
    "gradcheck": cmd_gradcheck,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fakesent",
        description="Train and probe sentence encoders on fake-sentence detection.",
    )
    parser.add_argument("--version", action="version", version=f"fakesent {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for command, schema in SCHEMAS.items():
        p = sub.add_parser(command)
        p.add_argument("--config", default=None, help="key=value config file")
        for key, (parse, default) in schema.items():
            flag = "--" + key.replace("_", "-")
            if parse is _bool:
                p.add_argument(flag, dest=key, action="store_const", const=True, default=None)
            else:
                p.add_argument(flag, dest=key, type=parse, default=None,
                               help=f"default: {default}" if default is not None else None)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    flags = {k: v for k, v in vars(args).items() if k not in ("command", "config")}
    try:
        resolved = resolve_config(args.command, args.config, flags)
        _require(parser, args.command, resolved)
        return COMMANDS[args.command](resolved)
    except ConfigParseError as e:
        print(f"usage-error: {e}", file=sys.stderr)
        return 2
    except DataError as e:
        print(f"data-error: {e}", file=sys.stderr)
        return 3
    except NumericalError as e:
        print(f"numerical-error: {e}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
