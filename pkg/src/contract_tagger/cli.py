"""Command-line entry point: synth | train | tune | evaluate | predict | stats | wfr.

Exit codes: 0 success, 1 internal or numeric failure, 2 usage / IO / data error.
"""

from __future__ import annotations

import argparse
import json
import logging
import statistics
import sys
from pathlib import Path

from . import tensor as tc
from .data import DatasetError, atomic_write, dataset_stats, read_dataset, read_untagged, spans_from_tags
from .encoders import EncoderConfig
from .metrics import entity_prf
from .model import FeatureConfig, Model, TrainConfig
from .synthetic import SyntheticSpec, write_synthetic
from .training import (CrossValObjective, SearchSpace, TrainingDiverged, evaluate_model,
                       monte_carlo_splits, random_search, train)
from .wordpiece import SubwordVocab, word_fragmentation_ratio


class UsageError(Exception):
    pass


def _existing(path: str | None, what: str) -> Path:
    if not path:
        raise UsageError(f"missing required {what} path")
    p = Path(path)
    if not p.exists():
        raise UsageError(f"{what} path does not exist: {p}")
    return p


def _load_config(args) -> TrainConfig:
    raw = {}
    if getattr(args, "config", None):
        raw = json.loads(_existing(args.config, "config").read_text(encoding="utf-8"))
    enc = dict(raw.pop("encoder", {}))
    feats = dict(raw.pop("features", {}))
    if args.encoder:
        enc["kind"] = args.encoder
    if args.features:
        flags = FeatureConfig.from_flag(args.features)
        feats.update(use_pos=flags.use_pos, use_shape=flags.use_shape, use_char=flags.use_char)
    if getattr(args, "epochs", None) is not None:
        raw["max_epochs"] = args.epochs
    if args.no_crf:
        raw["use_crf"] = False
    if args.seed is not None:
        raw["seed"] = args.seed
    return TrainConfig(encoder=EncoderConfig(**enc), features=FeatureConfig(**feats), **raw)


def _dump(path, obj):
    atomic_write(path, json.dumps(obj, indent=1, sort_keys=True) + "\n")


# ----------------------------------------------------------------- commands

def cmd_synth(args) -> int:
    spec = SyntheticSpec(seed=args.seed or 0, n_train=args.n_train, n_dev=args.n_dev, n_test=args.n_test,
                         distance=args.distance, kind=args.kind)
    paths = write_synthetic(spec, args.out)
    for name, p in paths.items():
        print(f"{name}: {p}")
    return 0


def cmd_train(args) -> int:
    data = read_dataset(_existing(args.data, "data"))
    config = _load_config(args)
    if args.dev:
        dev = read_dataset(_existing(args.dev, "dev data"))
        if dev.schema.types != data.schema.types:
            raise UsageError(f"dev schema {list(dev.schema.types)} != train schema {list(data.schema.types)}")
        train_set, dev_set = data, dev
    else:
        tr, dv = monte_carlo_splits(len(data), 1, args.dev_fraction, config.seed)[0]
        train_set, dev_set = data.subset(tr), data.subset(dv)
    test = read_dataset(_existing(args.test, "test data")) if args.test else None

    runs = []
    for r in range(args.runs):
        cfg = TrainConfig.from_dict({**config.to_dict(), "seed": config.seed + r})
        model, hist = train(cfg, train_set, dev_set, data.schema)
        dev_rep = evaluate_model(model, dev_set)
        test_rep = evaluate_model(model, test) if test is not None else None
        runs.append((model, hist, dev_rep, test_rep))
        msg = f"run {r + 1}/{args.runs} seed {cfg.seed}: dev P {dev_rep.macro_precision:.4f} " \
              f"R {dev_rep.macro_recall:.4f} F1 {dev_rep.macro_f1:.4f}"
        if test_rep is not None:
            msg += f" | test F1 {test_rep.macro_f1:.4f}"
        print(msg)

    best = max(range(len(runs)), key=lambda i: (runs[i][2].macro_f1, -i))
    model, hist, _, _ = runs[best]
    out = Path(args.out)
    model.save(out)
    summary = {"history": [r[1].as_dict() for r in runs], "best_run": best,
               "dev": [r[2].as_dict() for r in runs],
               "test": [r[3].as_dict() for r in runs] if test is not None else None}
    _dump(out / "history.json", summary)

    for label, idx in (("dev", 2), ("test", 3)):
        reps = [r[idx] for r in runs if r[idx] is not None]
        if not reps:
            continue
        parts = []
        for name in ("precision", "recall", "f1"):
            vals = [getattr(rep, f"macro_{name}") for rep in reps]
            sd = statistics.stdev(vals) if len(vals) > 1 else 0.0
            parts.append(f"{name[0].upper() if name != 'f1' else 'F1'} {statistics.mean(vals):.4f}±{sd:.4f}")
        print(f"final {label} macro: " + "  ".join(parts))
    print(f"model written to {out}")
    return 0


def cmd_tune(args) -> int:
    data = read_dataset(_existing(args.data, "data"))
    config = _load_config(args)
    objective = CrossValObjective(config, data, args.folds, args.dev_fraction, config.seed)
    result = random_search(SearchSpace(), args.budget, config.seed, objective,
                           log_path=args.out, workers=args.workers)
    for t in result.trials:
        print(json.dumps(t, sort_keys=True))
    print("best:", json.dumps({**result.best, "score": result.best_score}, sort_keys=True))
    return 0


def cmd_evaluate(args) -> int:
    model = Model.load(_existing(args.model, "model"))
    data = read_dataset(_existing(args.data, "data"))
    if tuple(model.schema.types) != tuple(data.schema.types):
        raise UsageError(f"schema mismatch: model tags {list(model.schema.tags)} "
                         f"vs data tags {list(data.schema.tags)}")
    if args.gold_as_pred:
        gold = [spans_from_tags(s.tags) for s in data]
        report = entity_prf(gold, gold, data.schema.types)
    else:
        report = evaluate_model(model, data)
    print(report.table())
    if args.out:
        _dump(args.out, report.as_dict())
    return 0


def cmd_predict(args) -> int:
    model = Model.load(_existing(args.model, "model"))
    seqs = read_untagged(_existing(args.data, "data"))
    lines = []
    for seq, (tags, spans) in zip(seqs, model.extract(seqs) if seqs else []):
        lines.append(json.dumps({"tokens": list(seq.tokens), "tags": tags,
                                 "spans": [{"start": s.start, "end": s.end, "type": s.type} for s in spans]},
                                sort_keys=True))
    text = "".join(line + "\n" for line in lines)
    if args.out:
        atomic_write(args.out, text)
    else:
        sys.stdout.write(text)
    return 0


def cmd_stats(args) -> int:
    data = read_dataset(_existing(args.data, "data"))
    stats = dataset_stats(data).as_dict()
    stats["zone"] = data.zone
    print(json.dumps(stats, indent=1))
    if args.out:
        _dump(args.out, stats)
    return 0


def cmd_wfr(args) -> int:
    vocab = SubwordVocab.from_file(_existing(args.vocab, "subword vocab"), lowercase=args.lowercase)
    data = read_dataset(_existing(args.data, "data"))
    words = [w for s in data for w in s.tokens]
    restrict = None
    if args.entities_only:
        inside = {s.tokens[i] for s in data for sp in spans_from_tags(s.tags) for i in range(sp.start, sp.end)}
        restrict = inside.__contains__
    ratio = word_fragmentation_ratio(words, vocab, restrict=restrict, weighted=args.weighted)
    print(f"{ratio:.4f}")
    return 0


# ------------------------------------------------------------------ parser

def _model_flags(p):
    p.add_argument("--config", help="JSON training config")
    p.add_argument("--encoder", choices=["bilstm", "dcnn", "dilated_cnn", "transformer"])
    p.add_argument("--features", help="word | word+pos+shape | word+pos+shape+char (+char = all)")
    p.add_argument("--no-crf", action="store_true", help="softmax output layer instead of a CRF")
    p.add_argument("--epochs", type=int)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="contract-tagger", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, fn, help_):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--seed", type=int, default=None)
        p.set_defaults(func=fn)
        return p

    p = add("synth", cmd_synth, "write a synthetic train/dev/test corpus")
    p.add_argument("--out", required=True)
    p.add_argument("--kind", choices=["header", "chain"], default="header")
    p.add_argument("--n-train", type=int, default=2000)
    p.add_argument("--n-dev", type=int, default=300)
    p.add_argument("--n-test", type=int, default=500)
    p.add_argument("--distance", type=int, default=2)

    p = add("train", cmd_train, "train a tagger")
    p.add_argument("--data", required=True)
    p.add_argument("--dev")
    p.add_argument("--test")
    p.add_argument("--out", "--model", dest="out", required=True, help="output model directory")
    p.add_argument("--runs", type=int, default=3, help="repeat with consecutive seeds and average")
    p.add_argument("--dev-fraction", type=float, default=0.15)
    _model_flags(p)

    p = add("tune", cmd_tune, "random hyperparameter search with Monte-Carlo CV")
    p.add_argument("--data", required=True)
    p.add_argument("--out", help="trial log (one JSON record per line)")
    p.add_argument("--budget", type=int, default=10)
    p.add_argument("--folds", type=int, default=5)
    p.add_argument("--dev-fraction", type=float, default=0.15)
    p.add_argument("--workers", type=int, default=1)
    _model_flags(p)

    p = add("evaluate", cmd_evaluate, "entity-level P/R/F1 of a model on tagged data")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", help="JSON report path")
    p.add_argument("--gold-as-pred", action="store_true", help="score gold against itself (self-test)")

    p = add("predict", cmd_predict, "tag untagged sequences (JSON lines output)")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out")

    p = add("stats", cmd_stats, "gold span counts per entity type")
    p.add_argument("--data", required=True)
    p.add_argument("--out")

    p = add("wfr", cmd_wfr, "word fragmentation ratio under a subword vocabulary")
    p.add_argument("--data", required=True)
    p.add_argument("--vocab", required=True)
    p.add_argument("--entities-only", action="store_true")
    p.add_argument("--weighted", action="store_true", help="weight words by token frequency")
    p.add_argument("--lowercase", action="store_true")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    logging.captureWarnings(True)
    try:
        return args.func(args)
    except (UsageError, DatasetError, FileNotFoundError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (TrainingDiverged, tc.NonFiniteError) as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return 1
    except (ValueError, TypeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001
        print(f"internal error: {exc!r}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
