"""Command-line entry point.

Subcommands: ``train``, ``evaluate``, ``ablate``, ``sparse``, ``consistency``,
``selftest``. Every result file is written whole-file atomically
(write-to-temp, then rename). ``LC_GNN_THREADS`` caps fan-out parallelism for
``ablate`` and ``sparse``.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import dataclass, field, replace
from pathlib import Path

from .data import Dataset, load_dataset
from .gcn import load_params, save_params
from .metrics import (
    ABLATION_VARIANTS,
    SPARSE_VARIANTS,
    consistency_accuracy_curve,
    curve_to_tsv,
    format_aggregate_table,
    run_ablation,
    run_sparse_experiment,
    spearman_rank_correlation,
)
from .selfcheck import run_all
from .train import TrainConfig, VARIANTS, evaluate_variant, predict_labels, run_experiment

logger = logging.getLogger(__name__)

DEFAULT_LAMBDA = {"cora": 2.0, "citeseer": 1.0, "pubmed": 1.0}
TABLE_LABELS = {"base_only": "GCN*", "no_lc_no_rl": "w/o LC, w/o RL",
                "no_rl": "w/o RL", "full": "LC-GCN"}


class CliError(Exception):
    """Structured usage error: message plus a usage hint."""


@dataclass
class Command:
    subcommand: str
    data: Path | None = None
    out: Path | None = None
    seed: int = 0
    seeds: list[int] = field(default_factory=lambda: list(range(10)))
    lam: float | None = None
    lr: float = 0.01
    weight_decay: float = 5e-4
    epochs: int = 1000
    pretrain_epochs: int = 200
    hidden: int = 16
    dropout: float = 0.5
    variant: str = "full"
    labels_per_class: int = 5
    buckets: int = 10
    checkpoint: Path | None = None


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse would sys.exit; surface a CliError instead
        raise CliError(f"{message}\n{self.format_usage()}")


def _csv_ints(text: str) -> list[int]:
    try:
        return [int(tok) for tok in text.split(",") if tok != ""]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a comma-separated integer list, got {text!r}")


def _add_common(sub, data_required=True):
    sub.add_argument("--data", type=Path, required=data_required,
                     help="canonical dataset directory")
    sub.add_argument("--out", type=Path, default=None, help="output directory")


def _add_train_flags(sub):
    sub.add_argument("--lambda", dest="lam", type=float, default=None,
                     help="regularization weight (default per dataset: cora 2.0, else 1.0)")
    sub.add_argument("--lr", type=float, default=0.01)
    sub.add_argument("--weight-decay", type=float, default=5e-4)
    sub.add_argument("--epochs", type=int, default=1000)
    sub.add_argument("--pretrain-epochs", type=int, default=200)
    sub.add_argument("--hidden", type=int, default=16)
    sub.add_argument("--dropout", type=float, default=0.5)


def build_parser() -> _Parser:
    parser = _Parser(prog="lcgnn", description=__doc__)
    subs = parser.add_subparsers(dest="subcommand", metavar="COMMAND")

    p = subs.add_parser("train", help="train one variant on one dataset")
    _add_common(p)
    _add_train_flags(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--variant", choices=VARIANTS, default="full")

    p = subs.add_parser("evaluate", help="score a checkpoint on the dataset splits")
    _add_common(p)
    p.add_argument("--checkpoint", type=Path, required=True)
    p.add_argument("--variant", choices=VARIANTS, default="full")

    p = subs.add_parser("ablate", help="variant comparison over shared seeds")
    _add_common(p)
    _add_train_flags(p)
    p.add_argument("--seeds", type=_csv_ints, default=list(range(10)))

    p = subs.add_parser("sparse", help="low-label-budget study")
    _add_common(p)
    _add_train_flags(p)
    p.add_argument("--seeds", type=_csv_ints, default=list(range(10)))
    p.add_argument("--labels-per-class", type=int, default=5)

    p = subs.add_parser("consistency", help="consistency-vs-accuracy curve of the base model")
    _add_common(p)
    _add_train_flags(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--buckets", type=int, default=10)

    subs.add_parser("selftest", help="run the built-in identity and gradient checks")
    return parser


def parse_args(argv: list[str]) -> Command:
    """Total: returns a Command or raises CliError, never exits or crashes."""
    parser = build_parser()
    try:
        ns = parser.parse_args(argv)
    except CliError:
        raise
    except argparse.ArgumentError as exc:
        raise CliError(str(exc)) from None
    if ns.subcommand is None:
        raise CliError("missing subcommand\n" + parser.format_usage())
    cmd = Command(subcommand=ns.subcommand)
    for name in ("data", "out", "seed", "seeds", "lam", "lr", "weight_decay", "epochs",
                 "pretrain_epochs", "hidden", "dropout", "variant", "labels_per_class",
                 "buckets", "checkpoint"):
        if hasattr(ns, name) and getattr(ns, name) is not None:
            setattr(cmd, name, getattr(ns, name))
    return cmd


def _out_dir(cmd: Command) -> Path:
    return cmd.out if cmd.out is not None else Path("lcgnn-out") / cmd.subcommand


def _config_from(cmd: Command, dataset: Dataset) -> TrainConfig:
    lam = cmd.lam if cmd.lam is not None else DEFAULT_LAMBDA.get(dataset.name.lower(), 1.0)
    return TrainConfig(lr=cmd.lr, weight_decay=cmd.weight_decay, lam=lam,
                       epochs=cmd.epochs, pretrain_epochs=cmd.pretrain_epochs,
                       hidden=cmd.hidden, dropout=cmd.dropout, seed=cmd.seed,
                       variant=cmd.variant)


def _write_atomic(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w", encoding="utf-8") as fh:
        fh.write(text)
    os.replace(tmp, path)


def _write_json(path: Path, payload) -> None:
    _write_atomic(path, json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _cmd_train(cmd: Command) -> int:
    dataset = load_dataset(cmd.data)
    config = _config_from(cmd, dataset)
    logger.info("training %s on %s (lambda=%g, seed=%d)", config.variant, dataset.name,
                config.lam, config.seed)
    result = run_experiment(dataset, config)
    out = _out_dir(cmd)
    _write_json(out / "results.json", result.to_json_dict())
    save_params(result.best_params, out / "checkpoint.json")
    logger.info("best epoch %d: val_acc=%.4f test_acc=%.4f",
                result.best_epoch, result.best_val_acc, result.test_acc)
    print(json.dumps({"variant": result.variant, "best_epoch": result.best_epoch,
                      "val_acc": result.best_val_acc, "test_acc": result.test_acc},
                     sort_keys=True))
    return 0


def _cmd_evaluate(cmd: Command) -> int:
    dataset = load_dataset(cmd.data)
    params = load_params(cmd.checkpoint)
    accs = evaluate_variant(params, dataset, cmd.variant)
    payload = {"variant": cmd.variant, **accs}
    print(json.dumps(payload, sort_keys=True))
    if cmd.out is not None:
        _write_json(cmd.out / "evaluation.json", payload)
    return 0


def _cmd_ablate(cmd: Command) -> int:
    dataset = load_dataset(cmd.data)
    config = _config_from(cmd, dataset)
    table = run_ablation(dataset, config, cmd.seeds)
    payload = {variant: {"accuracies": list(agg.accuracies), "mean": agg.mean, "std": agg.std}
               for variant, agg in table.items()}
    out = _out_dir(cmd)
    _write_json(out / "ablation.json", payload)
    text = format_aggregate_table(f"node classification on {dataset.name} "
                                  f"({len(cmd.seeds)} seeds)", table, TABLE_LABELS)
    _write_atomic(out / "ablation.txt", text)
    print(text, end="")
    return 0


def _cmd_sparse(cmd: Command) -> int:
    dataset = load_dataset(cmd.data)
    config = _config_from(cmd, dataset)
    table = run_sparse_experiment(dataset, cmd.labels_per_class, cmd.seeds, config,
                                  variants=SPARSE_VARIANTS)
    payload = {variant: {"accuracies": list(agg.accuracies), "mean": agg.mean, "std": agg.std}
               for variant, agg in table.items()}
    k = cmd.labels_per_class
    out = _out_dir(cmd)
    _write_json(out / f"sparse_{k}labels.json", payload)
    text = format_aggregate_table(f"{dataset.name} with {k} labels per class "
                                  f"({len(cmd.seeds)} seeds)", table,
                                  {"base_only": "GCN", "full": "LC-GCN"})
    _write_atomic(out / f"sparse_{k}labels.txt", text)
    print(text, end="")
    return 0


def _cmd_consistency(cmd: Command) -> int:
    dataset = load_dataset(cmd.data)
    config = replace(_config_from(cmd, dataset), variant="base_only")
    result = run_experiment(dataset, config)
    preds = predict_labels(result.best_params, dataset, variant="base_only")
    curve = consistency_accuracy_curve(dataset, preds, cmd.buckets)
    populated = curve.counts > 0
    rho = None
    if populated.sum() >= 2:  # a rank correlation needs at least two buckets
        rho = spearman_rank_correlation(curve.midpoints[populated],
                                        curve.accuracies[populated])
    out = _out_dir(cmd)
    _write_atomic(out / "consistency.tsv", curve_to_tsv(curve))
    _write_json(out / "consistency.json", {
        "buckets": cmd.buckets,
        "counts": [int(c) for c in curve.counts],
        "accuracies": [None if c == 0 else float(a)
                       for c, a in zip(curve.counts, curve.accuracies)],
        "spearman": rho,
        "test_acc": result.test_acc,
    })
    print(json.dumps({"spearman": rho, "test_acc": result.test_acc}, sort_keys=True))
    return 0


def _cmd_selftest(_: Command) -> int:
    results = run_all()
    ok = True
    for res in results:
        status = "PASS" if res.passed else "FAIL"
        print(f"[{status}] {res.name}: {res.detail}")
        ok = ok and res.passed
    return 0 if ok else 1


_DISPATCH = {
    "train": _cmd_train,
    "evaluate": _cmd_evaluate,
    "ablate": _cmd_ablate,
    "sparse": _cmd_sparse,
    "consistency": _cmd_consistency,
    "selftest": _cmd_selftest,
}


def execute(cmd: Command) -> int:
    """Run one parsed command; returns the process exit status."""
    try:
        return _DISPATCH[cmd.subcommand](cmd)
    except (OSError, ValueError, KeyError, AssertionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    try:
        cmd = parse_args(sys.argv[1:] if argv is None else argv)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return execute(cmd)


if __name__ == "__main__":
    sys.exit(main())
