"""Command-line interface.

Subcommands: synth, train, eval, kfold, gradcheck, params. Every
subcommand is deterministic given its flags and seed; handled errors go
to stderr with the stable prefix ``error:`` and a nonzero exit code.
Report paths write tab-separated files and matplotlib figures.
"""
from __future__ import annotations

import argparse
import io
import os
import sys

import numpy as np

from . import data as dataio
from . import figures
from .errors import GridLstmError
from .grid import count_params, load_model, load_model_config, save_model
from .kernels import make_rng
from .metrics import METRIC_NAMES
from .train import TrainConfig, evaluate, gradcheck, kfold, train


def _parse_grid(text: str):
    try:
        rows_s, cols_s = text.lower().split("x")
        return int(rows_s), int(cols_s)
    except ValueError:
        raise argparse.ArgumentTypeError(f"grid must look like '4x5', got {text!r}") from None


def _atomic_write_text(path, text: str) -> None:
    tmp = f"{path}.tmp{os.getpid()}"
    with open(tmp, "w", encoding="utf-8") as fh:
        fh.write(text)
    os.replace(tmp, path)


def _fmt(value) -> str:
    if value is None:
        return "undefined"
    return f"{value:.6f}"


def _train_config(args, folds=None) -> TrainConfig:
    return TrainConfig(
        learning_rate=args.lr, epochs=args.epochs, batch_size=args.batch,
        seed=args.seed, shuffle=not args.no_shuffle,
        folds=folds if folds is not None else 5, log_every=args.log_every)


def _add_train_flags(parser):
    parser.add_argument("--lr", type=float, default=0.05, help="SGD learning rate")
    parser.add_argument("--epochs", type=int, default=30)
    parser.add_argument("--batch", type=int, default=10, help="mini-batch size")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--no-shuffle", action="store_true")
    parser.add_argument("--log-every", type=int, default=1)


def cmd_synth(args) -> int:
    dataset = dataio.synth_dataset(args.grid[0], args.grid[1], args.time, args.classes,
                                   args.per_class, args.seed, noise=args.noise,
                                   amplitude=args.amplitude)
    dataio.save_dataset(dataset, args.out)
    print(f"wrote {len(dataset)} samples ({dataset.classes} classes) to {args.out}")
    return 0


def _metrics_report_text(report) -> str:
    lines = ["class\t" + "\t".join(METRIC_NAMES) + "\tauc"]
    for c, per in enumerate(report["per_class"]):
        cells = [str(c)] + [_fmt(per[m]) for m in METRIC_NAMES] + [_fmt(report["auc"][c])]
        lines.append("\t".join(cells))
    defined_auc = [a for a in report["auc"] if a is not None]
    macro_auc = float(np.mean(defined_auc)) if defined_auc else None
    lines.append("macro\t" + "\t".join(_fmt(report["macro"][m]) for m in METRIC_NAMES)
                 + "\t" + _fmt(macro_auc))
    lines.append(f"overall_accuracy\t{_fmt(report['overall_accuracy'])}")
    return "\n".join(lines) + "\n"


def cmd_train(args) -> int:
    model_cfg = load_model_config(args.config)
    dataset = dataio.load_dataset(args.data)
    os.makedirs(args.out, exist_ok=True)
    cfg = _train_config(args)
    val_set = None
    train_set = dataset
    if args.holdout > 0:
        n = len(dataset)
        n_val = max(1, int(round(args.holdout * n)))
        perm = make_rng(cfg.seed).permutation(n)
        val_set = dataset.subset(np.sort(perm[:n_val]))
        train_set = dataset.subset(np.sort(perm[n_val:]))
    model = model_cfg.build(make_rng(cfg.seed))
    log = io.StringIO()
    log.write("epoch\tloss" + ("\tval_accuracy" if val_set else "") + "\n")
    history = train(model, train_set, cfg, val_dataset=val_set, log_stream=log)
    model_path = os.path.join(args.out, "model.bin")
    save_model(model, model_path)
    _atomic_write_text(os.path.join(args.out, "train_log.tsv"), log.getvalue())
    figures.save_loss_curve(history, os.path.join(args.out, "loss_curve.png"))
    if val_set:
        report = evaluate(model, val_set)
        _atomic_write_text(os.path.join(args.out, "metrics.tsv"), _metrics_report_text(report))
    final = history[-1] if history else float("nan")
    print(f"trained {cfg.epochs} epochs, final mean loss {final:.6g}; model at {model_path}")
    return 0


def cmd_eval(args) -> int:
    model = load_model(args.model)
    dataset = dataio.load_dataset(args.data)
    report = evaluate(model, dataset)
    text = _metrics_report_text(report)
    sys.stdout.write(text)
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        _atomic_write_text(os.path.join(args.out, "metrics.tsv"), text)
        figures.save_roc_curves(report["scores"], dataset.labels(), report["auc"],
                                os.path.join(args.out, "roc.png"))
    return 0


def cmd_kfold(args) -> int:
    model_cfg = load_model_config(args.config)
    dataset = dataio.load_dataset(args.data)
    cfg = _train_config(args, folds=args.folds)
    results, summary = kfold(model_cfg, dataset, cfg)
    lines = ["fold\t" + "\t".join(METRIC_NAMES) + "\toverall_accuracy"]
    for r in results:
        lines.append(str(r.fold) + "\t" + "\t".join(_fmt(r.metrics[m]) for m in METRIC_NAMES)
                     + "\t" + _fmt(r.metrics["overall_accuracy"]))
    mean, std = summary["overall_accuracy"]
    lines.append(f"mean±std\taccuracy {_fmt(mean)} ± {_fmt(std)}")
    text = "\n".join(lines) + "\n"
    sys.stdout.write(text)
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        _atomic_write_text(os.path.join(args.out, "folds.tsv"), text)
        accs = [r.metrics["overall_accuracy"] for r in results]
        figures.save_fold_accuracy(accs, os.path.join(args.out, "fold_accuracy.png"),
                                   mean=mean, std=std)
    return 0


def cmd_gradcheck(args) -> int:
    report = gradcheck(trials=args.trials, tolerance=args.tolerance, seed=args.seed)
    for line in report.lines():
        print(line)
    return 0


def cmd_params(args) -> int:
    model_cfg = load_model_config(args.config)
    model = model_cfg.build(make_rng(0))
    report = count_params(model, comparison_units=args.compare_units)
    ratio = report.monolithic_recurrent_exact / report.cell_params
    lines = [
        "quantity\tcount",
        f"cell_params_exact\t{report.cell_params}",
        f"head_params_exact\t{report.head_params}",
        f"total_params_exact\t{report.total_params}",
        f"cellular_estimate\t{report.cellular_estimate}",
        f"monolithic_estimate[{report.comparison_units}]\t{report.monolithic_estimate}",
        f"monolithic_recurrent_exact[{report.comparison_units}]\t{report.monolithic_recurrent_exact}",
        f"recurrent_ratio\t{ratio:.1f}x",
    ]
    text = "\n".join(lines) + "\n"
    sys.stdout.write(text)
    if args.out:
        _atomic_write_text(args.out, text)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gridlstm",
        description="Grid of weight-shared LSTM cells for multi-sensor time-series classification")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic spatio-temporal dataset")
    p.add_argument("--grid", type=_parse_grid, default=(4, 5), help="rows x cols, e.g. 4x5")
    p.add_argument("--time", type=int, default=64, help="time steps per sample")
    p.add_argument("--classes", type=int, default=4)
    p.add_argument("--per-class", type=int, default=100)
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--noise", type=float, default=0.3)
    p.add_argument("--amplitude", type=float, default=2.0, help="burst amplitude")
    p.add_argument("--out", required=True, help="output dataset directory")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train a model on a dataset directory")
    p.add_argument("--config", required=True, help="model architecture config file")
    p.add_argument("--data", required=True, help="dataset directory")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--holdout", type=float, default=0.0,
                   help="fraction of samples held out for validation")
    _add_train_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a trained model")
    p.add_argument("--model", required=True, help="model file")
    p.add_argument("--data", required=True, help="dataset directory")
    p.add_argument("--out", help="report directory (metrics.tsv, roc.png)")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("kfold", help="k-fold cross-validation")
    p.add_argument("--config", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--folds", type=int, default=5)
    p.add_argument("--out", help="report directory (folds.tsv, fold_accuracy.png)")
    _add_train_flags(p)
    p.set_defaults(func=cmd_kfold)

    p = sub.add_parser("gradcheck", help="verify analytic gradients against finite differences")
    p.add_argument("--trials", type=int, default=10)
    p.add_argument("--tolerance", type=float, default=1e-5)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("params", help="exact parameter census and scaling comparison")
    p.add_argument("--config", required=True)
    p.add_argument("--compare-units", type=int, default=256,
                   help="hidden units of the monolithic LSTM to compare against")
    p.add_argument("--out", help="write the census as TSV to this file")
    p.set_defaults(func=cmd_params)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except GridLstmError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
