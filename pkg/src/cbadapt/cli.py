"""``cbadapt`` command line: dataset, train, eval, importance, select, plot.

Exit codes: 0 success, 1 usage or configuration error, 2 malformed or
version-mismatched input file, 3 numerical failure.

Every output carries the active config hash and tool version: CSV files as
leading ``# key=value`` lines, JSON under ``meta``, SVG as comments, and
checkpoints in their metadata block.
"""

import argparse
import csv
import dataclasses
import io
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import PRESETS, config_hash, load_config
from .dataset import Dataset, build_dataset, read_dataset
from .errors import CbadaptError, ConfigError, NumericalError
from .predictor import (evaluate_mse, fit, load_checkpoint, permutation_importance, prune_and_retrain,
                        save_checkpoint)
from .selection import ReferenceGain, ThresholdFirst, evaluate_selections
from . import plots

KEEP_FRACTIONS = (1.0, 0.6, 0.4, 0.2, 0.05)


class UsageError(ConfigError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


# ------------------------------------------------------------------ helpers

def _config(args):
    if args.config:
        cfg = load_config(args.config)
    else:
        cfg = PRESETS[args.preset]()
    return cfg.with_seed(args.seed)


def _meta(cfg, **extra) -> dict:
    return {"config_hash": config_hash(cfg), "tool_version": __version__, **extra}


def _write_text(path, text: str) -> None:
    path = Path(path)
    if path.parent and not path.parent.exists():
        path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def _csv(meta: dict, header, rows) -> str:
    buf = io.StringIO()
    for k, v in sorted(meta.items()):
        buf.write(f"# {k}={v}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def read_csv_comments(path) -> tuple[dict, list[dict]]:
    """Split a CSV written by this tool into its ``# k=v`` header and rows."""
    meta, body = {}, []
    for line in Path(path).read_text().splitlines():
        if line.startswith("# "):
            k, _, v = line[2:].partition("=")
            meta[k] = v
        else:
            body.append(line)
    return meta, list(csv.DictReader(body))


def _sibling(path, suffix: str) -> Path:
    path = Path(path)
    return path.with_name(path.stem + suffix)


def _training_view(ds: Dataset, delta: int | None, features: str | None, names=None) -> Dataset:
    if delta is None:
        delta = int(ds.deltas.min())
    view = ds.for_delta(delta)
    if names is not None:
        return view.select_named(names)
    if features:
        return view.with_groups(features)
    return view


def _model_view(ds: Dataset, model, cfg) -> Dataset:
    meta = model.meta
    if "feature_names" not in meta:
        raise ConfigError("checkpoint lacks feature names")
    if list(meta.get("codebook_ids", ds.codebook_ids)) != ds.codebook_ids:
        raise ConfigError("checkpoint and dataset disagree on codebook ids")
    view = _training_view(ds, meta.get("delta"), None, meta["feature_names"])
    return view.with_split(cfg.train.split, meta.get("split_seed", cfg.seed))


def _train_config(cfg, args):
    seed = cfg.train.seed if args.seed is None else args.seed
    return dataclasses.replace(cfg.train, seed=seed)


# ----------------------------------------------------------------- commands

def cmd_dataset(args) -> int:
    cfg = _config(args)
    size = args.size if args.size is not None else cfg.dataset_size
    if size < 1:
        raise UsageError("--size must be >= 1")

    def progress(i, n):
        if args.verbose and (i == n or i % 100 == 0):
            print(f"  {i}/{n} realizations", file=sys.stderr)

    build_dataset(cfg, args.out, size, progress)
    print(f"wrote {size * len(cfg.deltas)} rows to {args.out}")
    return 0


def cmd_train(args) -> int:
    cfg = _config(args)
    ds = read_dataset(args.dataset)
    view = _training_view(ds, args.delta, args.features).with_split(cfg.train.split, cfg.seed)
    tr, va = view.part("train"), view.part("validation")
    tcfg = _train_config(cfg, args)
    model, curve = fit(tr.features, tr.labels, va.features, va.labels, tcfg, hidden_width=cfg.hidden_width)
    model.meta = {
        "feature_names": view.feature_names,
        "features": args.features or "all",
        "delta": int(view.deltas[0]),
        "codebook_ids": ds.codebook_ids,
        "overhead_bits": ds.header.get("overhead_bits"),
        "dataset_config_hash": ds.header.get("config_hash"),
        "split_seed": cfg.seed,
        **_meta(cfg),
    }
    save_checkpoint(model, args.out)
    rows = [[e + 1, f"{t:.8e}", f"{curve.validation[e]:.8e}" if curve.validation else ""]
            for e, t in enumerate(curve.train)]
    loss_path = args.loss_out or _sibling(args.out, "_loss.csv")
    _write_text(loss_path, _csv(_meta(cfg, best_epoch=curve.best_epoch + 1),
                                ("epoch", "train_mse", "validation_mse"), rows))
    print(f"wrote {args.out} and {loss_path} (best epoch {curve.best_epoch + 1})")
    return 0


def _mse_table(model, test: Dataset):
    mse = evaluate_mse(model, test.features, test.labels)
    var = np.var(test.labels, axis=0)
    return mse, var


def cmd_eval(args) -> int:
    cfg = _config(args)
    ds = read_dataset(args.dataset)
    model = load_checkpoint(args.model)
    test = _model_view(ds, model, cfg).part("test")
    mse, var = _mse_table(model, test)
    rows = [[cb, f"{m * 1e3:.4f}", f"{v * 1e3:.4f}", f"{m / v:.4f}" if v > 0 else "nan"]
            for cb, m, v in zip(ds.codebook_ids, mse, var)]
    rows.append(["mean", f"{mse.mean() * 1e3:.4f}", f"{var.mean() * 1e3:.4f}", ""])
    meta = _meta(cfg, delta=model.meta.get("delta"), features=model.meta.get("features"),
                 test_rows=len(test), units="1e-3")
    _write_text(args.out, _csv(meta, ("codebook_id", "mse_e3", "label_var_e3", "mse_over_var"), rows))
    print(f"mean test MSE {mse.mean() * 1e3:.3f}e-3 over {len(test)} rows")
    return 0


def cmd_importance(args) -> int:
    cfg = _config(args)
    ds = read_dataset(args.dataset)
    model = load_checkpoint(args.model)
    view = _model_view(ds, model, cfg)
    tr, va, te = view.part("train"), view.part("validation"), view.part("test")
    imp = permutation_importance(model, va.features, va.labels, args.repeats, cfg.seed)
    meta = _meta(cfg, delta=model.meta.get("delta"), repeats=args.repeats)
    order = np.lexsort((np.arange(len(imp)), -imp))
    _write_text(args.out, _csv(meta, ("rank", "feature", "importance"),
                               [[r + 1, view.feature_names[j], f"{imp[j]:.8e}"] for r, j in enumerate(order)]))
    tcfg = _train_config(cfg, args)
    sweep = []
    for kf in args.keep:
        res = prune_and_retrain(tr.features, tr.labels, va.features, va.labels, te.features, te.labels,
                                imp, kf, tcfg, cfg.hidden_width)
        kept = [n for n, m in zip(view.feature_names, res.mask) if m]
        sweep.append([f"{kf:g}", f"{100 * res.overhead_reduction:.0f}", len(kept)]
                     + [f"{m * 1e3:.4f}" for m in res.mse] + [f"{res.mse.mean() * 1e3:.4f}", " ".join(kept)])
    header = (["keep_fraction", "overhead_reduction_pct", "num_features"]
              + [f"mse_e3_cb{c}" for c in ds.codebook_ids] + ["mean_mse_e3", "kept_features"])
    sweep_path = args.sweep_out or _sibling(args.out, "_sweep.csv")
    _write_text(sweep_path, _csv(meta | {"units": "1e-3"}, header, sweep))
    print(f"wrote {args.out} and {sweep_path}")
    return 0


def _policies(cfg, which: str):
    pols = {"threshold_first": cfg.threshold, "reference_gain": cfg.reference}
    if which == "both":
        return list(pols.values())
    return [pols[which]]


def cmd_select(args) -> int:
    cfg = _config(args)
    if args.rho_min is not None:
        cfg = cfg.replace(threshold=ThresholdFirst(args.rho_min))
    ds = read_dataset(args.dataset)
    model = load_checkpoint(args.model)
    view = _model_view(ds, model, cfg)
    rows = view if args.all_rows else view.part("test")
    from .predictor import forward
    overheads = ds.header["overhead_bits"]
    report = evaluate_selections(forward(model, rows.features), rows.labels, _policies(cfg, args.policy),
                                 overheads, [f"fixed_cb{c}" for c in ds.codebook_ids])
    report.meta = _meta(cfg, delta=model.meta.get("delta"), rows=len(rows),
                        rho_min=cfg.threshold.rho_min, overhead_bits=" ".join(map(str, overheads)))
    text = report.to_json() if Path(args.out).suffix == ".json" else report.to_csv()
    _write_text(args.out, text)
    for r in report.rows:
        print(f"{r.name:>16}: AGCS {r.mean_agcs:.4f}  p5 {r.p5_agcs:.4f}  bits {r.mean_overhead_bits:.1f}")
    return 0


def cmd_plot(args) -> int:
    cfg = _config(args)
    panels = []
    if args.dataset:
        ds = read_dataset(args.dataset)
        deltas = [args.delta] if args.delta is not None else sorted(set(ds.deltas.tolist()))
        for d in deltas:
            sub = ds.for_delta(d)
            if args.scenario:
                sub = sub.subset([i for i, s in enumerate(sub.scenario_ids) if s.startswith(args.scenario)])
                if len(sub) == 0:
                    raise UsageError(f"no rows for scenario prefix {args.scenario!r}")
            series = {f"cb{c}": sub.labels[:, j] for j, c in enumerate(ds.codebook_ids)}
            panels.append(plots.cdf_panel(*plots.panel_origin(len(panels)), series,
                                          f"AGCS CDF, delta={d}"))
    for path in args.loss or ():
        _, rows = read_csv_comments(path)
        curves = {"train": [float(r["train_mse"]) for r in rows]}
        if rows and rows[0].get("validation_mse"):
            curves["validation"] = [float(r["validation_mse"]) for r in rows]
        panels.append(plots.loss_panel(*plots.panel_origin(len(panels)), curves, f"Loss: {Path(path).name}"))
    for path in args.report or ():
        try:
            rows = json.loads(Path(path).read_text())["rows"]
        except (OSError, ValueError, KeyError) as exc:
            raise UsageError(f"cannot read policy report {path}: {exc}") from None
        panels.append(plots.tradeoff_panel(*plots.panel_origin(len(panels)), rows))
    if not panels:
        raise UsageError("nothing to plot: give --dataset, --loss or --report")
    _write_text(args.out, plots.render(panels, _meta(cfg)))
    print(f"wrote {len(panels)} panel(s) to {args.out}")
    return 0


# ------------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="cbadapt", description="Overhead-aware CSI codebook adaptation experiments.")
    p.add_argument("--version", action="version", version=f"cbadapt {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON experiment config (default: the --preset)")
    common.add_argument("--preset", default="desk", choices=sorted(PRESETS))
    common.add_argument("--seed", type=int, help="override the global seed")
    common.add_argument("--out", required=True, help="output path")
    common.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("dataset", parents=[common], help="generate a JSON-lines dataset")
    s.add_argument("--size", type=int, help="number of realizations (default: config dataset_size)")
    s.set_defaults(func=cmd_dataset)

    s = sub.add_parser("train", parents=[common], help="train a predictor checkpoint")
    s.add_argument("--dataset", required=True)
    s.add_argument("--delta", type=int, help="delay regime to train on (default: smallest)")
    s.add_argument("--features", help="feature groups, e.g. SDCP+FDCP (default: all)")
    s.add_argument("--loss-out", help="loss-curve CSV (default: <out>_loss.csv)")
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("eval", parents=[common], help="per-codebook test MSE table")
    s.add_argument("--dataset", required=True)
    s.add_argument("--model", required=True)
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("importance", parents=[common], help="permutation importance and prune sweep")
    s.add_argument("--dataset", required=True)
    s.add_argument("--model", required=True)
    s.add_argument("--repeats", type=int, default=5)
    s.add_argument("--keep", type=float, nargs="+", default=list(KEEP_FRACTIONS))
    s.add_argument("--sweep-out", help="prune sweep CSV (default: <out>_sweep.csv)")
    s.set_defaults(func=cmd_importance)

    s = sub.add_parser("select", parents=[common], help="evaluate selection policies")
    s.add_argument("--dataset", required=True)
    s.add_argument("--model", required=True)
    s.add_argument("--policy", default="both", choices=("threshold_first", "reference_gain", "both"))
    s.add_argument("--rho-min", type=float)
    s.add_argument("--all-rows", action="store_true", help="score every row, not only the test split")
    s.set_defaults(func=cmd_select)

    s = sub.add_parser("plot", parents=[common], help="SVG figures")
    s.add_argument("--dataset")
    s.add_argument("--delta", type=int)
    s.add_argument("--scenario", help="restrict CDFs to scenario ids with this prefix")
    s.add_argument("--loss", nargs="+", help="loss-curve CSVs from train")
    s.add_argument("--report", nargs="+", help="policy report JSONs from select")
    s.set_defaults(func=cmd_plot)
    return p


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        return args.func(args)
    except CbadaptError as exc:
        print(f"cbadapt: error: {exc}", file=sys.stderr)
        return exc.exit_code
    except np.linalg.LinAlgError as exc:
        print(f"cbadapt: numerical error: {exc}", file=sys.stderr)
        return NumericalError.exit_code
    except OSError as exc:
        print(f"cbadapt: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
