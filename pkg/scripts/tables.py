"""Print the desk-scale result tables as CSV on stdout.

    python3 scripts/tables.py --size 2000 > tables.csv

* ``mse``      test MSE (x1e-3) per codebook for each feature set and delay
* ``pruning``  test MSE after keeping the top fraction of features by
               permutation importance (retrained per fraction)
* ``overhead`` report size in bits for the codebook presets
"""

import argparse
import csv
import sys

from cbadapt.codebook import CODEBOOK_PRESETS, overhead_bits
from cbadapt.config import PRESETS, config_hash
from cbadapt.dataset import build_rows, from_rows
from cbadapt.predictor import evaluate_mse, fit, permutation_importance, prune_and_retrain

FEATURE_SETS = ("SDCP", "SDCP+FDCP", "SDCP+FDCP+TDCP")
KEEP = (1.0, 0.6, 0.4, 0.2, 0.05)


def split(ds, delta, groups):
    view = ds.for_delta(delta).with_groups(groups)
    return view.part("train"), view.part("validation"), view.part("test")


def mse_table(ds, cfg, w):
    w.writerow(["table", "delta", "features", *[f"cb{c}" for c in ds.codebook_ids], "mean"])
    for delta in cfg.deltas:
        for groups in FEATURE_SETS:
            tr, va, te = split(ds, delta, groups)
            model, _ = fit(tr.features, tr.labels, va.features, va.labels, cfg.train, hidden_width=cfg.hidden_width)
            mse = evaluate_mse(model, te.features, te.labels) * 1e3
            w.writerow(["mse", delta, groups, *[f"{m:.3f}" for m in mse], f"{mse.mean():.3f}"])


def pruning_table(ds, cfg, w, delta=0, groups="SDCP+FDCP"):
    w.writerow(["table", "keep_fraction", "num_features", *[f"cb{c}" for c in ds.codebook_ids], "mean"])
    tr, va, te = split(ds, delta, groups)
    model, _ = fit(tr.features, tr.labels, va.features, va.labels, cfg.train, hidden_width=cfg.hidden_width)
    imp = permutation_importance(model, va.features, va.labels, 5, cfg.seed)
    for kf in KEEP:
        res = prune_and_retrain(tr.features, tr.labels, va.features, va.labels, te.features, te.labels,
                                imp, kf, cfg.train, cfg.hidden_width)
        mse = res.mse * 1e3
        w.writerow(["pruning", kf, int(res.mask.sum()), *[f"{m:.3f}" for m in mse], f"{mse.mean():.3f}"])


def overhead_table(w):
    w.writerow(["table", "preset", "codebook_id", "L", "M", "T", "K", "bits"])
    for name, (geometry, grid, cbs) in CODEBOOK_PRESETS.items():
        for cb in cbs:
            w.writerow(["overhead", name, cb.id, cb.L, cb.M, cb.T, cb.K, overhead_bits(cb, geometry, grid)])


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--preset", default="desk", choices=sorted(PRESETS))
    ap.add_argument("--size", type=int, default=2000)
    ap.add_argument("--seed", type=int)
    ap.add_argument("--only", choices=("mse", "pruning", "overhead"))
    a = ap.parse_args(argv)
    cfg = PRESETS[a.preset]()
    if a.seed is not None:
        cfg = cfg.with_seed(a.seed)
    w = csv.writer(sys.stdout, lineterminator="\n")
    print(f"# config_hash={config_hash(cfg)}")
    print(f"# size={a.size}")
    if a.only in (None, "overhead"):
        overhead_table(w)
    if a.only == "overhead":
        return
    ds = from_rows(*build_rows(cfg, a.size)).with_split(cfg.train.split, cfg.seed)
    if a.only in (None, "mse"):
        mse_table(ds, cfg, w)
    if a.only in (None, "pruning"):
        pruning_table(ds, cfg, w)


if __name__ == "__main__":
    main()
