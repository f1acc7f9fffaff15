"""End-to-end desk run: dataset -> train -> eval -> importance -> select -> plot.

    python3 scripts/run_pipeline.py --out runs/demo --size 500

Every stage goes through the ``cbadapt`` CLI, so the files written here are
the same ones a user would get by hand.
"""

import argparse
import sys
import time
from pathlib import Path

from cbadapt.cli import main as cli


def step(name, argv):
    t0 = time.perf_counter()
    code = cli(argv)
    print(f"[{name}] exit {code} in {time.perf_counter() - t0:.1f}s", file=sys.stderr)
    if code:
        sys.exit(code)


def run(out: Path, size: int, preset: str, config: str | None, delta: int, features: str):
    out.mkdir(parents=True, exist_ok=True)
    common = ["--config", config] if config else ["--preset", preset]
    ds = str(out / "dataset.jsonl")
    model = str(out / f"model_d{delta}.bin")
    step("dataset", ["dataset", *common, "--size", str(size), "--out", ds, "-v"])
    step("train", ["train", *common, "--dataset", ds, "--delta", str(delta), "--features", features,
                   "--out", model])
    step("eval", ["eval", *common, "--dataset", ds, "--model", model, "--out", str(out / "eval.csv")])
    step("importance", ["importance", *common, "--dataset", ds, "--model", model,
                        "--out", str(out / "importance.csv")])
    step("select", ["select", *common, "--dataset", ds, "--model", model, "--policy", "both",
                    "--out", str(out / "selection.json")])
    step("plot", ["plot", *common, "--dataset", ds, "--delta", str(delta),
                  "--loss", str(out / f"model_d{delta}_loss.csv"), "--report", str(out / "selection.json"),
                  "--out", str(out / "figures.svg")])


if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", type=Path, default=Path("runs/pipeline"))
    ap.add_argument("--size", type=int, default=500)
    ap.add_argument("--preset", default="desk")
    ap.add_argument("--config")
    ap.add_argument("--delta", type=int, default=10)
    ap.add_argument("--features", default="SDCP+FDCP+TDCP")
    a = ap.parse_args()
    run(a.out, a.size, a.preset, a.config, a.delta, a.features)
