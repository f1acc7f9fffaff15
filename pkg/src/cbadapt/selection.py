"""Overhead-aware codebook selection from predicted AGCS vectors.

Candidates are indexed by their position in the overhead-ascending codebook
list, so "lowest index" always means "cheapest". Both rules use inclusive
``>=`` comparisons and break argmax ties toward the lower index.
"""

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import ConfigError


@dataclass(frozen=True)
class ThresholdFirst:
    rho_min: float = 0.55

    name = "threshold_first"

    def select(self, preds) -> int:
        return select_threshold_first(preds, self.rho_min)


@dataclass(frozen=True)
class ReferenceGain:
    ref_id: int = 0
    rho0: dict = field(default_factory=lambda: {1: 0.04, 2: 0.045, 3: 0.1, 4: 0.25})

    name = "reference_gain"

    def select(self, preds) -> int:
        return select_reference_gain(preds, self.ref_id, self.rho0)


# SU/MU-MIMO threshold profiles; MU-MIMO needs finer CSI, hence higher thresholds
THRESHOLD_PROFILES = {
    "su-mimo": ThresholdFirst(0.55),
    "mu-mimo": ThresholdFirst(0.75),
}


def check_candidate_order(overheads) -> None:
    o = np.asarray(overheads)
    if len(o) == 0:
        raise ConfigError("no candidate codebooks")
    if np.any(np.diff(o) <= 0):
        raise ConfigError(f"candidate overheads {o.tolist()} are not strictly increasing")


def select_threshold_first(preds, rho_min: float) -> int:
    """Cheapest candidate with predicted AGCS >= rho_min, else the best prediction."""
    preds = np.asarray(preds, dtype=float)
    if preds.size == 0:
        raise ConfigError("empty prediction vector")
    hits = np.flatnonzero(preds >= rho_min)
    if hits.size:
        return int(hits[0])
    return int(np.argmax(preds))


def select_reference_gain(preds, ref_id: int, rho0) -> int:
    """Best candidate whose gain over the reference meets its own threshold.

    ``rho0`` maps every non-reference candidate index to its threshold (a
    sequence is read as thresholds for the non-reference candidates in
    order). With no feasible candidate the reference is kept.
    """
    preds = np.asarray(preds, dtype=float)
    n = preds.size
    if not 0 <= ref_id < n:
        raise ConfigError(f"reference id {ref_id} outside [0, {n})")
    if not isinstance(rho0, dict):
        others = [i for i in range(n) if i != ref_id]
        rho0 = list(rho0)
        if len(rho0) != len(others):
            raise ConfigError(f"need {len(others)} rho0 values, got {len(rho0)}")
        rho0 = dict(zip(others, rho0))
    best = ref_id
    best_val = -math.inf
    for c in range(n):
        if c == ref_id:
            continue
        if c not in rho0:
            raise ConfigError(f"missing rho0 for candidate {c}")
        if preds[c] - preds[ref_id] >= rho0[c] and preds[c] > best_val:
            best, best_val = c, preds[c]
    return best


# --------------------------------------------------------------- evaluation

@dataclass
class PolicyRow:
    name: str
    mean_agcs: float
    p5_agcs: float
    mean_overhead_bits: float
    overhead_reduction_pct: float
    selection_counts: list


@dataclass
class PolicyReport:
    rows: list
    meta: dict = field(default_factory=dict)

    CSV_COLUMNS = ("name", "mean_agcs", "p5_agcs", "mean_overhead_bits", "overhead_reduction_pct")

    def row(self, name: str) -> PolicyRow:
        for r in self.rows:
            if r.name == name:
                return r
        raise KeyError(name)

    def to_csv(self) -> str:
        buf = io.StringIO()
        for k, v in sorted(self.meta.items()):
            buf.write(f"# {k}={v}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.CSV_COLUMNS)
        for r in self.rows:
            w.writerow([r.name, f"{r.mean_agcs:.6f}", f"{r.p5_agcs:.6f}",
                        f"{r.mean_overhead_bits:.3f}", f"{r.overhead_reduction_pct:.3f}"])
        return buf.getvalue()

    def to_json(self) -> str:
        return json.dumps({"meta": self.meta, "rows": [asdict(r) for r in self.rows]},
                          indent=2, sort_keys=True) + "\n"


def _row(name, achieved, bits, max_bits, counts):
    mean_bits = float(np.mean(bits))
    return PolicyRow(name, float(np.mean(achieved)), float(np.percentile(achieved, 5)),
                     mean_bits, 100.0 * (1.0 - mean_bits / max_bits), counts)


def evaluate_selections(preds, labels, policies, overheads, names=None) -> PolicyReport:
    """Score policies on predicted AGCS ``preds`` against the true ``labels``.

    For every row the policy picks a candidate from the prediction and is
    credited with that candidate's true AGCS and overhead. Every fixed
    codebook is reported as a baseline; overhead reduction is relative to
    the most expensive codebook.
    """
    preds = np.atleast_2d(np.asarray(preds, dtype=float))
    labels = np.atleast_2d(np.asarray(labels, dtype=float))
    overheads = np.asarray(overheads, dtype=float)
    if preds.shape != labels.shape or preds.shape[1] != len(overheads):
        raise ConfigError("predictions, labels and overhead table disagree in shape")
    if len(preds) == 0:
        raise ConfigError("no rows to evaluate")
    check_candidate_order(overheads)
    names = names or [f"fixed_cb{i}" for i in range(len(overheads))]
    max_bits = overheads.max()
    n, g = labels.shape
    rows = []
    for pol in policies:
        sel = np.array([pol.select(p) for p in preds], dtype=int)
        rows.append(_row(pol.name, labels[np.arange(n), sel], overheads[sel], max_bits,
                         np.bincount(sel, minlength=g).tolist()))
    for j in range(g):
        counts = [0] * g
        counts[j] = n
        rows.append(_row(names[j], labels[:, j], np.full(n, overheads[j]), max_bits, counts))
    return PolicyReport(rows)


def evaluate_policy(model, features, labels, policies, overheads, names=None) -> PolicyReport:
    """:func:`evaluate_selections` with predictions from a trained model."""
    from .predictor import forward
    return evaluate_selections(forward(model, features), labels, policies, overheads, names)
