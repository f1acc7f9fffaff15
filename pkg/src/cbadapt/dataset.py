"""JSON-lines dataset: assistance features plus true AGCS labels per codebook.

Line 1 is a header object::

    {"format": "cbadapt-dataset", "format_version": 1, "config_hash": ...,
     "tool_version": ..., "feature_names": [...], "codebook_ids": [...],
     "deltas": [...], "overhead_bits": [...], "num_realizations": D}

Each following line is one (realization, delta) pair::

    {"features": [...], "labels": [...], "seed": s, "scenario_id": "...",
     "delta": d, "index": i}

Channels are never stored; ``(config, seed)`` regenerates them.
"""

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .agcs import agcs_table
from .assistance import assemble_features, compute_report, feature_names, group_mask, parse_groups
from .channel import generate_channel
from .codebook import overhead_bits
from .config import ExperimentConfig, provenance
from .errors import ConfigError, DataFormatError
from .seeding import derive_seed

FORMAT_NAME = "cbadapt-dataset"
FORMAT_VERSION = 1
SPLITS = ("train", "validation", "test")


@dataclass
class Dataset:
    header: dict
    features: np.ndarray          # (rows, n_features)
    labels: np.ndarray            # (rows, G)
    seeds: np.ndarray
    scenario_ids: list
    deltas: np.ndarray
    indices: np.ndarray           # realization index of each row
    feature_names: list = field(default_factory=list)
    split: np.ndarray | None = None

    def __len__(self):
        return len(self.labels)

    @property
    def codebook_ids(self) -> list:
        return list(self.header.get("codebook_ids", range(self.labels.shape[1])))

    def subset(self, rows) -> "Dataset":
        rows = np.asarray(rows)
        if rows.dtype == bool:
            rows = np.flatnonzero(rows)
        return Dataset(self.header, self.features[rows], self.labels[rows], self.seeds[rows],
                       [self.scenario_ids[i] for i in rows], self.deltas[rows], self.indices[rows],
                       list(self.feature_names), None if self.split is None else self.split[rows])

    def for_delta(self, delta: int) -> "Dataset":
        sub = self.subset(self.deltas == delta)
        if len(sub) == 0:
            raise ConfigError(f"no rows with delta={delta}")
        return sub

    def with_features(self, mask) -> "Dataset":
        mask = np.asarray(mask, dtype=bool)
        out = self.subset(np.arange(len(self)))
        out.features = self.features[:, mask]
        out.feature_names = [n for n, m in zip(self.feature_names, mask) if m]
        return out

    def with_groups(self, groups) -> "Dataset":
        if isinstance(groups, str):
            groups = parse_groups(groups)
        return self.with_features(group_mask(self.feature_names, groups))

    def select_named(self, names) -> "Dataset":
        pos = {n: i for i, n in enumerate(self.feature_names)}
        missing = [n for n in names if n not in pos]
        if missing:
            raise ConfigError(f"dataset lacks features {missing[:5]}")
        out = self.subset(np.arange(len(self)))
        out.features = self.features[:, [pos[n] for n in names]]
        out.feature_names = list(names)
        return out

    def with_split(self, fractions=(0.7, 0.15, 0.15), seed: int = 0) -> "Dataset":
        """Tag rows by realization so every delta of a channel lands in one split."""
        out = self.subset(np.arange(len(self)))
        out.split = split_tags(self.indices, fractions, seed)
        return out

    def part(self, name: str) -> "Dataset":
        if self.split is None:
            raise ConfigError("dataset has no split tags")
        return self.subset(self.split == name)


def split_tags(indices, fractions, seed: int) -> np.ndarray:
    indices = np.asarray(indices)
    uniq = np.unique(indices)
    order = np.random.Generator(np.random.Philox(derive_seed(seed, "split"))).permutation(len(uniq))
    n_train = int(round(fractions[0] * len(uniq)))
    n_val = int(round(fractions[1] * len(uniq)))
    tag_of = {}
    for rank, pos in enumerate(order):
        tag = "train" if rank < n_train else "validation" if rank < n_train + n_val else "test"
        tag_of[int(uniq[pos])] = tag
    return np.array([tag_of[int(i)] for i in indices])


def realization_rows(cfg: ExperimentConfig, index: int) -> list[dict]:
    seed, scenario_id, scenario = cfg.realization(index)
    channel = generate_channel(cfg.geometry, scenario, seed)
    feats = assemble_features(compute_report(channel, cfg.F, cfg.Q, cfg.complex_mode))
    table = agcs_table(channel, cfg.codebooks, cfg.deltas, cfg.grid, cfg.num_layers)
    table = np.clip(table, 0.0, 1.0)
    return [{"features": feats.tolist(), "labels": table[i].tolist(), "seed": seed,
             "scenario_id": scenario_id, "delta": int(d), "index": index}
            for i, d in enumerate(cfg.deltas)]


def make_header(cfg: ExperimentConfig, size: int) -> dict:
    return {
        "format": FORMAT_NAME,
        "format_version": FORMAT_VERSION,
        **provenance(cfg),
        "feature_names": feature_names(cfg.geometry.n1, cfg.geometry.n2, cfg.F, cfg.Q, cfg.complex_mode),
        "codebook_ids": [cb.id for cb in cfg.codebooks],
        "overhead_bits": [overhead_bits(cb, cfg.geometry, cfg.grid) for cb in cfg.codebooks],
        "deltas": list(cfg.deltas),
        "num_realizations": size,
        "seed": cfg.seed,
    }


def build_rows(cfg: ExperimentConfig, size: int | None = None, progress=None) -> tuple[dict, list]:
    size = cfg.dataset_size if size is None else size
    rows = []
    for i in range(size):
        rows.extend(realization_rows(cfg, i))
        if progress is not None:
            progress(i + 1, size)
    return make_header(cfg, size), rows


def _dump(obj) -> str:
    return json.dumps(obj, separators=(",", ":"), allow_nan=False)


def write_dataset(path, header: dict, rows) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(_dump(header) + "\n")
        for r in rows:
            fh.write(_dump(r) + "\n")


def build_dataset(cfg: ExperimentConfig, path, size: int | None = None, progress=None) -> Path:
    header, rows = build_rows(cfg, size, progress)
    write_dataset(path, header, rows)
    return Path(path)


def from_rows(header: dict, rows) -> Dataset:
    rows = list(rows)
    return Dataset(
        header,
        np.array([r["features"] for r in rows], dtype=float).reshape(len(rows), -1),
        np.array([r["labels"] for r in rows], dtype=float).reshape(len(rows), -1),
        np.array([r["seed"] for r in rows], dtype=np.uint64),
        [r["scenario_id"] for r in rows],
        np.array([r["delta"] for r in rows], dtype=int),
        np.array([r.get("index", i) for i, r in enumerate(rows)], dtype=int),
        list(header["feature_names"]),
    )


def read_dataset(path) -> Dataset:
    path = Path(path)
    try:
        fh = open(path, encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot open dataset {path}: {exc}") from None
    with fh:
        lines = fh.read().splitlines()
    if not lines:
        raise DataFormatError("empty dataset file", path, 1)
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        raise DataFormatError(f"invalid header JSON: {exc.msg}", path, 1) from None
    if not isinstance(header, dict) or header.get("format") != FORMAT_NAME:
        raise DataFormatError("not a cbadapt dataset header", path, 1)
    if header.get("format_version") != FORMAT_VERSION:
        raise DataFormatError(f"format version {header.get('format_version')}, expected {FORMAT_VERSION}", path, 1)
    n_feat = len(header["feature_names"])
    n_lab = len(header["codebook_ids"])
    rows = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        try:
            r = json.loads(line)
        except json.JSONDecodeError as exc:
            raise DataFormatError(f"invalid JSON: {exc.msg}", path, lineno) from None
        if not isinstance(r, dict) or not {"features", "labels", "seed", "scenario_id", "delta"} <= set(r):
            raise DataFormatError("row lacks required keys", path, lineno)
        if len(r["features"]) != n_feat or len(r["labels"]) != n_lab:
            raise DataFormatError("row length disagrees with header", path, lineno)
        rows.append(r)
    return from_rows(header, rows)
