"""Experiment configuration: JSON file <-> dataclasses, presets, config hash.

A config file is a JSON object; keys starting with ``_`` are comments and
ignored. See ``configs/desk.json`` for an annotated example. Unset keys take
the ``desk`` preset values.
"""

import dataclasses
import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .channel import ArrayGeometry, ScenarioConfig
from .codebook import CODEBOOK_PRESETS, DESK_CODEBOOKS, DESK_GEOMETRY, CodebookConfig, GridConfig
from .errors import ConfigError
from .predictor import TrainConfig
from .seeding import derive_seed, make_rng
from .selection import ReferenceGain, ThresholdFirst

# 3 km/h and 30 km/h at a 7 GHz carrier
DOPPLER_3KMH = 19.46
DOPPLER_30KMH = 194.6


@dataclass(frozen=True)
class ScenarioFamily:
    """A weighted scenario whose listed fields are redrawn uniformly per realization."""

    id: str
    weight: float
    base: ScenarioConfig
    ranges: dict = field(default_factory=dict)

    def __post_init__(self):
        names = {f.name for f in dataclasses.fields(ScenarioConfig)}
        for key, bounds in self.ranges.items():
            if key not in names:
                raise ConfigError(f"scenario {self.id}: unknown field {key!r} in ranges")
            lo, hi = bounds
            if not lo <= hi:
                raise ConfigError(f"scenario {self.id}: empty range for {key}")
        if not self.weight >= 0:
            raise ConfigError(f"scenario {self.id}: negative weight")

    def sample(self, rng: np.random.Generator) -> ScenarioConfig:
        changes = {}
        for key in sorted(self.ranges):
            lo, hi = self.ranges[key]
            if isinstance(getattr(self.base, key), (int, np.integer)) and not isinstance(getattr(self.base, key), bool):
                changes[key] = int(rng.integers(int(lo), int(hi) + 1))
            else:
                changes[key] = float(rng.uniform(lo, hi))
        return self.base.replace(**changes)


def _family(id, weight, los, doppler):
    if los:
        base = ScenarioConfig(num_rays=12, rician_k_db=10.0, doppler_max_hz=doppler)
        ranges = {"rician_k_db": (5.0, 15.0), "azimuth_spread_deg": (3.0, 15.0),
                  "zenith_spread_deg": (1.0, 5.0), "delay_spread_s": (30e-9, 300e-9)}
    else:
        base = ScenarioConfig(num_rays=50, doppler_max_hz=doppler)
        ranges = {"azimuth_spread_deg": (30.0, 80.0), "zenith_spread_deg": (5.0, 20.0),
                  "delay_spread_s": (300e-9, 1500e-9)}
    return ScenarioFamily(id, weight, base, ranges)


def mixed_families(los_fraction: float = 0.5, outdoor_fraction: float = 0.2) -> tuple:
    """LoS/NLoS x indoor (3 km/h) / outdoor (30 km/h) mixture."""
    out = []
    for los, lw in ((True, los_fraction), (False, 1.0 - los_fraction)):
        tag = "los" if los else "nlos"
        out.append(_family(f"{tag}_indoor", lw * (1 - outdoor_fraction), los, DOPPLER_3KMH))
        out.append(_family(f"{tag}_outdoor", lw * outdoor_fraction, los, DOPPLER_30KMH))
    return tuple(f for f in out if f.weight > 0)


@dataclass(frozen=True)
class ExperimentConfig:
    geometry: ArrayGeometry = DESK_GEOMETRY
    scenarios: tuple = field(default_factory=mixed_families)
    grid: GridConfig = GridConfig()
    codebooks: tuple = DESK_CODEBOOKS
    F: int = 8
    Q: int = 4
    complex_mode: bool = False
    deltas: tuple = (0, 10)
    num_layers: int = 1
    dataset_size: int = 2000
    train: TrainConfig = TrainConfig()
    threshold: ThresholdFirst = ThresholdFirst(0.55)
    reference: ReferenceGain = ReferenceGain(0, {1: 0.04, 2: 0.045, 3: 0.1, 4: 0.25})
    seed: int = 0

    def __post_init__(self):
        if not self.scenarios:
            raise ConfigError("at least one scenario is required")
        total = sum(s.weight for s in self.scenarios)
        if not math.isclose(total, 1.0, abs_tol=1e-9):
            raise ConfigError(f"scenario weights sum to {total}, expected 1")
        ids = [s.id for s in self.scenarios]
        if len(set(ids)) != len(ids):
            raise ConfigError("duplicate scenario ids")
        if not self.codebooks:
            raise ConfigError("empty codebook set")
        if not self.deltas or min(self.deltas) < 0:
            raise ConfigError("deltas must be a non-empty list of values >= 0")
        if self.F > self.num_rb or self.F < 1 or self.Q < 1:
            raise ConfigError("F and Q must be >= 1 and F <= num_rb")
        if self.dataset_size < 1:
            raise ConfigError("dataset_size must be >= 1")
        if self.num_layers > min(2 * self.geometry.ports_per_pol, min(s.base.num_rx for s in self.scenarios)):
            raise ConfigError("num_layers exceeds min(num_rx, P)")
        for cb in self.codebooks:
            cb.check_fits(self.geometry, self.grid)

    @property
    def num_rb(self) -> int:
        return max(self.grid.num_rb, self.F)

    @property
    def num_slot(self) -> int:
        return max(max(self.deltas) + self.grid.num_slot, self.Q)

    @property
    def hidden_width(self) -> int:
        """``(N1 N2 + F + Q) / 2``, unless the train config overrides it."""
        if self.train.hidden_width is not None:
            return self.train.hidden_width
        return max(1, (self.geometry.ports_per_pol + self.F + self.Q) // 2)

    def realization(self, index: int) -> tuple[int, str, ScenarioConfig]:
        """``(seed, scenario_id, scenario)`` of realization ``index``."""
        seed = derive_seed(self.seed, "realization", index)
        return (seed,) + self.scenario_for_seed(seed)

    def scenario_for_seed(self, seed: int) -> tuple[str, ScenarioConfig]:
        rng = make_rng(seed, "scenario")
        weights = np.array([s.weight for s in self.scenarios])
        fam = self.scenarios[int(rng.choice(len(weights), p=weights / weights.sum()))]
        sc = fam.sample(rng).replace(num_rb=self.num_rb, num_slot=self.num_slot)
        return fam.id, sc

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)

    def with_seed(self, seed: int | None) -> "ExperimentConfig":
        return self if seed is None else self.replace(seed=int(seed))


# ------------------------------------------------------------ (de)serialization

def _num(x):
    if isinstance(x, float) and math.isinf(x):
        return "-inf" if x < 0 else "inf"
    return x


def _scenario_dict(sc: ScenarioConfig) -> dict:
    return {k: _num(v) for k, v in dataclasses.asdict(sc).items()}


def to_dict(cfg: ExperimentConfig) -> dict:
    return {
        "geometry": dataclasses.asdict(cfg.geometry),
        "scenarios": [{"id": s.id, "weight": s.weight, "base": _scenario_dict(s.base),
                       "ranges": {k: list(v) for k, v in sorted(s.ranges.items())}} for s in cfg.scenarios],
        "grid": dataclasses.asdict(cfg.grid),
        "codebooks": [dataclasses.asdict(c) for c in cfg.codebooks],
        "F": cfg.F, "Q": cfg.Q, "complex_mode": cfg.complex_mode,
        "deltas": list(cfg.deltas), "num_layers": cfg.num_layers,
        "dataset_size": cfg.dataset_size,
        "train": dataclasses.asdict(cfg.train),
        "threshold": {"rho_min": cfg.threshold.rho_min},
        "reference": {"ref_id": cfg.reference.ref_id,
                      "rho0": {str(k): v for k, v in sorted(cfg.reference.rho0.items())}},
        "seed": cfg.seed,
    }


def _strip_comments(obj):
    if isinstance(obj, dict):
        return {k: _strip_comments(v) for k, v in obj.items() if not k.startswith("_")}
    if isinstance(obj, list):
        return [_strip_comments(v) for v in obj]
    return obj


def _make(cls, data, what):
    if not isinstance(data, dict):
        raise ConfigError(f"{what}: expected an object")
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(data) - names
    if unknown:
        raise ConfigError(f"{what}: unknown keys {sorted(unknown)}")
    data = {k: (float(v) if v in ("-inf", "inf") else v) for k, v in data.items()}
    try:
        return cls(**data)
    except TypeError as exc:
        raise ConfigError(f"{what}: {exc}") from None


def from_dict(data: dict) -> ExperimentConfig:
    data = _strip_comments(dict(data))
    preset = data.pop("preset", "desk")
    if preset not in PRESETS:
        raise ConfigError(f"unknown preset {preset!r}; available: {sorted(PRESETS)}")
    base = PRESETS[preset]()
    changes = {}
    if "geometry" in data:
        changes["geometry"] = _make(ArrayGeometry, data.pop("geometry"), "geometry")
    if "grid" in data:
        changes["grid"] = _make(GridConfig, data.pop("grid"), "grid")
    if "codebooks" in data:
        cbs = data.pop("codebooks")
        if isinstance(cbs, str):
            if cbs not in CODEBOOK_PRESETS:
                raise ConfigError(f"unknown codebook preset {cbs!r}")
            changes["codebooks"] = CODEBOOK_PRESETS[cbs][2]
        else:
            changes["codebooks"] = tuple(_make(CodebookConfig, c, f"codebooks[{i}]") for i, c in enumerate(cbs))
    if "scenarios" in data:
        fams = []
        for i, s in enumerate(data.pop("scenarios")):
            s = dict(s)
            try:
                fams.append(ScenarioFamily(
                    str(s["id"]), float(s["weight"]),
                    _make(ScenarioConfig, s.get("base", {}), f"scenarios[{i}].base"),
                    {k: tuple(v) for k, v in s.get("ranges", {}).items()}))
            except KeyError as exc:
                raise ConfigError(f"scenarios[{i}]: missing {exc}") from None
        changes["scenarios"] = tuple(fams)
    if "train" in data:
        t = dict(data.pop("train"))
        if "split" in t:
            t["split"] = tuple(t["split"])
        changes["train"] = _make(TrainConfig, t, "train")
    if "threshold" in data:
        changes["threshold"] = _make(ThresholdFirst, data.pop("threshold"), "threshold")
    if "reference" in data:
        r = dict(data.pop("reference"))
        if "rho0" in r:
            r["rho0"] = {int(k): float(v) for k, v in r["rho0"].items()}
        changes["reference"] = _make(ReferenceGain, r, "reference")
    if "deltas" in data:
        changes["deltas"] = tuple(int(d) for d in data.pop("deltas"))
    for key in ("F", "Q", "num_layers", "dataset_size", "seed"):
        if key in data:
            changes[key] = int(data.pop(key))
    if "complex_mode" in data:
        changes["complex_mode"] = bool(data.pop("complex_mode"))
    if data:
        raise ConfigError(f"unknown config keys: {sorted(data)}")
    return base.replace(**changes)


def load_config(path) -> ExperimentConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}: invalid JSON: {exc.msg}") from None
    return from_dict(data)


def config_hash(cfg: ExperimentConfig) -> str:
    blob = json.dumps(to_dict(cfg), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def provenance(cfg: ExperimentConfig) -> dict:
    return {"config_hash": config_hash(cfg), "tool_version": __version__}


def _desk():
    return ExperimentConfig()


def _desk_low():
    return ExperimentConfig(scenarios=mixed_families(0.5, 0.0), deltas=(0,))


def _table1():
    geometry, grid, cbs = CODEBOOK_PRESETS["table1"]
    return ExperimentConfig(geometry=geometry, grid=grid, codebooks=cbs,
                            scenarios=mixed_families(0.5, 0.2), dataset_size=500)


PRESETS = {"desk": _desk, "desk-low": _desk_low, "table1": _table1}
