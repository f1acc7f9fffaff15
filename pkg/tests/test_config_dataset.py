import json
import math

import numpy as np
import pytest

from cbadapt import __version__
from cbadapt.config import (PRESETS, ExperimentConfig, config_hash, from_dict, load_config, mixed_families,
                            to_dict)
from cbadapt.dataset import FORMAT_VERSION, build_dataset, read_dataset, split_tags
from cbadapt.errors import ConfigError, DataFormatError
from cbadapt.seeding import derive_seed, make_rng, purpose_tag

TINY = {"preset": "desk", "dataset_size": 6, "seed": 3}


@pytest.fixture(scope="module")
def tiny_cfg():
    return from_dict(TINY)


@pytest.fixture(scope="module")
def tiny_file(tmp_path_factory, tiny_cfg):
    path = tmp_path_factory.mktemp("ds") / "tiny.jsonl"
    build_dataset(tiny_cfg, path)
    return path


# ---------------------------------------------------------------- seeding

def test_seed_derivation():
    assert derive_seed(1, "a") == derive_seed(1, "a")
    assert len({derive_seed(1, "a"), derive_seed(2, "a"), derive_seed(1, "b"), derive_seed(1, "a", 1)}) == 4
    assert 0 <= derive_seed(2**70, "x") < 2**64
    assert purpose_tag("channel") == purpose_tag("channel")
    a = make_rng(5, "p", 2).standard_normal(3)
    np.testing.assert_array_equal(a, make_rng(5, "p", 2).standard_normal(3))
    assert isinstance(make_rng(5).bit_generator, np.random.Philox)


# ----------------------------------------------------------------- config

def test_desk_defaults():
    cfg = ExperimentConfig()
    assert cfg.hidden_width == 10
    assert cfg.num_slot == 10 + 4 and cfg.num_rb == 24
    assert cfg.threshold.rho_min == 0.55
    assert sum(s.weight for s in cfg.scenarios) == pytest.approx(1)
    los = sum(s.weight for s in cfg.scenarios if s.base.has_los)
    assert los == pytest.approx(0.5)


def test_mixture_frequencies():
    cfg = ExperimentConfig()
    ids = [cfg.realization(i)[1] for i in range(2000)]
    outdoor = np.mean([s.endswith("outdoor") for s in ids])
    los = np.mean([s.startswith("los") for s in ids])
    assert abs(outdoor - 0.2) < 0.03 and abs(los - 0.5) < 0.04


def test_realization_ranges():
    cfg = ExperimentConfig()
    fams = {f.id: f for f in cfg.scenarios}
    for i in range(50):
        _, sid, sc = cfg.realization(i)
        for key, (lo, hi) in fams[sid].ranges.items():
            assert lo <= getattr(sc, key) <= hi
        assert sc.num_rb == cfg.num_rb and sc.num_slot == cfg.num_slot


def test_round_trip_and_hash():
    cfg = ExperimentConfig()
    assert config_hash(from_dict(to_dict(cfg))) == config_hash(cfg)
    assert config_hash(cfg.with_seed(1)) != config_hash(cfg)
    assert config_hash(cfg.with_seed(None)) == config_hash(cfg)
    assert len(config_hash(cfg)) == 16


def test_shipped_config_matches_preset():
    cfg = load_config("configs/desk.json")
    assert config_hash(cfg) == config_hash(PRESETS["desk"]())


def test_comments_ignored():
    cfg = from_dict({"_note": "x", "F": 6, "train": {"_why": "fast", "epochs": 7}})
    assert cfg.F == 6 and cfg.train.epochs == 7


@pytest.mark.parametrize("bad", [
    {"preset": "nope"},
    {"bogus": 1},
    {"train": {"epochs": 0}},
    {"geometry": {"n1": 0}},
    {"codebooks": "unknown"},
    {"scenarios": [{"id": "a", "weight": 0.4}]},
    {"scenarios": [{"id": "a", "weight": 1.0, "ranges": {"nope": [0, 1]}}]},
    {"deltas": [-1]},
    {"F": 0},
    {"reference": {"ref_id": 0, "extra": 1}},
])
def test_config_errors(bad):
    with pytest.raises(ConfigError):
        from_dict(bad)


def test_load_config_errors(tmp_path):
    p = tmp_path / "c.json"
    p.write_text('{"F": 8,\n  oops}')
    with pytest.raises(ConfigError, match=":2:"):
        load_config(p)
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.json")


def test_presets_build():
    for name, make in PRESETS.items():
        cfg = make()
        assert cfg.codebooks and cfg.scenarios, name
    assert PRESETS["desk-low"]().deltas == (0,)
    assert len(mixed_families(0.3, 0.0)) == 2


# ---------------------------------------------------------------- dataset

def test_row_count_and_header(tiny_file, tiny_cfg):
    lines = tiny_file.read_text().splitlines()
    assert len(lines) == 1 + 6 * len(tiny_cfg.deltas)
    head = json.loads(lines[0])
    assert head["format_version"] == FORMAT_VERSION
    assert head["config_hash"] == config_hash(tiny_cfg)
    assert head["tool_version"] == __version__
    assert len(head["feature_names"]) == 20 and head["deltas"] == [0, 10]
    assert head["overhead_bits"] == [28, 64, 108, 193, 516]


def test_labels_in_range(tiny_file):
    ds = read_dataset(tiny_file)
    assert ds.labels.min() >= 0 and ds.labels.max() <= 1
    assert ds.features.shape == (12, 20)
    assert set(ds.deltas.tolist()) == {0, 10}
    assert np.all(ds.features[:, 0] == 1.0)


def test_byte_identical_rebuild(tiny_file, tiny_cfg, tmp_path):
    again = tmp_path / "again.jsonl"
    build_dataset(tiny_cfg, again)
    assert again.read_bytes() == tiny_file.read_bytes()


def test_rows_regenerate_from_seed(tiny_file, tiny_cfg):
    from cbadapt.assistance import assemble_features, compute_report
    from cbadapt.channel import generate_channel
    ds = read_dataset(tiny_file)
    seed, sid, sc = tiny_cfg.realization(int(ds.indices[2]))
    assert int(ds.seeds[2]) == seed and ds.scenario_ids[2] == sid
    feats = assemble_features(compute_report(generate_channel(tiny_cfg.geometry, sc, seed), 8, 4))
    np.testing.assert_array_equal(feats, ds.features[2])


def test_views(tiny_file):
    ds = read_dataset(tiny_file)
    d10 = ds.for_delta(10)
    assert len(d10) == 6 and np.all(d10.deltas == 10)
    sf = d10.with_groups("SDCP+FDCP")
    assert sf.features.shape[1] == 16 and not any(n.startswith("tdcp") for n in sf.feature_names)
    named = ds.select_named(["tdcp[1]", "sdcp[0,1]"])
    np.testing.assert_array_equal(named.features[:, 0], ds.features[:, ds.feature_names.index("tdcp[1]")])
    with pytest.raises(ConfigError):
        ds.select_named(["nope"])
    with pytest.raises(ConfigError):
        ds.for_delta(3)
    with pytest.raises(ConfigError):
        ds.part("train")


def test_split_by_realization():
    idx = np.repeat(np.arange(100), 2)
    tags = split_tags(idx, (0.7, 0.15, 0.15), 0)
    assert np.all(tags[0::2] == tags[1::2])
    counts = {t: int(np.sum(tags[0::2] == t)) for t in ("train", "validation", "test")}
    assert counts == {"train": 70, "validation": 15, "test": 15}
    np.testing.assert_array_equal(tags, split_tags(idx, (0.7, 0.15, 0.15), 0))


def corrupt(tiny_file, tmp_path, lineno, text):
    lines = tiny_file.read_text().splitlines()
    lines[lineno - 1] = text
    p = tmp_path / "bad.jsonl"
    p.write_text("\n".join(lines) + "\n")
    return p


def test_parse_error_line_numbers(tiny_file, tmp_path):
    with pytest.raises(DataFormatError, match=r"bad\.jsonl:4:") as err:
        read_dataset(corrupt(tiny_file, tmp_path, 4, "{not json"))
    assert err.value.line == 4 and err.value.exit_code == 2
    with pytest.raises(DataFormatError, match=":3:"):
        read_dataset(corrupt(tiny_file, tmp_path, 3, '{"features": [1], "labels": [], "seed": 1, '
                                                     '"scenario_id": "a", "delta": 0}'))
    with pytest.raises(DataFormatError, match=":2:"):
        read_dataset(corrupt(tiny_file, tmp_path, 2, '{"features": []}'))


def test_version_mismatch(tiny_file, tmp_path):
    head = json.loads(tiny_file.read_text().splitlines()[0])
    head["format_version"] = FORMAT_VERSION + 1
    with pytest.raises(DataFormatError, match="version"):
        read_dataset(corrupt(tiny_file, tmp_path, 1, json.dumps(head)))
    head["format"] = "other"
    with pytest.raises(DataFormatError):
        read_dataset(corrupt(tiny_file, tmp_path, 1, json.dumps(head)))


def test_empty_and_missing(tmp_path):
    (tmp_path / "e.jsonl").write_text("")
    with pytest.raises(DataFormatError):
        read_dataset(tmp_path / "e.jsonl")
    with pytest.raises(ConfigError):
        read_dataset(tmp_path / "absent.jsonl")
