from pathlib import Path

import pytest

from ctpm.config import ConfigError, config_from_dict, load_config

CONFIGS = Path(__file__).resolve().parents[1] / "configs"

MINIMAL = {"data": {"synthetic": {"n_records": 500}}, "objective": {"form": "eq1_maximize"}}


def _with(**sections):
    out = {k: dict(v) if isinstance(v, dict) else v for k, v in MINIMAL.items()}
    out.update(sections)
    return out


@pytest.mark.parametrize("name", ["smoke.yaml", "synthetic_benchmark.yaml"])
def test_shipped_configs_load(name):
    cfg = load_config(CONFIGS / name)
    assert cfg.data.synthetic is not None
    assert cfg.base_dir == CONFIGS
    cfg.train_config()


def test_defaults_fill_in():
    cfg = config_from_dict(MINIMAL)
    assert cfg.training.restarts == 6
    assert cfg.split.ratios == [0.6, 0.2, 0.2]
    assert cfg.split_seed == cfg.seed == 0
    assert cfg.data.synthetic_config(cfg.seed).n_records == 500


@pytest.mark.parametrize("data", [
    {"bogus": 1},
    {"data": {"synthetic": {}, "extra": 1}},
    {"training": {"iterations": 10, "speed": 2}},
    {"data": {"synthetic": {"n_record": 5}}},
])
def test_unknown_keys_rejected(data):
    with pytest.raises(ConfigError, match="unknown"):
        config_from_dict(_with(**data))


@pytest.mark.parametrize("data", [
    {"data": {}},
    {"data": {"synthetic": {}, "table": {"path": "x.csv", "schema": {}}}},
    {"split": {"ratios": [0.5, 0.5]}},
    {"split": {"ratios": [0.7, 0.2, 0.2]}},
    {"model": {"policy_family": "gamma"}},
    {"model": {"sharpness": 0.0}},
    {"training": {"iterations": 0}},
    {"training": {"learning_rate": -1.0}},
    {"propensity": {"kind": "forest"}},
    {"propensity": {"clip_epsilon": 0.5}},
    {"evaluation": {"grid_step": 0.0}},
    {"evaluation": {"score_intensity": "mean"}},
    {"objective": {"form": "eq3"}},
    {"seed": "zero"},
    {"data": {"synthetic": {}, "subsample": 0.0}},
])
def test_invalid_values_rejected(data):
    with pytest.raises(ConfigError):
        config_from_dict(_with(**data))


def test_missing_data_section():
    with pytest.raises(ConfigError, match="data"):
        config_from_dict({"seed": 1})
    with pytest.raises(ConfigError):
        config_from_dict(["not", "a", "mapping"])


def test_unreadable_and_malformed_files(tmp_path):
    with pytest.raises(ConfigError, match="cannot read"):
        load_config(tmp_path / "missing.yaml")
    bad = tmp_path / "bad.yaml"
    bad.write_text("data: [unclosed\n")
    with pytest.raises(ConfigError, match="YAML"):
        load_config(bad)


def test_digest_and_run_dir(tmp_path):
    a = config_from_dict(MINIMAL, base_dir=tmp_path)
    b = config_from_dict(MINIMAL, base_dir=tmp_path / "elsewhere")
    assert a.digest() == b.digest()
    c = config_from_dict(_with(seed=1), base_dir=tmp_path)
    assert c.digest() != a.digest()
    assert a.run_dir() == tmp_path / "runs" / f"run-{a.digest()[:12]}"
    # explicit defaults hash like omitted ones
    d = config_from_dict(_with(training={"restarts": 6}), base_dir=tmp_path)
    assert d.digest() == a.digest()


def test_relative_paths_resolve_against_config_dir(tmp_path):
    cfg = config_from_dict(MINIMAL, base_dir=tmp_path)
    assert cfg.resolve("data.csv") == tmp_path / "data.csv"
    assert cfg.resolve("/abs/data.csv") == Path("/abs/data.csv")


def test_train_config_carries_model_and_seed():
    cfg = config_from_dict(_with(seed=7, model={"hidden_units": 5, "policy_family": "beta"}))
    tc = cfg.train_config()
    assert tc.seed == 7 and tc.hidden_units == 5 and tc.policy_family == "beta"
    assert cfg.objective_spec().form == "eq1_maximize"
