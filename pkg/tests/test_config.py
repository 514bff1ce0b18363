import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from filterlab.config import ExperimentConfig, RunManifest, apply_override, file_digest, load_config
from filterlab.errors import ConfigurationError


def test_defaults_validate_and_build():
    cfg = load_config()
    assert cfg.grid.M == 1024 and cfg.model.name == "bounded"
    assert cfg.build_model().name == "bounded"
    assert cfg.make_grid().fine_steps == 1024


@pytest.mark.parametrize(
    "override, field",
    [
        ("grid.M=-4", "grid.M"),
        ('grid.M="many"', "grid.M"),
        ("grid.M=1000", "grid.M"),
        ("N=0", "N"),
        ("grid.n_set=[8,4]", "grid.n_set"),
        ("checkpoints=[2.0]", "checkpoints"),
        ("checkpoints=[0.3]", "checkpoints"),
        ('model.name="nope"', "model.name"),
    ],
)
def test_invalid_values_name_their_field(override, field):
    with pytest.raises(ConfigurationError) as err:
        load_config(None, [override])
    assert err.value.field == field


def test_override_without_equals_is_rejected():
    with pytest.raises(ConfigurationError) as err:
        apply_override({}, "grid.M")
    assert err.value.field == "--set"


def test_overrides_parse_json_and_nest():
    raw = apply_override({}, "grid.n_set=[4, 8]")
    apply_override(raw, "model.params.eps=0.2")
    apply_override(raw, "out=somewhere")
    assert raw == {"grid": {"n_set": [4, 8]}, "model": {"params": {"eps": 0.2}}, "out": "somewhere"}


def test_file_then_overrides(tmp_path):
    p = tmp_path / "c.json"
    p.write_text(json.dumps({"N": 500, "grid": {"M": 256, "n_set": [4, 8]}}))
    cfg = load_config(p, ["N=700"])
    assert cfg.N == 700 and cfg.grid.M == 256 and cfg.grid.n_set == [4, 8]


def test_broken_json_is_a_configuration_error(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text("{not json")
    with pytest.raises(ConfigurationError):
        load_config(p)
    with pytest.raises(ConfigurationError):
        load_config(tmp_path / "missing.json")


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 10**6), st.integers(0, 2**32))
def test_digest_tracks_content(N, seed):
    a = load_config(None, [f"N={N}", f"seed={seed}"])
    b = ExperimentConfig.from_dict(a.to_dict())
    assert a.digest() == b.digest()
    c = load_config(None, [f"N={N + 1}", f"seed={seed}"])
    assert a.digest() != c.digest()


def test_manifest_records_outputs_and_separates_timings(tmp_path):
    f = tmp_path / "x.csv"
    f.write_text("a\n1\n")
    cfg = load_config()
    man = RunManifest("demo", cfg.digest(), cfg.seed, config=cfg.to_dict())
    man.record(f)
    man.write(tmp_path, {"demo": 1.5})
    data = json.loads((tmp_path / "manifest.json").read_text())
    assert data["outputs"] == {"x.csv": file_digest(f)}
    assert data["config_hash"] == cfg.digest()
    assert "demo" not in json.dumps(data["outputs"]) and "1.5" not in (tmp_path / "manifest.json").read_text()
    assert json.loads((tmp_path / "timings.json").read_text()) == {"demo": 1.5}
