import json

import pytest
from hypothesis import given, strategies as st

from apcrw.config import (ConfigError, ConventionError, KINDS, MissingKeyError, OutOfRangeError, UnknownKeyError,
                          load_mapping, parse_config)


def test_minimal_speed_config():
    cfg = parse_config({"kind": "speed", "seed": 1, "L": 16})
    assert cfg["n"] == 16
    assert cfg.replicas == 10_000 and cfg["rho"] == 1.0


@pytest.mark.parametrize("kind", [k for k in KINDS if k not in ("speed", "speed-curve", "coupling", "dyadic")])
def test_defaults_parse_for_every_kind(kind):
    assert parse_config({"seed": 0}, kind=kind).kind == kind


def test_reversed_walker_probabilities_name_the_convention():
    with pytest.raises(ConventionError, match="p_occ > p_vac"):
        parse_config({"kind": "speed", "seed": 1, "L": 4, "p_occ": 0.3, "p_vac": 0.9})


def test_missing_L():
    with pytest.raises(MissingKeyError, match="'L'"):
        parse_config({"kind": "speed", "seed": 1})


def test_missing_seed():
    with pytest.raises(MissingKeyError, match="seed"):
        parse_config({"kind": "kernel"})


def test_unknown_key_is_named():
    with pytest.raises(UnknownKeyError, match="colour"):
        parse_config({"kind": "kernel", "seed": 1, "colour": "red"})


def test_unknown_kind():
    with pytest.raises(ConfigError):
        parse_config({"kind": "nonsense", "seed": 1})


@given(st.sampled_from(["rho", "alpha", "q"]), st.sampled_from([-1.0, 0.0, 1.0, 2.0]))
def test_out_of_range_model(key, value):
    if key == "rho" and value > 0:
        return
    with pytest.raises(OutOfRangeError, match=key):
        parse_config({"kind": "kernel", "seed": 1, key: value})


def test_dyadic_list_required():
    assert parse_config({"kind": "dyadic", "seed": 1, "L": [8, 16, 32]})["L"] == [8, 16, 32]
    with pytest.raises(OutOfRangeError):
        parse_config({"kind": "dyadic", "seed": 1, "L": [8, 24]})


def test_coupling_regime_note():
    cfg = parse_config({"kind": "coupling", "seed": 1, "L": 16, "eps": 0.1})
    assert cfg["n"] == 32 and any("eps" in w for w in cfg.warnings)


def test_renewal_horizon_limit():
    with pytest.raises(OutOfRangeError):
        parse_config({"kind": "renewal", "seed": 1, "horizon": 20_000})


def test_overrides_beat_file(tmp_path):
    path = tmp_path / "c.yaml"
    path.write_text("kind: speed\nseed: 3\nL: 8\nreplicas: 50\n")
    cfg = parse_config(path, replicas=7, out=None)
    assert cfg.replicas == 7 and cfg.seed == 3


def test_snapshot_round_trip(tmp_path):
    cfg = parse_config({"kind": "speed-curve", "seed": 2, "L": 8, "rhos": [1.0, 0.5]})
    (tmp_path / "c.json").write_text(json.dumps(cfg.snapshot()))
    again = parse_config(load_mapping(tmp_path / "c.json"))
    assert again.snapshot() == cfg.snapshot() and again["rhos"] == [0.5, 1.0]
