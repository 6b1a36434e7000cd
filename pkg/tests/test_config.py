from __future__ import annotations

import json

import pytest

from shared.src.config import RunConfig
from shared.src.errors import ConfigError


def test_defaults_build_a_vp_schedule() -> None:
    cfg = RunConfig()
    sched = cfg.schedule()
    assert sched.relation.variant == "vp"
    assert cfg.sampler_config().steps == 400
    assert cfg.mixture_model().dim == 1


def test_lambda_key_maps_to_field() -> None:
    cfg = RunConfig.from_dict({"lambda": 0.25})
    assert cfg.lam == 0.25
    assert cfg.to_dict()["lambda"] == 0.25
    assert "lam" not in cfg.to_dict()
    with pytest.raises(ConfigError):
        RunConfig.from_dict({"lam": 0.25})


def test_unknown_key_is_named() -> None:
    with pytest.raises(ConfigError, match="temperature"):
        RunConfig.from_dict({"temperature": 1.0})


def test_round_trip_through_dict() -> None:
    cfg = RunConfig.from_dict({"relation": "subvp", "method": "ddim", "steps": 50, "seed": 3})
    assert RunConfig.from_dict(cfg.to_dict()) == cfg


@pytest.mark.parametrize(
    ("payload", "key"),
    [
        ({"relation": "vpp"}, "relation"),
        ({"curve": "linear"}, "curve"),
        ({"method": "heun"}, "method"),
        ({"steps": 0}, "steps"),
        ({"model": "checkpoint"}, "checkpoint"),
        ({"relation": "custom", "gamma": 2.0}, "relation"),
    ],
)
def test_invalid_values_name_their_key(payload: dict, key: str) -> None:
    with pytest.raises(ConfigError, match=key):
        RunConfig.from_dict(payload)


def test_malformed_mixture_surfaces_as_config_error() -> None:
    cfg = RunConfig.from_dict({"mixture": [{"weight": 0.5, "mean": [0.0], "var": [1.0]}]})
    with pytest.raises(ConfigError, match="mixture"):
        cfg.mixture_model()


def test_from_file(tmp_path) -> None:
    path = tmp_path / "run.json"
    path.write_text(json.dumps({"seed": 9, "batch": 10}), encoding="utf-8")
    cfg = RunConfig.from_file(path)
    assert cfg.seed == 9 and cfg.batch == 10
    assert cfg.with_overrides(seed=None).seed == 9
    assert cfg.with_overrides(seed=2).seed == 2
    (tmp_path / "bad.json").write_text("{not json", encoding="utf-8")
    with pytest.raises(ConfigError):
        RunConfig.from_file(tmp_path / "bad.json")
    with pytest.raises(ConfigError):
        RunConfig.from_file(tmp_path / "missing.json")


@pytest.mark.parametrize(
    ("payload", "key"),
    [
        ({"steps": "ten"}, "steps"),
        ({"steps": 2.5}, "steps"),
        ({"seed": True}, "seed"),
        ({"lr": "fast"}, "lr"),
        ({"lambda": None}, "lambda"),
        ({"relation": 3}, "relation"),
        ({"shared_noise": "yes"}, "shared_noise"),
    ],
)
def test_wrongly_typed_values_name_their_key(payload: dict, key: str) -> None:
    with pytest.raises(ConfigError, match=key):
        RunConfig.from_dict(payload)


@pytest.mark.parametrize("key", ["gamma", "eta"])
def test_custom_exponents_rejected_for_named_relations(key: str) -> None:
    with pytest.raises(ConfigError, match=key):
        RunConfig.from_dict({"relation": "subvp", key: 1.0})
    cfg = RunConfig.from_dict({"relation": "custom", "gamma": 2.0, "eta": 0.5})
    assert cfg.schedule().relation.variant == "custom"
