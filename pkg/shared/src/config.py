"""Run configuration: one flat JSON document per command invocation."""
from __future__ import annotations

from dataclasses import dataclass, field, fields, replace
import json
from pathlib import Path
from typing import Any

from .errors import ConfigError, DiffusionError
from .oracle import GaussianMixture
from .samplers import COMBINE_RULES, METHODS, SamplerConfig
from .schedules import MSigmaRelation, Schedule, SigmaCurve
from .toy_data import DATASET_KINDS

MODEL_SOURCES = ("oracle", "checkpoint")
DIRECTIONS = ("encode", "decode")
WEIGHTINGS = ("sigma2", "g2", "unit")

# JSON keys that are not valid Python identifiers
_KEY_ALIASES = {"lambda": "lam"}

_INT_KEYS = ("steps", "seed", "batch", "chunk", "n_data", "epochs", "batch_size", "grid_size")
_FLOAT_KEYS = ("s", "a", "b", "rtol", "atol", "lr", "ema_rate", "lam", "t_level")
_OPTIONAL_FLOAT_KEYS = ("gamma", "eta", "t_mid")
_STR_KEYS = ("curve", "relation", "method", "model", "classifier", "dataset", "weighting", "combine", "direction")


def _is_int(value: Any) -> bool:
    return isinstance(value, int) and not isinstance(value, bool)


def _is_float(value: Any) -> bool:
    return isinstance(value, (int, float)) and not isinstance(value, bool)


def _default_mixture() -> list[dict]:
    return [{"weight": 1.0, "mean": [0.0], "var": [1.0], "class": 0}]


@dataclass(frozen=True)
class RunConfig:
    # schedule
    curve: str = "cos"
    s: float = 0.006
    a: float = 0.1
    b: float = 9.95
    relation: str = "vp"
    gamma: float | None = None
    eta: float | None = None
    # sampler
    method: str = "sde"
    steps: int = 400
    rtol: float = 1e-5
    atol: float = 1e-5
    # model source
    model: str = "oracle"
    mixture: list = field(default_factory=_default_mixture)
    checkpoint: str | None = None
    # guidance
    classifier: str = "oracle"
    classifier_checkpoint: str | None = None
    classes: list | None = None
    class_weights: list | None = None
    # batching
    seed: int = 0
    batch: int = 1000
    chunk: int = 1000
    # training
    dataset: str = "mixture2d"
    n_data: int = 4000
    epochs: int = 10
    batch_size: int = 128
    hidden: list = field(default_factory=lambda: [128, 128, 128])
    weighting: str = "sigma2"
    lr: float = 2e-4
    ema_rate: float = 0.999
    # command inputs
    input: str | None = None
    input2: str | None = None
    mask: str | None = None
    lam: float = 0.5
    t_mid: float | None = None
    t_level: float = 0.5
    combine: str = "spherical"
    shared_noise: bool = True
    direction: str = "encode"
    grid_size: int = 256

    def __post_init__(self) -> None:
        for key in _INT_KEYS:
            if not _is_int(getattr(self, key)):
                raise ConfigError(f"{key}: expected an integer, got {getattr(self, key)!r}")
        for key in _FLOAT_KEYS + _OPTIONAL_FLOAT_KEYS:
            value = getattr(self, key)
            if value is None and key in _OPTIONAL_FLOAT_KEYS:
                continue
            if not _is_float(value):
                label = "lambda" if key == "lam" else key
                raise ConfigError(f"{label}: expected a number, got {value!r}")
        for key in _STR_KEYS:
            if not isinstance(getattr(self, key), str):
                raise ConfigError(f"{key}: expected a string, got {getattr(self, key)!r}")
        if not isinstance(self.shared_noise, bool):
            raise ConfigError(f"shared_noise: expected true or false, got {self.shared_noise!r}")
        checks = [
            ("method", self.method, METHODS),
            ("model", self.model, MODEL_SOURCES),
            ("classifier", self.classifier, MODEL_SOURCES),
            ("dataset", self.dataset, DATASET_KINDS),
            ("weighting", self.weighting, WEIGHTINGS),
            ("combine", self.combine, COMBINE_RULES),
            ("direction", self.direction, DIRECTIONS),
        ]
        for key, value, allowed in checks:
            if value not in allowed:
                raise ConfigError(f"{key}: {value!r} is not one of {allowed}")
        for key in ("steps", "batch", "chunk", "n_data", "batch_size", "grid_size"):
            if getattr(self, key) < 1:
                raise ConfigError(f"{key}: must be >= 1, got {getattr(self, key)}")
        if self.epochs < 0:
            raise ConfigError(f"epochs: must be >= 0, got {self.epochs}")
        if self.model == "checkpoint" and not self.checkpoint:
            raise ConfigError("checkpoint: required when model is 'checkpoint'")
        if self.model == "oracle" and not self.mixture:
            raise ConfigError("mixture: required when model is 'oracle'")
        if self.classifier == "checkpoint" and not self.classifier_checkpoint:
            raise ConfigError("classifier_checkpoint: required when classifier is 'checkpoint'")
        # surface bad schedule keys early, naming the key
        self.schedule()

    @classmethod
    def from_dict(cls, payload: dict[str, Any]) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        kwargs = {}
        for key, value in payload.items():
            name = _KEY_ALIASES.get(key, key)
            if key in _KEY_ALIASES.values() or name not in known:
                raise ConfigError(f"unknown config key {key!r}")
            kwargs[name] = value
        try:
            return cls(**kwargs)
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from None

    @classmethod
    def from_file(cls, path: str | Path) -> "RunConfig":
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"config file {path} does not exist")
        try:
            payload = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from None
        if not isinstance(payload, dict):
            raise ConfigError(f"{path}: top level must be a JSON object")
        return cls.from_dict(payload)

    def to_dict(self) -> dict[str, Any]:
        inverse = {v: k for k, v in _KEY_ALIASES.items()}
        return {inverse.get(f.name, f.name): getattr(self, f.name) for f in fields(self)}

    def with_overrides(self, **changes) -> "RunConfig":
        return replace(self, **{k: v for k, v in changes.items() if v is not None})

    def schedule(self) -> Schedule:
        try:
            curve = SigmaCurve(self.curve, self.s, self.a, self.b)
        except DiffusionError as exc:
            raise ConfigError(f"curve: {exc}") from None
        if self.relation.strip().lower() != "custom":
            for key in ("gamma", "eta"):
                if getattr(self, key) is not None:
                    raise ConfigError(f"{key}: only used when relation is 'custom', got relation {self.relation!r}")
        try:
            relation = MSigmaRelation.from_name(self.relation, self.gamma, self.eta)
        except DiffusionError as exc:
            raise ConfigError(f"relation: {exc}") from None
        try:
            return Schedule(curve, relation)
        except DiffusionError as exc:
            raise ConfigError(f"schedule: {exc}") from None

    def sampler_config(self) -> SamplerConfig:
        try:
            return SamplerConfig(self.schedule(), self.method, self.steps, self.rtol, self.atol, self.seed)
        except DiffusionError as exc:
            raise ConfigError(f"sampler: {exc}") from None

    def mixture_model(self) -> GaussianMixture:
        try:
            return GaussianMixture.from_spec(self.mixture)
        except DiffusionError as exc:
            raise ConfigError(f"mixture: {exc}") from None
