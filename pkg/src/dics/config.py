"""Run configuration and the flat ``key = value`` config-file format.

Training keys are the :class:`TrainConfig` field names (``lambda`` is accepted
for ``lam``); synthetic-data keys carry a ``data.`` prefix, e.g.
``data.confounder_correlation = 0.9``.  Unknown keys are errors.
"""
from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from .data import SyntheticSpec

ALIASES = {"lambda": "lam", "tau": "temperature", "n_d": "batch_per_domain"}


@dataclass
class TrainConfig:
    alpha: float = 1.0
    beta: float = 1.0
    temperature: float = 0.07
    lam: float = 0.999
    queue_multiple: int = 4
    batch_per_domain: int = 8
    epochs: int = 20
    lr: float = 0.05
    proto_lr: float = 0.1
    proto_steps: int = 1
    prototype_init: str = "mean"
    hidden_dims: tuple[int, ...] = (32,)
    feature_dim: int = 16
    activation: str = "tanh"
    val_fraction: float = 0.2
    seed: int = 0
    # None: synthetic data seeded with ``seed``
    data_seed: int | None = None
    csv_path: str | None = None
    target_domain: int = -1
    data: SyntheticSpec = field(default_factory=SyntheticSpec)

    def validate(self) -> None:
        if self.alpha < 0 or self.beta < 0:
            raise ValueError("alpha and beta must be non-negative")
        if not 0.0 <= self.lam <= 1.0:
            raise ValueError("lambda must lie in [0, 1]")
        if self.queue_multiple < 1:
            raise ValueError("queue_multiple must be at least 1")
        if self.temperature <= 0:
            raise ValueError("temperature must be positive")
        if self.batch_per_domain < 1 or self.epochs < 0 or self.proto_steps < 0:
            raise ValueError("batch_per_domain >= 1, epochs >= 0 and proto_steps >= 0 required")
        if self.prototype_init not in ("mean", "zero"):
            raise ValueError("prototype_init must be 'mean' or 'zero'")
        if not 0.0 < self.val_fraction < 1.0:
            raise ValueError("val_fraction must lie in (0, 1)")
        if self.csv_path is None:
            self.data_spec().validate()

    def data_spec(self) -> SyntheticSpec:
        seed = self.seed if self.data_seed is None else self.data_seed
        return dataclasses.replace(self.data, seed=seed, target_domain=self.target_domain)

    def replace(self, **kw) -> "TrainConfig":
        return dataclasses.replace(self, **kw)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["hidden_dims"] = list(self.hidden_dims)
        return d

    def digest(self) -> str:
        d = self.to_dict()
        d.pop("seed")
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()[:10]

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        d = dict(d)
        data = SyntheticSpec(**d.pop("data", {}))
        if "hidden_dims" in d:
            d["hidden_dims"] = tuple(d["hidden_dims"])
        return cls(data=data, **d)


def _convert(raw: str, typ: str, key: str):
    raw = raw.strip()
    typ = typ.replace(" ", "")
    try:
        if typ in ("int",):
            return int(raw)
        if typ in ("float",):
            return float(raw)
        if typ.startswith("int|None"):
            return None if raw.lower() in ("none", "") else int(raw)
        if typ.startswith("str|None"):
            return None if raw.lower() in ("none", "") else raw
        if typ.startswith("tuple[int"):
            return tuple(int(v) for v in raw.replace(",", " ").split())
        if typ == "str":
            return raw
    except ValueError:
        raise ValueError(f"bad value for {key!r}: {raw!r}") from None
    raise TypeError(f"unsupported field type {typ} for {key!r}")


def set_value(cfg: TrainConfig, key: str, raw: str) -> TrainConfig:
    key = key.strip()
    if key.startswith("data."):
        sub = key[5:]
        types = {f.name: f.type for f in fields(SyntheticSpec)}
        if sub not in types:
            raise KeyError(f"unknown config key {key!r}")
        return cfg.replace(data=dataclasses.replace(cfg.data, **{sub: _convert(raw, types[sub], key)}))
    name = ALIASES.get(key, key)
    types = {f.name: f.type for f in fields(TrainConfig) if f.name != "data"}
    if name not in types:
        raise KeyError(f"unknown config key {key!r}")
    return cfg.replace(**{name: _convert(raw, types[name], key)})


def parse_config_text(text: str, base: TrainConfig | None = None) -> TrainConfig:
    cfg = base or TrainConfig()
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected 'key = value'")
        key, raw = line.split("=", 1)
        try:
            cfg = set_value(cfg, key, raw)
        except (KeyError, ValueError) as exc:
            raise ValueError(f"line {lineno}: {exc}") from None
    return cfg


def load_config(path, overrides=()) -> TrainConfig:
    cfg = parse_config_text(Path(path).read_text()) if path else TrainConfig()
    return apply_overrides(cfg, overrides)


def apply_overrides(cfg: TrainConfig, overrides) -> TrainConfig:
    for item in overrides:
        if "=" not in item:
            raise ValueError(f"override {item!r} is not key=value")
        key, raw = item.split("=", 1)
        cfg = set_value(cfg, key, raw)
    return cfg


def dump_config_text(cfg: TrainConfig) -> str:
    lines = []
    for f in fields(TrainConfig):
        if f.name == "data":
            continue
        v = getattr(cfg, f.name)
        if f.name == "hidden_dims":
            v = ",".join(str(h) for h in v)
        lines.append(f"{'lambda' if f.name == 'lam' else f.name} = {v}")
    for f in fields(SyntheticSpec):
        if f.name in ("seed", "target_domain"):
            continue
        lines.append(f"data.{f.name} = {getattr(cfg.data, f.name)}")
    return "\n".join(lines) + "\n"
