"""Experiment configuration: one JSON document with every numeric constant."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from .engine import DEFAULT_PROBES
from .narx import NarxConfig
from .radio import ConfigurationError, PlaygroundConfig

ALL_POLICIES = (
    "pn_only", "fm_baseline", "nn_no_mod_change",
    "nn_rel_change_2", "nn_rel_change_5", "nn_rel_change_10",
    "exhaustive_min", "exhaustive_max",
)


@dataclass(frozen=True)
class ExperimentConfig:
    playground: PlaygroundConfig = field(default_factory=PlaygroundConfig)
    narx: NarxConfig = field(default_factory=NarxConfig)
    amc_k: float = 1.0
    symbol_budget: float = 336_000.0
    loads: tuple = (0.16, 0.32, 0.48, 0.64)
    runs: int = 30
    policies: tuple = ALL_POLICIES
    master_seed: int = 2024
    noise_grid: tuple = tuple(float(v) for v in np.arange(-130.0, -59.0, 5.0))
    probe_powers: tuple = DEFAULT_PROBES
    train_samples: int = 4000
    exhaustive_cap: int = 100_000

    def __post_init__(self):
        if self.runs < 1:
            raise ConfigurationError("runs must be >= 1")
        n_bs = self.playground.n_bs
        for load in self.loads:
            n_p = load * n_bs
            if abs(n_p - round(n_p)) > 1e-9 or not 1 <= round(n_p) <= n_bs:
                raise ConfigurationError(f"load {load} does not give an integral primary link count")
        unknown = set(self.policies) - set(ALL_POLICIES)
        if unknown:
            raise ConfigurationError(f"unknown policies: {sorted(unknown)}")
        lo, hi = self.playground.sn_power_range
        probes = np.asarray(self.probe_powers, dtype=float)
        if len(probes) == 0 or np.any(np.diff(probes) <= 0) or probes[0] < lo or probes[-1] > hi:
            raise ConfigurationError("probe powers must be ascending and inside the SN power range")

    def n_primary(self, load: float) -> int:
        return int(round(load * self.playground.n_bs))

    @property
    def sigma2(self) -> float:
        return self.playground.noise_mw

    def to_dict(self) -> dict:
        out = {}
        for f in fields(self):
            value = getattr(self, f.name)
            if f.name == "playground":
                value = value.to_dict()
            elif f.name == "narx":
                value = asdict(value)
            elif isinstance(value, tuple):
                value = list(value)
            out[f.name] = value
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigurationError(f"unknown config keys: {sorted(unknown)}")
        kwargs = dict(data)
        if "playground" in kwargs:
            kwargs["playground"] = PlaygroundConfig.from_dict(kwargs["playground"])
        if "narx" in kwargs:
            narx_known = {f.name for f in fields(NarxConfig)}
            bad = set(kwargs["narx"]) - narx_known
            if bad:
                raise ConfigurationError(f"unknown narx keys: {sorted(bad)}")
            kwargs["narx"] = NarxConfig(**kwargs["narx"])
        for name in ("loads", "policies", "noise_grid", "probe_powers"):
            if name in kwargs:
                kwargs[name] = tuple(kwargs[name])
        return cls(**kwargs)

    def with_overrides(self, **changes) -> "ExperimentConfig":
        return replace(self, **{k: v for k, v in changes.items() if v is not None})


def load_config(path) -> ExperimentConfig:
    if path is None:
        return ExperimentConfig()
    try:
        data = json.loads(Path(path).read_text())
    except OSError as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"config {path} is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigurationError("config document must be a JSON object")
    return ExperimentConfig.from_dict(data)
