"""Run configuration: a nested YAML mapping with defaults and CLI overrides."""
from __future__ import annotations

import copy
from dataclasses import dataclass

import yaml

from .errors import InputError
from .forecaster import DistanceWeights
from .pipeline import FMFConfig
from .tuning import WEIGHT_GRID, TuningSpec

DEFAULTS = {
    "seed": 0,
    "paths": {
        "load_csv": None,
        "weather_csv": None,
        "holidays": None,
        "output_dir": "fmf_out",
        "snapshot": None,
    },
    "model": {
        "q": 4,
        "d": None,
        "energy": 0.99,
        "r": 70,
        "replicates": 1000,
        "t": 2,
        "p": 2.0,
        "weights": [0.125] * 8,
        "svd_method": "exact",
    },
    "split": {"m1": 8760, "train_months": None},
    "weather": {"interpolate": True, "max_gap": 6},
    "tuning": {
        "train_months": 9,
        "val_months": 3,
        "val_hours": None,
        "q_values": [3, 4, 5],
        "d_values": [],
        "energies": [0.99],
        "r_values": [70, 80],
        "t_values": [2],
        "p_values": [],
        "objective": "mape",
        "strategy": "coordinate",
        "max_passes": 5,
        "free_weights": list(range(8)),
        "weight_grid": list(WEIGHT_GRID),
        "initial_weights": [0.125] * 8,
    },
    "sweep": {
        "windows": [1, 2, 4, 12, 24],
        "household_ks": None,
        "household_d": None,
        "household_replicates": 100,
    },
    "synth": {
        "n_consumers": 20,
        "n_hours": 12864,
        "noise": 0.3,
        "start": "2009-07-14T00",
    },
}


def _merge(base: dict, extra: dict, where="") -> dict:
    out = copy.deepcopy(base)
    for key, value in (extra or {}).items():
        if key not in out:
            raise InputError(f"unknown config key {where}{key!r}")
        if isinstance(out[key], dict) and isinstance(value, dict):
            out[key] = _merge(out[key], value, f"{where}{key}.")
        else:
            out[key] = value
    return out


def set_path(data: dict, dotted: str, value) -> None:
    keys = dotted.split(".")
    node = data
    for key in keys[:-1]:
        if not isinstance(node.get(key), dict):
            raise InputError(f"unknown config key {dotted!r}")
        node = node[key]
    if keys[-1] not in node:
        raise InputError(f"unknown config key {dotted!r}")
    node[keys[-1]] = value


def parse_assignment(text: str):
    """``key.path=value`` with the value parsed as YAML."""
    if "=" not in text:
        raise InputError(f"override {text!r} must look like key.path=value")
    key, raw = text.split("=", 1)
    return key.strip(), yaml.safe_load(raw)


@dataclass
class RunConfig:
    data: dict

    @classmethod
    def load(cls, path=None, overrides=()) -> "RunConfig":
        raw = {}
        if path:
            try:
                with open(path) as fh:
                    raw = yaml.safe_load(fh) or {}
            except FileNotFoundError:
                raise InputError(f"{path}: no such config file") from None
            except yaml.YAMLError as exc:
                raise InputError(f"{path}: invalid YAML ({exc})") from None
            if not isinstance(raw, dict):
                raise InputError(f"{path}: config must be a mapping")
        data = _merge(DEFAULTS, raw)
        for key, value in overrides:
            set_path(data, key, value)
        cfg = cls(data)
        cfg.validate()
        return cfg

    def __getitem__(self, key):
        return self.data[key]

    def validate(self):
        model = self.data["model"]
        if self.data["seed"] is None:
            raise InputError("seed is mandatory")
        if model["weights"] != "tune":
            self.weights()
        if int(model["q"]) < 1:
            raise InputError("model.q must be >= 1")
        if int(model["r"]) < 1 or int(model["t"]) < 1 or int(model["t"]) > int(model["r"]):
            raise InputError("need 1 <= model.t <= model.r")
        if int(model["replicates"]) < 1:
            raise InputError("model.replicates must be >= 1")
        if model["d"] is None and not 0 < float(model["energy"]) <= 1:
            raise InputError("model.energy must lie in (0, 1]")

    def weights(self) -> DistanceWeights:
        model = self.data["model"]
        w = model["weights"]
        if w == "tune":
            w = self.data["tuning"]["initial_weights"]
        return DistanceWeights(tuple(w), float(model["p"]))

    def fmf(self, m1: int | None = None) -> FMFConfig:
        model = self.data["model"]
        d = model["d"]
        return FMFConfig(
            q=int(model["q"]),
            m1=int(self.data["split"]["m1"] if m1 is None else m1),
            d=None if d is None else int(d),
            energy=None if d is not None else float(model["energy"]),
            r=int(model["r"]),
            replicates=int(model["replicates"]),
            t=int(model["t"]),
            weights=self.weights(),
            seed=int(self.data["seed"]),
            svd_method=model["svd_method"],
        )

    def tuning_spec(self) -> TuningSpec:
        tu = self.data["tuning"]
        return TuningSpec(
            train_months=int(tu["train_months"]),
            val_months=int(tu["val_months"]),
            val_hours=tu["val_hours"],
            weight_grid=tuple(float(x) for x in tu["weight_grid"]),
            initial_weights=tuple(float(x) for x in tu["initial_weights"]),
            free_weights=tuple(int(x) for x in tu["free_weights"]),
            strategy=tu["strategy"],
            max_passes=int(tu["max_passes"]),
            q_values=tuple(int(x) for x in tu["q_values"]),
            d_values=tuple(int(x) for x in tu["d_values"]),
            energies=tuple(float(x) for x in tu["energies"]),
            r_values=tuple(int(x) for x in tu["r_values"]),
            t_values=tuple(int(x) for x in tu["t_values"]),
            p_values=tuple(float(x) for x in tu["p_values"]),
            objective=tu["objective"],
        )

    def dump(self, path) -> None:
        with open(path, "w") as fh:
            yaml.safe_dump(_plain(self.data), fh, sort_keys=True)


def _plain(node):
    """Convert numpy scalars and tuples into YAML-safe builtins."""
    if isinstance(node, dict):
        return {k: _plain(v) for k, v in node.items()}
    if isinstance(node, (list, tuple)):
        return [_plain(v) for v in node]
    if hasattr(node, "item"):
        return node.item()
    return node
