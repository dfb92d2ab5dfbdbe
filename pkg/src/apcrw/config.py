"""Experiment configuration: parsing, defaults and validation.

A configuration is a flat mapping (YAML or JSON file, optionally
overridden by command-line flags).  Model keys are shared by every
experiment; the remaining keys depend on ``kind``.  Every rejection raises
a subclass of :class:`ConfigError` that names the offending key.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

import yaml

KINDS = (
    "speed", "speed-curve", "coupling", "dyadic", "deviation", "ballisticity", "renewal",
    "stationarity", "kernel", "slt", "verify-conditions",
)

MODEL_DEFAULTS = {"rho": 1.0, "alpha": 0.5, "q": 0.6, "p_occ": 0.8, "p_vac": 0.3}
COMMON_DEFAULTS = {"seed": None, "replicas": None, "out": "results"}

KIND_DEFAULTS: dict[str, dict[str, Any]] = {
    "speed": {"L": None, "n": None, "replicas": 10_000},
    "speed-curve": {"L": None, "n": None, "rhos": [0.25, 0.5, 1.0, 1.5, 2.0], "replicas": 2000},
    "coupling": {"L": None, "n": None, "eps": 0.5, "f_exponent": 0.1, "failure_mode": "common",
                 "replicas": 200},
    "dyadic": {"L": None, "n": 2 ** 14, "eps": 0.2, "replicas": 10_000},
    "deviation": {"delta": 0.1, "ns": [2 ** 10, 2 ** 12, 2 ** 14], "v_hat": None, "speed_replicas": 2000,
                  "replicas": 20_000},
    "ballisticity": {"v_star": "auto", "Ks": [10, 20, 40], "N": 10_000, "replicas": 2000},
    "renewal": {"v_bar": "auto", "v_star": "auto", "T": None, "horizon": 2000, "box_multiplier": 4.0,
                "c": 1.0, "direct_replicas": 2000, "replicas": 60},
    "stationarity": {"t": 200, "interior": 500_000, "replicas": 2},
    "kernel": {"t": 100, "two_n": [2000, 8000], "lazy": True, "replicas": 1},
    "slt": {"eps": 0.2, "t": 400, "H": 4000, "ts": [100, 400, 1600], "endpoint_t": 50,
            "endpoint_runs": 100_000, "replicas": 1000},
    "verify-conditions": {"ells": [100, 200, 400], "eps": 0.25, "window": 2000, "horizon": 200,
                          "slt_t": 100, "slt_H": 1000, "sprinkler_rho": 0.5, "sprinkler_ell": 2,
                          "replicas": 1000},
}

# experiments that run the finite-range model and therefore need ``L``
FINITE_RANGE_KINDS = ("speed", "speed-curve", "coupling", "dyadic")


class ConfigError(ValueError):
    """Base class of configuration errors."""


class UnknownKeyError(ConfigError):
    pass


class MissingKeyError(ConfigError):
    pass


class OutOfRangeError(ConfigError):
    pass


class ConventionError(ConfigError):
    """Walker probabilities given in the wrong order."""


@dataclass
class ExperimentConfig:
    kind: str
    seed: int
    replicas: int
    out: str
    model: dict
    options: dict
    warnings: list[str] = field(default_factory=list)

    def snapshot(self) -> dict:
        """Plain mapping that parses back to the same configuration."""
        return {"kind": self.kind, "seed": self.seed, "replicas": self.replicas, "out": self.out,
                **self.model, **self.options}

    def __getitem__(self, key: str):
        if key in self.model:
            return self.model[key]
        return self.options[key]


def load_mapping(path: str | Path) -> dict:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    text = path.read_text()
    data = json.loads(text) if path.suffix == ".json" else yaml.safe_load(text)
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    return data


def _open_unit(name: str, v: float) -> None:
    if not 0 < v < 1:
        raise OutOfRangeError(f"{name}={v} must lie in (0, 1)")


def _positive_int(name: str, v) -> int:
    if isinstance(v, bool) or int(v) != v or int(v) < 1:
        raise OutOfRangeError(f"{name}={v} must be a positive integer")
    return int(v)


def _validate_model(m: dict) -> list[str]:
    notes = []
    if not (isinstance(m["rho"], (int, float)) and math.isfinite(m["rho"]) and m["rho"] > 0):
        raise OutOfRangeError(f"rho={m['rho']} must be a positive density")
    _open_unit("alpha", m["alpha"])
    _open_unit("q", m["q"])
    for k in ("p_occ", "p_vac"):
        if not 0 <= m[k] <= 1:
            raise OutOfRangeError(f"{k}={m[k]} must be a probability")
    if m["p_vac"] >= m["p_occ"]:
        raise ConventionError(
            f"p_vac={m['p_vac']} >= p_occ={m['p_occ']}: the walker convention is p_occ > p_vac "
            "(occupied sites push to the right more often); swap the values or reflect the model")
    if not 0 < m["p_vac"] < m["p_occ"] < 1:
        notes.append("walker probabilities on the boundary: ellipticity 0 < p_vac < p_occ < 1 fails")
    if m["q"] == 0.5:
        notes.append("symmetric environment (q = 1/2): particle drift is zero")
    return notes


def _validate_options(kind: str, o: dict, model: dict) -> list[str]:
    notes = []
    if kind in FINITE_RANGE_KINDS and o.get("L") is None:
        raise MissingKeyError(f"'{kind}' runs the finite-range model and needs the key 'L'")
    if kind == "dyadic":
        Ls = o["L"] if isinstance(o["L"], list) else [o["L"]]
        Ls = [_positive_int("L", L) for L in Ls]
        if len(Ls) < 2 or any(b != 2 * a for a, b in zip(Ls, Ls[1:])):
            raise OutOfRangeError(f"L={Ls} must be an increasing dyadic list of length >= 2")
        o["L"] = Ls
    elif kind in FINITE_RANGE_KINDS:
        o["L"] = _positive_int("L", o["L"])
    if kind in ("speed", "speed-curve", "coupling") and o.get("n") is None:
        o["n"] = o["L"] if kind != "coupling" else 2 * o["L"]
    if "n" in o and o["n"] is not None:
        o["n"] = _positive_int("n", o["n"])
    if kind == "coupling":
        if o["n"] % o["L"]:
            notes.append("n is not a multiple of L")
        f = o["L"] ** o["f_exponent"]
        if o["eps"] < f ** (-1 / 40):
            notes.append(f"eps={o['eps']} below f(L)^(-1/40)={f ** (-1 / 40):.4f}")
        if o["failure_mode"] not in ("common", "independent"):
            raise OutOfRangeError("failure_mode must be 'common' or 'independent'")
    for key in ("eps", "delta"):
        if key in o and not (0 < o[key] <= 1 if key == "delta" else o[key] > 0):
            raise OutOfRangeError(f"{key}={o[key]} out of range")
    if kind == "slt" and o["eps"] > model["rho"]:
        raise OutOfRangeError("slt needs eps <= rho")
    for key in ("rhos", "ns", "Ks", "ells", "two_n", "ts"):
        if key in o:
            if not isinstance(o[key], list) or not o[key]:
                raise OutOfRangeError(f"{key} must be a nonempty list")
            if any((not isinstance(v, (int, float))) or v <= 0 for v in o[key]):
                raise OutOfRangeError(f"{key} entries must be positive")
    if kind == "speed-curve":
        o["rhos"] = sorted(float(r) for r in o["rhos"])
    if kind == "renewal":
        for key in ("v_bar", "v_star"):
            if o[key] != "auto" and not -1 < float(o[key]) < 1:
                raise OutOfRangeError(f"{key}={o[key]} must be 'auto' or lie in (-1, 1)")
        if (o["v_bar"] == "auto") != (o["v_star"] == "auto"):
            raise ConfigError("give both v_bar and v_star, or neither ('auto')")
        drift = model["alpha"] * (2 * model["q"] - 1)
        if o["v_bar"] != "auto" and not drift < o["v_bar"] < o["v_star"]:
            notes.append(f"cone slopes outside drift={drift:.4f} < v_bar < v_star")
        o["horizon"] = _positive_int("horizon", o["horizon"])
        if o["horizon"] * 3 + 4 > 32767:
            raise OutOfRangeError("renewal horizon must be at most 10920")
    if kind == "ballisticity" and o["v_star"] != "auto" and not -1 < float(o["v_star"]) < 1:
        raise OutOfRangeError(f"v_star={o['v_star']} must be 'auto' or lie in (-1, 1)")
    return notes


def parse_config(source: str | Path | Mapping | None = None, kind: str | None = None,
                 **overrides) -> ExperimentConfig:
    """Validated configuration from a file path or mapping plus keyword overrides.

    ``None`` overrides are ignored, so unset command-line flags leave file
    values alone.  The seed is mandatory; nothing is seeded from the clock.
    """
    raw = dict(load_mapping(source) if isinstance(source, (str, Path)) else (source or {}))
    raw.update({k: v for k, v in overrides.items() if v is not None})
    file_kind = raw.pop("kind", None)
    kind = kind or file_kind
    if kind not in KINDS:
        raise ConfigError(f"unknown experiment kind {kind!r}; choose one of {', '.join(KINDS)}")
    allowed = {**MODEL_DEFAULTS, **COMMON_DEFAULTS, **KIND_DEFAULTS[kind]}
    unknown = sorted(set(raw) - set(allowed))
    if unknown:
        raise UnknownKeyError(f"unknown key(s) for '{kind}': {', '.join(unknown)}")
    merged = {**allowed, **raw}
    if merged["seed"] is None:
        raise MissingKeyError("missing key 'seed' (runs are never seeded from the clock)")
    if isinstance(merged["seed"], bool) or int(merged["seed"]) != merged["seed"] or merged["seed"] < 0:
        raise OutOfRangeError(f"seed={merged['seed']} must be a nonnegative integer")
    model = {k: (float(merged[k])) for k in MODEL_DEFAULTS}
    options = {k: merged[k] for k in KIND_DEFAULTS[kind] if k != "replicas"}
    notes = _validate_model(model) + _validate_options(kind, options, model)
    return ExperimentConfig(kind, int(merged["seed"]), _positive_int("replicas", merged["replicas"]),
                            str(merged["out"]), model, options, notes)


__all__ = [
    "ExperimentConfig", "parse_config", "load_mapping", "ConfigError", "UnknownKeyError",
    "MissingKeyError", "OutOfRangeError", "ConventionError", "KINDS", "KIND_DEFAULTS", "MODEL_DEFAULTS",
]
