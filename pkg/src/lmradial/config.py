"""Run configuration: parsing, validation and normalization.

A configuration is a mapping with the blocks ``problem``, ``mesh``,
``solver`` and ``tasks``.  YAML and JSON files are accepted.  Unknown keys
are rejected and every missing required key is reported by its dotted path.
"""
from __future__ import annotations

import copy
import json
from dataclasses import dataclass
from pathlib import Path

import yaml

from .mesh import RadialMesh, build_mesh
from .problem import (AffineWeight, AsymmetricPower, ConstantWeight, PowerGradientTerm,
                      ProblemSpec, PurePower)
from .verify import Tolerances

__all__ = ["ConfigError", "RunConfig", "load_config", "DEFAULTS"]


class ConfigError(ValueError):
    """Invalid configuration; ``key`` names the offending entry."""

    def __init__(self, message, key=None):
        super().__init__(message)
        self.key = key


REQUIRED = object()

NONLINEARITIES = {
    "pure_power": {"type": REQUIRED, "a": REQUIRED, "theta": REQUIRED},
    "asymmetric_power": {"type": REQUIRED, "a_plus": REQUIRED, "a_minus": REQUIRED,
                         "theta": REQUIRED},
}
WEIGHTS = {
    "constant": {"type": REQUIRED, "value": 1.0},
    "affine": {"type": REQUIRED, "c0": REQUIRED, "c1": REQUIRED},
}
GRADIENT_TERMS = {
    "power": {"type": REQUIRED, "a": REQUIRED, "theta": REQUIRED, "eta": REQUIRED},
}

DEFAULTS = {
    "problem": {
        "N": REQUIRED, "R": REQUIRED, "lambda": REQUIRED, "q": REQUIRED,
        "nonlinearity": REQUIRED,
        "weight_b": {"type": "constant", "value": 1.0},
        "branch": "positive",
        "gradient_term": None,
    },
    "mesh": {"M": 400, "grading": "uniform", "gamma": None},
    "solver": {
        "seed": 0,
        "random_starts": 2,
        "max_iter": 50000,
        "mp_nodes": 33,
        "scan_points": 512,
        "scan_workers": 1,
        "alpha": None,
        "sweep_factors": [0.5, 0.75, 0.9, 0.95],
        "sweep_bisect_iters": 3,
        "iteration": {"max_n": 40, "tol": 1e-8, "modes": ["global-min", "mountain-pass"],
                      "eta": None},
        "tolerances": {k: v for k, v in Tolerances().to_dict().items()},
    },
    "tasks": [],
}


def _merge(schema: dict, data, path: str):
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError(f"{path or 'config'} must be a mapping", path)
    for key in data:
        if key not in schema:
            raise ConfigError(f"unknown key {(path + '.' if path else '') + str(key)}",
                              (path + "." if path else "") + str(key))
    out = {}
    for key, default in schema.items():
        dotted = f"{path}.{key}" if path else key
        if key in data:
            val = data[key]
            if isinstance(default, dict) and key not in ("weight_b", "nonlinearity"):
                val = _merge(default, val, dotted)
            out[key] = val
        elif default is REQUIRED:
            raise ConfigError(f"missing required key {dotted}", dotted)
        else:
            out[key] = copy.deepcopy(default)
    return out


def _typed(block, families, path):
    if not isinstance(block, dict) or "type" not in block:
        raise ConfigError(f"missing required key {path}.type", f"{path}.type")
    kind = block["type"]
    if kind not in families:
        raise ConfigError(f"{path}.type must be one of {sorted(families)}", f"{path}.type")
    return _merge(families[kind], block, path)


@dataclass
class RunConfig:
    """Validated, normalized configuration."""

    data: dict

    @classmethod
    def from_mapping(cls, raw) -> "RunConfig":
        cfg = _merge(DEFAULTS, raw, "")
        pb = cfg["problem"]
        if pb["nonlinearity"] is REQUIRED:
            raise ConfigError("missing required key problem.nonlinearity", "problem.nonlinearity")
        pb["nonlinearity"] = _typed(pb["nonlinearity"], NONLINEARITIES, "problem.nonlinearity")
        pb["weight_b"] = _typed(pb["weight_b"], WEIGHTS, "problem.weight_b")
        if pb["gradient_term"] is not None:
            pb["gradient_term"] = _typed(pb["gradient_term"], GRADIENT_TERMS,
                                         "problem.gradient_term")
        tol = cfg["solver"]["tolerances"]
        for k, v in tol.items():
            tol[k] = float(v)
        out = cls(cfg)
        try:
            out.problem()
            out.mesh()
        except ConfigError:
            raise
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc
        if not isinstance(cfg["tasks"], list):
            raise ConfigError("tasks must be a list", "tasks")
        return out

    def to_dict(self) -> dict:
        return copy.deepcopy(self.data)

    def with_overrides(self, M=None, seed=None, lam=None) -> "RunConfig":
        d = self.to_dict()
        if M is not None:
            d["mesh"]["M"] = int(M)
        if seed is not None:
            d["solver"]["seed"] = int(seed)
        if lam is not None:
            d["problem"]["lambda"] = float(lam)
        return RunConfig.from_mapping(d)

    @property
    def tolerances(self) -> Tolerances:
        return Tolerances(**self.data["solver"]["tolerances"])

    def problem(self) -> ProblemSpec:
        pb = self.data["problem"]
        R = float(pb["R"])
        nl = pb["nonlinearity"]
        if nl["type"] == "pure_power":
            f = PurePower(float(nl["a"]), float(nl["theta"]))
        else:
            f = AsymmetricPower(float(nl["a_plus"]), float(nl["a_minus"]), float(nl["theta"]))
        wb = pb["weight_b"]
        if wb["type"] == "constant":
            b = ConstantWeight(float(wb["value"]))
        else:
            b = AffineWeight(float(wb["c0"]), float(wb["c1"]), R)
        gt = None
        if pb["gradient_term"] is not None:
            g = pb["gradient_term"]
            gt = PowerGradientTerm.build(float(g["a"]), float(g["theta"]), float(g["eta"]), R)
        N = pb["N"]
        if not isinstance(N, int) or isinstance(N, bool):
            raise ConfigError("problem.N must be an integer", "problem.N")
        return ProblemSpec(N, R, float(pb["lambda"]), float(pb["q"]), f, b,
                           str(pb["branch"]), gt)

    def mesh(self) -> RadialMesh:
        pb, mb = self.data["problem"], self.data["mesh"]
        return build_mesh(pb["N"], float(pb["R"]), int(mb["M"]), mb["grading"], mb["gamma"])


def load_config(path) -> RunConfig:
    """Read a YAML or JSON file (JSON is tried first for ``.json``)."""
    text = Path(path).read_text()
    try:
        if str(path).endswith(".json"):
            raw = json.loads(text)
        else:
            raw = yaml.safe_load(text)
    except (json.JSONDecodeError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc
    return RunConfig.from_mapping(raw)
