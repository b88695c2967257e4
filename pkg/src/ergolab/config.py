"""Run configuration: JSON schema, defaults, validation.

Every field has a documented default (see DEFAULTS); unknown keys are
rejected with a path-qualified message so typos cannot silently fall back to
defaults.
"""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass
from typing import Any

import numpy as np

from .eigensolver import SolverOptions
from .grid import Grid, build_grid
from .hamiltonian import (
    HamiltonianModel,
    PotentialSpec,
    constant_potential,
    drift_power,
    named_potential,
    power_beta_potential,
    pure_power,
    quadratic_power_potential,
)

SCENARIOS = (
    "solve",
    "exhaust",
    "lp",
    "fokker_planck",
    "simulate",
    "compare",
    "check",
    "full_verify",
)

DEFAULTS: dict[str, Any] = {
    "scenario": "solve",
    "seed": 12345,
    "grid": {"dim": 1, "radius": 4.0, "spacing": 0.05},
    "model": {
        "kind": "pure_power",
        "gamma": 1.5,
        "drift_name": "none",  # none | sine | constant
        "drift_amplitude": 0.0,
        "drift_vector": None,
    },
    "potential": {
        "family": "quadratic_power",  # quadratic_power | power_beta | constant | named
        "beta": 1.5,
        "value": 1.0,
        "name": "quartic_sine",
    },
    "solver": {
        "max_policy_iters": 200,
        "eval_tolerance": 1e-10,
        "lambda_tolerance": 1e-10,
        "boundary_mode": "state_constraint",
        "dirichlet_value": 1e6,
        "eps_grad": 1e-12,
        "control_tolerance": 1e-6,
    },
    "lp": {"xi_bound": None, "xi_count": 41},
    "sde": {
        "horizon": 200.0,
        "timestep": 1e-3,
        "n_paths": 8,
        "burn_in": None,  # default: horizon / 10
        "x0": None,  # default: origin
        "workers": 1,
        "safety_factor": 3.0,
    },
    "exhaust": {"radii": [3.0, 4.0, 5.0, 6.0], "boundary_mode": "dirichlet_big"},
    "compare": {"multipliers": [1.0, 0.5, 2.0]},
    "checks": {
        "lp_gap": 0.05,
        "fp_gap": 0.05,
        "sim_sigmas": 3.0,
        "sweep_size": 20,
        "sweep_floor": -1e-8,
        "identity_rel": 1e-6,
    },
    "output": {"directory": "out", "write_fields": True},
}


class ConfigError(ValueError):
    """Malformed configuration; message carries the offending key path."""


def _merge(defaults: dict, given: dict, path: str) -> dict:
    out = copy.deepcopy(defaults)
    for key, val in given.items():
        here = f"{path}.{key}" if path else key
        if key not in defaults:
            raise ConfigError(f"unknown key {here!r}")
        if isinstance(defaults[key], dict) and defaults[key]:
            if not isinstance(val, dict):
                raise ConfigError(f"{here!r} must be an object")
            out[key] = _merge(defaults[key], val, here)
        else:
            out[key] = val
    return out


def _require_number(cfg: dict, path: str, low=None, high=None, message=None):
    node = cfg
    for part in path.split("."):
        node = node[part]
    if not isinstance(node, (int, float)) or isinstance(node, bool):
        raise ConfigError(f"{path!r} must be a number")
    if low is not None and not node > low:
        raise ConfigError(message or f"{path!r} must exceed {low}")
    if high is not None and not node <= high:
        raise ConfigError(message or f"{path!r} must be <= {high}")


def _validate(cfg: dict) -> dict:
    if cfg["scenario"] not in SCENARIOS:
        raise ConfigError(f"'scenario' must be one of {SCENARIOS}, got {cfg['scenario']!r}")
    dim = cfg["grid"]["dim"]
    if dim not in (1, 2):
        raise ConfigError(
            f"'grid.dim' must be 1 or 2 (desk-scale limit), got {dim}"
        )
    _require_number(cfg, "grid.radius", low=0.0)
    _require_number(cfg, "grid.spacing", low=0.0)
    if cfg["grid"]["radius"] < 4 * cfg["grid"]["spacing"]:
        raise ConfigError("'grid.radius' must be >= 4 * grid.spacing")
    _require_number(cfg, "model.gamma", low=1.0, message="'model.gamma' must exceed 1")
    if cfg["model"]["kind"] not in ("pure_power", "drift_power"):
        raise ConfigError("'model.kind' must be pure_power or drift_power")
    fam = cfg["potential"]["family"]
    if fam not in ("quadratic_power", "power_beta", "constant", "named"):
        raise ConfigError(f"'potential.family' unknown: {fam!r}")
    if fam == "power_beta":
        _require_number(cfg, "potential.beta", low=0.0)
    mode = cfg["solver"]["boundary_mode"]
    if mode not in ("state_constraint", "dirichlet_big"):
        raise ConfigError(f"'solver.boundary_mode' unknown: {mode!r}")
    if cfg["sde"]["burn_in"] is not None:
        if cfg["sde"]["burn_in"] >= cfg["sde"]["horizon"]:
            raise ConfigError("'sde.burn_in' must be below 'sde.horizon'")
    radii = cfg["exhaust"]["radii"]
    if not (isinstance(radii, list) and len(radii) >= 1):
        raise ConfigError("'exhaust.radii' must be a non-empty list")
    if any(b <= a for a, b in zip(radii, radii[1:])):
        raise ConfigError("'exhaust.radii' must be strictly increasing")
    count = cfg["lp"]["xi_count"]
    if not isinstance(count, int) or count < 3 or count % 2 == 0:
        raise ConfigError("'lp.xi_count' must be an odd integer >= 3")
    return cfg


@dataclass(frozen=True)
class RunConfig:
    raw: dict

    def __getitem__(self, key: str):
        return self.raw[key]

    @property
    def scenario(self) -> str:
        return self.raw["scenario"]

    @property
    def seed(self) -> int:
        return int(self.raw["seed"])

    def grid(self) -> Grid:
        g = self.raw["grid"]
        return build_grid(g["dim"], g["radius"], g["spacing"])

    def model(self) -> HamiltonianModel:
        m = self.raw["model"]
        if m["kind"] == "pure_power":
            return pure_power(m["gamma"], self.raw["solver"]["eps_grad"])
        name = m["drift_name"]
        amp = float(m["drift_amplitude"])
        if name == "sine":
            fn = lambda x: amp * np.sin(x)
            bound = abs(amp) * np.sqrt(self.raw["grid"]["dim"])
        elif name == "constant":
            vec = m["drift_vector"]
            if vec is None:
                raise ConfigError("'model.drift_vector' required for constant drift")
            vec = np.asarray(vec, dtype=float)
            fn = lambda x: np.tile(vec, (x.shape[0], 1))
            bound = float(np.linalg.norm(vec))
        else:
            raise ConfigError(
                "'model.drift_name' must be sine or constant for drift_power"
            )
        return drift_power(m["gamma"], fn, bound, self.raw["solver"]["eps_grad"])

    def potential(self) -> PotentialSpec:
        p = self.raw["potential"]
        if p["family"] == "quadratic_power":
            return quadratic_power_potential(self.raw["model"]["gamma"])
        if p["family"] == "power_beta":
            return power_beta_potential(p["beta"])
        if p["family"] == "constant":
            return constant_potential(p["value"])
        return named_potential(p["name"])

    def solver_options(self, boundary_mode: str | None = None) -> SolverOptions:
        s = self.raw["solver"]
        return SolverOptions(
            max_policy_iters=int(s["max_policy_iters"]),
            eval_tolerance=float(s["eval_tolerance"]),
            lambda_tolerance=float(s["lambda_tolerance"]),
            boundary_mode=boundary_mode or s["boundary_mode"],
            dirichlet_value=float(s["dirichlet_value"]),
            eps_grad=float(s["eps_grad"]),
            control_tolerance=float(s["control_tolerance"]),
        )


def parse_config(text: str) -> RunConfig:
    """Parse and validate a JSON configuration document, applying defaults."""
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"malformed JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError("configuration root must be a JSON object")
    merged = _merge(DEFAULTS, data, "")
    return RunConfig(_validate(merged))


def apply_override(config: RunConfig, dotted: str, value: str) -> RunConfig:
    """Apply one --set key=value override with a dotted path; values are
    parsed as JSON when possible, else kept as strings."""
    node = copy.deepcopy(config.raw)
    parts = dotted.split(".")
    ref = node
    for p in parts[:-1]:
        if not isinstance(ref, dict) or p not in ref:
            raise ConfigError(f"unknown override path {dotted!r}")
        ref = ref[p]
    if not isinstance(ref, dict) or parts[-1] not in ref:
        raise ConfigError(f"unknown override path {dotted!r}")
    try:
        ref[parts[-1]] = json.loads(value)
    except json.JSONDecodeError:
        ref[parts[-1]] = value
    return RunConfig(_validate(node))
