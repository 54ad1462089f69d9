"""Declarative run configuration: parsing, validation and YAML round-trip.

A configuration document looks like::

    schema_version: 1
    subcommand: criterion
    params:
      n: 4
      k: 2
      p_list: [2.5, 2.7, 2.85, 2.95]

Validation fills in defaults and collects every violation before raising,
so one failed parse reports all problems in the document at once.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .cartesian import MAX_CELLS_PER_AXIS
from .parabolic import EvolutionConfig
from .stationary import DEFAULT_P_MARGIN

SCHEMA_VERSION = 1
SUBCOMMANDS = ("limit", "stationary", "spectrum", "criterion", "evolve", "sweep-theta",
               "cartesian", "study")
REQUIRED = object()


class ConfigError(ValueError):
    """All violations found in a configuration document."""

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


# field kinds: "int", "float", "bool", "str", "floats", "ints", "float3", "opt_float"
_EVOLUTION = {
    "horizon": ("float", 200.0),
    "sup_cap": ("float", 1e6),
    "decay_floor": ("float", 1e-3),
    "dt_init": ("float", 1e-3),
    "dt_max": ("float", 1.0),
    "reaction_fraction": ("float", 0.05),
    "stationary_check_time": ("float", 1.0),
    "drift_tol": ("float", 1e-4),
    "max_steps": ("int", 500_000),
    "n_nodes": ("int", 4097),
}
_RADIAL = {
    "n": ("int", REQUIRED),
    "k": ("int", REQUIRED),
}

SCHEMAS = {
    "limit": {
        "n_list": ("ints", REQUIRED),
        "trunc_radius": ("float", 50.0),
        "n_nodes": ("int", 2049),
        "extrapolate": ("bool", True),
        "out": ("opt_str", None),
    },
    "stationary": {
        **_RADIAL,
        "p_list": ("floats", REQUIRED),
        "n_nodes": ("int", 4097),
        "p_margin": ("float", DEFAULT_P_MARGIN),
        "cluster_strength": ("opt_float", None),
        "tail": ("int", 3),
        "out": ("opt_str", None),
    },
    "spectrum": {
        **_RADIAL,
        "p_list": ("floats", REQUIRED),
        "n_nodes": ("int", 4097),
        "r_cmp": ("float", 20.0),
        "tail": ("int", 3),
        "out": ("opt_str", None),
    },
    "criterion": {
        **_RADIAL,
        "p_list": ("floats", REQUIRED),
        "n_nodes": ("int", 4097),
        "out": ("opt_str", None),
    },
    "evolve": {
        **_RADIAL,
        "p": ("float", REQUIRED),
        "theta": ("float", REQUIRED),
        **_EVOLUTION,
        "out": ("opt_str", None),
    },
    "sweep-theta": {
        **_RADIAL,
        "p": ("float", REQUIRED),
        "theta_list": ("floats", REQUIRED),
        "refine_check": ("bool", False),
        **_EVOLUTION,
        "out": ("opt_str", None),
    },
    "cartesian": {
        "p": ("float", REQUIRED),
        "domain": ("str", "cube"),
        "voxel_file": ("opt_str", None),
        "cells": ("int", 21),
        "coarse_cells": ("opt_int", None),
        "mu_plus": ("float", 0.1),
        "mu_minus": ("float", 0.1),
        "offset": ("float", 0.25),
        "amplitude": ("float", 1.0),
        "center": ("opt_float3", None),
        "tol": ("float", 1e-10),
        "max_iter": ("int", 60),
        "out": ("opt_str", None),
    },
    "study": {
        **_RADIAL,
        "p_list": ("floats", REQUIRED),
        "theta_list": ("floats", [0.9, 1.0, 1.1]),
        "evolve_p": ("opt_float", None),
        "r_cmp": ("float", 20.0),
        "tail": ("int", 3),
        **_EVOLUTION,
        "out": ("opt_str", None),
    },
}


@dataclass(frozen=True)
class RunConfig:
    subcommand: str
    params: dict = field(default_factory=dict)
    schema_version: int = SCHEMA_VERSION

    def serialize(self) -> str:
        return serialize(self)

    @property
    def digest(self) -> str:
        """sha256 of the canonical serialization."""
        return hashlib.sha256(serialize(self).encode()).hexdigest()


def serialize(config: RunConfig) -> str:
    doc = {
        "schema_version": config.schema_version,
        "subcommand": config.subcommand,
        "params": dict(config.params),
    }
    return yaml.safe_dump(doc, sort_keys=True, default_flow_style=None)


def load_config(path, subcommand: str | None = None) -> RunConfig:
    return parse_and_validate(Path(path).read_text(), subcommand)


def parse_and_validate(text: str, subcommand: str | None = None) -> RunConfig:
    """Parse a YAML document and validate it against the subcommand's schema.

    ``subcommand`` comes from the command line; the document may repeat it
    but must not contradict it.  Raises :class:`ConfigError` listing every
    violation.
    """
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError([f"malformed document: {exc}"]) from exc
    if doc is None:
        doc = {}
    if not isinstance(doc, dict):
        raise ConfigError(["document must be a mapping"])
    errors = []
    unknown = set(doc) - {"schema_version", "subcommand", "params"}
    errors += [f"unknown top-level key '{k}'" for k in sorted(map(str, unknown))]
    version = doc.get("schema_version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        errors.append(f"schema_version must be {SCHEMA_VERSION}, got {version!r}")
    name = doc.get("subcommand", subcommand)
    if subcommand is not None and name != subcommand:
        errors.append(f"document is for subcommand '{name}', not '{subcommand}'")
    if name not in SUBCOMMANDS:
        raise ConfigError(errors + [f"unknown subcommand {name!r}; expected one of {SUBCOMMANDS}"])
    raw = doc.get("params") or {}
    if not isinstance(raw, dict):
        raise ConfigError(errors + ["params must be a mapping"])
    params = _check_fields(SCHEMAS[name], raw, errors)
    try:
        _check_semantics(name, params, errors)
    except KeyError:
        # a range check needed a field that is missing or mistyped, already reported
        pass
    if errors:
        raise ConfigError(errors)
    return RunConfig(name, params, SCHEMA_VERSION)


def _coerce(kind: str, key: str, value, errors):
    def bad(what):
        errors.append(f"'{key}' must be {what}, got {value!r}")

    def is_int(v):
        return isinstance(v, int) and not isinstance(v, bool)

    def is_num(v):
        # YAML 1.1 reads exponent literals without a dot (1e6) as strings
        if isinstance(v, str):
            try:
                return np.isfinite(float(v))
            except ValueError:
                return False
        return is_int(v) or isinstance(v, float)

    if kind.startswith("opt_"):
        if value is None:
            return None
        kind = kind[4:]
    if kind == "int":
        return value if is_int(value) else bad("an integer")
    if kind == "float":
        return float(value) if is_num(value) else bad("a number")
    if kind == "bool":
        return value if isinstance(value, bool) else bad("true or false")
    if kind == "str":
        return value if isinstance(value, str) else bad("a string")
    if kind in ("floats", "ints", "float3"):
        if not isinstance(value, list) or not value:
            return bad("a non-empty list")
        check = is_int if kind == "ints" else is_num
        if not all(check(v) for v in value):
            return bad("a list of integers" if kind == "ints" else "a list of numbers")
        if kind == "float3" and len(value) != 3:
            return bad("a list of three numbers")
        return list(value) if kind == "ints" else [float(v) for v in value]
    raise AssertionError(kind)


def _check_fields(schema: dict, raw: dict, errors) -> dict:
    out = {}
    for key in sorted(map(str, set(raw) - set(schema))):
        errors.append(f"unknown parameter '{key}'")
    for key, (kind, default) in schema.items():
        if key not in raw:
            if default is REQUIRED:
                errors.append(f"missing required parameter '{key}'")
            else:
                out[key] = list(default) if isinstance(default, list) else default
            continue
        value = _coerce(kind, key, raw[key], errors)
        if value is not None or raw[key] is None:
            out[key] = value
    return out


def _p_s(n: int) -> float:
    return (n + 2) / (n - 2)


def _check_dim(n, errors, need_limit=False):
    if n < 1 or n == 2:
        errors.append(f"'n' must be 1 or >= 3, got {n}")
        return False
    if need_limit and n < 3:
        errors.append(f"'n' must be >= 3 for this subcommand (the limit problem needs n > 2), got {n}")
        return False
    return True


def _check_p(n, p, errors, key="p", margin=0.0):
    if not p > 1:
        errors.append(f"'{key}' must exceed 1, got {p}")
    elif n > 2:
        ps = _p_s(n)
        if p >= ps:
            errors.append(f"'{key}'={p} must be below p_S = {ps:g} for n={n}")
        elif p > ps - margin:
            errors.append(f"'{key}'={p} is within p_margin={margin:g} of p_S = {ps:g} for n={n}")


def _check_semantics(name: str, c: dict, errors):
    positive = [k for k in ("trunc_radius", "r_cmp", "horizon", "sup_cap", "decay_floor",
                            "dt_init", "dt_max", "stationary_check_time", "drift_tol",
                            "p_margin", "tol", "mu_plus", "mu_minus") if k in c]
    for key in positive:
        if not c[key] > 0:
            errors.append(f"'{key}' must be positive, got {c[key]}")
    if "n_nodes" in c and c["n_nodes"] < 65:
        errors.append(f"'n_nodes' must be >= 65, got {c['n_nodes']}")
    if "tail" in c and c["tail"] < 2:
        errors.append(f"'tail' must be >= 2, got {c['tail']}")
    if "max_steps" in c and c["max_steps"] < 1:
        errors.append(f"'max_steps' must be >= 1, got {c['max_steps']}")
    if "k" in c and c["k"] < 2:
        errors.append(f"'k' must be >= 2 (sign-changing solutions), got {c['k']}")

    if name == "limit":
        for n in c["n_list"]:
            _check_dim(n, errors, need_limit=True)
        if c["trunc_radius"] < 20:
            errors.append(f"'trunc_radius' must be >= 20, got {c['trunc_radius']}")
        return
    if name == "cartesian":
        _check_cartesian(c, errors)
        return

    n = c["n"]
    if not _check_dim(n, errors, need_limit=name in ("spectrum", "study")):
        return
    margin = c.get("p_margin", DEFAULT_P_MARGIN)
    for key in ("p", "evolve_p"):
        if c.get(key) is not None:
            _check_p(n, c[key], errors, key, margin)
    if "p_list" in c:
        for p in c["p_list"]:
            _check_p(n, p, errors, "p_list", margin)
        if len(set(c["p_list"])) != len(c["p_list"]):
            errors.append("'p_list' has repeated values")
        elif any(b <= a for a, b in zip(c["p_list"], c["p_list"][1:])):
            errors.append("'p_list' must be strictly increasing")
        if name in ("spectrum", "study") and len(c["p_list"]) < 3:
            errors.append("'p_list' needs at least 3 exponents for a convergence study")
    for key in ("theta", "theta_list"):
        vals = c.get(key)
        vals = [vals] if isinstance(vals, float) else (vals or [])
        if any(t < 0 for t in vals):
            errors.append(f"'{key}' values must be >= 0")
    if name == "study" and c.get("evolve_p") is not None and c["evolve_p"] not in c["p_list"]:
        errors.append("'evolve_p' must be one of 'p_list'")
    if "horizon" in c:
        try:
            evolution_config(c)
        except ValueError as exc:
            errors.append(f"evolution settings: {exc}")


def _check_cartesian(c: dict, errors):
    if not c["p"] > 1:
        errors.append(f"'p' must exceed 1, got {c['p']}")
    elif c["p"] >= 5:
        errors.append(f"'p'={c['p']} must be below p_S = 5 for n=3")
    if c["voxel_file"] is None:
        if c["domain"] not in ("cube", "ball"):
            errors.append(f"'domain' must be 'cube' or 'ball', got {c['domain']!r}")
        if not 4 <= c["cells"] <= MAX_CELLS_PER_AXIS:
            errors.append(f"'cells' must be in [4, {MAX_CELLS_PER_AXIS}], got {c['cells']}")
    elif not Path(c["voxel_file"]).is_file():
        errors.append(f"voxel_file {c['voxel_file']!r} does not exist")
    cc = c["coarse_cells"]
    if cc is not None:
        if c["voxel_file"] is not None:
            errors.append("'coarse_cells' needs a built-in domain, not a voxel file")
        elif not 4 <= cc < c["cells"]:
            errors.append(f"'coarse_cells' must be in [4, cells), got {cc}")
    if c["amplitude"] == 0:
        errors.append("'amplitude' must be nonzero (the zero solution is a fixed point)")
    if c["offset"] == 0 and c["mu_plus"] == c["mu_minus"]:
        errors.append("equal widths with zero offset give a zero seed")


def evolution_config(c: dict) -> EvolutionConfig:
    """The parabolic settings held in a validated parameter map."""
    return EvolutionConfig(
        horizon=c["horizon"], sup_cap=c["sup_cap"], decay_floor=c["decay_floor"],
        dt_init=c["dt_init"], dt_max=c["dt_max"], reaction_fraction=c["reaction_fraction"],
        stationary_check_time=c["stationary_check_time"], drift_tol=c["drift_tol"],
        max_steps=c["max_steps"],
    )
