"""Experiment configuration: schema, defaults, validation, serialization.

A run is described by a nested YAML file; every key has a documented
default, unknown keys are rejected, and the effective configuration
(defaults resolved) serializes back to YAML so a run can be reproduced
from its own output directory.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import yaml

from .errors import ConfigError

REFINEMENT_RATIO = math.sqrt(2.0)   # default h-list shrink factor per level

DEFAULTS = {
    "geometry": {
        "name": "box",
        "params": {},
        "neumann": [],
    },
    "solution": {
        "name": "franke",
        "params": {},
    },
    "discretization": {
        "degree": 2,
        "spacing": 0.1,
        "spacings": None,
        "levels": 5,
        "degrees": [2, 3, 4, 5, 6],
        "oversampling": None,
        "tilt": None,
        "placement": "halton",
        "prune": True,
        "margin_factor": 2.0,
    },
    "solver": {
        "backend": "auto",
        "tol": 1e-10,
    },
    "sweep_1d": {
        "spacing": 0.1,
        "node_count": 30,
        "degree": 2,
        "oversampling": 5,
        "steps": 41,
    },
    "sweep_2d": {
        "spacing": 0.2,
        "degree": 2,
        "oversampling": 5,
        "steps": 11,
        "margin_factor": 2.0,
    },
    "output": {
        "directory": ".",
        "dump_points": False,
        "dump_system": False,
    },
    "seed": 0,
    "threads": 1,
}

# keys whose values are free-form dictionaries, not validated recursively
_OPEN_KEYS = {("geometry", "params"), ("solution", "params")}


def _check_keys(data, defaults, path=""):
    for key in data:
        if key not in defaults:
            where = f"{path}{key}"
            raise ConfigError(f"unknown config key {where!r}")
        here = f"{path}{key}."
        sub_default = defaults[key]
        if isinstance(sub_default, dict) and (path.rstrip("."), key) not in \
                _OPEN_KEYS:
            if not isinstance(data[key], dict):
                raise ConfigError(f"config key {path}{key!s} must be a mapping")
            _check_keys(data[key], sub_default, here)


def _merged(data, defaults, path=""):
    out = {}
    for key, default in defaults.items():
        if key in data and isinstance(default, dict) and \
                (path.rstrip("."), key) not in _OPEN_KEYS:
            out[key] = _merged(data[key], default, f"{path}{key}.")
        elif key in data:
            out[key] = data[key]
        else:
            out[key] = default
    return out


def _require_number(value, name, minimum=None):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{name} must be a number, got {value!r}")
    if minimum is not None and value <= minimum:
        raise ConfigError(f"{name} must be greater than {minimum}")
    return float(value)


@dataclass
class RunConfig:
    """Validated, fully defaulted description of one experiment."""

    geometry_name: str = "box"
    geometry_params: dict = field(default_factory=dict)
    neumann_arcs: list = field(default_factory=list)
    solution_name: str = "franke"
    solution_params: dict = field(default_factory=dict)
    degree: int = 2
    spacing: float = 0.1
    spacings: list | None = None
    levels: int = 5
    degrees: list = field(default_factory=lambda: [2, 3, 4, 5, 6])
    oversampling: int | None = None
    tilt: float | None = None
    placement: str = "halton"
    prune: bool = True
    margin_factor: float = 2.0
    backend: str = "auto"
    tol: float = 1e-10
    sweep_1d: dict = field(default_factory=lambda: dict(DEFAULTS["sweep_1d"]))
    sweep_2d: dict = field(default_factory=lambda: dict(DEFAULTS["sweep_2d"]))
    out_dir: str = "."
    dump_points: bool = False
    dump_system: bool = False
    seed: int = 0
    threads: int = 1

    @classmethod
    def from_dict(cls, data):
        if data is None:
            data = {}
        if not isinstance(data, dict):
            raise ConfigError("config root must be a mapping")
        _check_keys(data, DEFAULTS)
        full = _merged(data, DEFAULTS)
        cfg = cls(
            geometry_name=full["geometry"]["name"],
            geometry_params=dict(full["geometry"]["params"]),
            neumann_arcs=[list(arc) for arc in full["geometry"]["neumann"]],
            solution_name=full["solution"]["name"],
            solution_params=dict(full["solution"]["params"]),
            degree=full["discretization"]["degree"],
            spacing=full["discretization"]["spacing"],
            spacings=full["discretization"]["spacings"],
            levels=full["discretization"]["levels"],
            degrees=list(full["discretization"]["degrees"]),
            oversampling=full["discretization"]["oversampling"],
            tilt=full["discretization"]["tilt"],
            placement=full["discretization"]["placement"],
            prune=full["discretization"]["prune"],
            margin_factor=full["discretization"]["margin_factor"],
            backend=full["solver"]["backend"],
            tol=full["solver"]["tol"],
            sweep_1d=dict(full["sweep_1d"]),
            sweep_2d=dict(full["sweep_2d"]),
            out_dir=full["output"]["directory"],
            dump_points=full["output"]["dump_points"],
            dump_system=full["output"]["dump_system"],
            seed=full["seed"],
            threads=full["threads"],
        )
        cfg.validate()
        return cfg

    def validate(self):
        if not isinstance(self.geometry_name, str) or not self.geometry_name:
            raise ConfigError("geometry.name must be a non-empty string")
        for arc in self.neumann_arcs:
            if len(arc) != 3:
                raise ConfigError(
                    "geometry.neumann entries must be [component, start, end]")
            if not isinstance(arc[0], int) or isinstance(arc[0], bool):
                raise ConfigError("neumann component index must be an integer")
        if not isinstance(self.degree, int) or self.degree < 1:
            raise ConfigError("discretization.degree must be an integer >= 1")
        self.spacing = _require_number(self.spacing, "discretization.spacing",
                                       minimum=0.0)
        if self.spacings is not None:
            if not self.spacings:
                raise ConfigError("discretization.spacings must not be empty")
            vals = [_require_number(v, "discretization.spacings entry",
                                    minimum=0.0) for v in self.spacings]
            if any(b >= a for a, b in zip(vals, vals[1:])):
                raise ConfigError(
                    "discretization.spacings must be strictly decreasing")
            self.spacings = vals
        if not isinstance(self.levels, int) or self.levels < 1:
            raise ConfigError("discretization.levels must be an integer >= 1")
        if not self.degrees:
            raise ConfigError("discretization.degrees must not be empty")
        for p in self.degrees:
            if not isinstance(p, int) or not 2 <= p <= 6:
                raise ConfigError(
                    "discretization.degrees entries must be integers in 2..6")
        if self.oversampling is not None and (
                not isinstance(self.oversampling, int) or
                self.oversampling < 1):
            raise ConfigError(
                "discretization.oversampling must be an integer >= 1")
        if self.tilt is not None:
            self.tilt = _require_number(self.tilt, "discretization.tilt")
        if self.backend not in ("auto", "direct", "iterative"):
            raise ConfigError(
                f"solver.backend must be auto, direct or iterative, "
                f"got {self.backend!r}")
        self.tol = _require_number(self.tol, "solver.tol", minimum=0.0)
        self.margin_factor = _require_number(self.margin_factor,
                                             "discretization.margin_factor",
                                             minimum=0.0)
        if not isinstance(self.seed, int):
            raise ConfigError("seed must be an integer")
        if not isinstance(self.threads, int) or self.threads < 1:
            raise ConfigError("threads must be an integer >= 1")

    def to_dict(self):
        """Nested form, mirror of :meth:`from_dict`."""
        return {
            "geometry": {
                "name": self.geometry_name,
                "params": dict(self.geometry_params),
                "neumann": [list(arc) for arc in self.neumann_arcs],
            },
            "solution": {
                "name": self.solution_name,
                "params": dict(self.solution_params),
            },
            "discretization": {
                "degree": self.degree,
                "spacing": self.spacing,
                "spacings": None if self.spacings is None
                else list(self.spacings),
                "levels": self.levels,
                "degrees": list(self.degrees),
                "oversampling": self.oversampling,
                "tilt": self.tilt,
                "placement": self.placement,
                "prune": self.prune,
                "margin_factor": self.margin_factor,
            },
            "solver": {"backend": self.backend, "tol": self.tol},
            "sweep_1d": dict(self.sweep_1d),
            "sweep_2d": dict(self.sweep_2d),
            "output": {
                "directory": self.out_dir,
                "dump_points": self.dump_points,
                "dump_system": self.dump_system,
            },
            "seed": self.seed,
            "threads": self.threads,
        }

    def spacing_list(self, levels=None):
        """Resolved h-list: explicit values, or a geometric ladder of
        ``levels`` steps shrinking by sqrt(2) from ``spacing``."""
        if self.spacings is not None:
            return list(self.spacings)
        count = self.levels if levels is None else levels
        return [self.spacing / REFINEMENT_RATIO ** k for k in range(count)]


def load_config(path=None, overrides=None):
    """Config from an optional YAML file plus CLI flag overrides.

    ``overrides`` maps dotted key paths (e.g. ``output.directory``) to
    values that replace whatever the file says.
    """
    data = {}
    if path is not None:
        try:
            with open(path) as fh:
                data = yaml.safe_load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config file {path}: {exc}") from None
        except yaml.YAMLError as exc:
            raise ConfigError(f"malformed config file {path}: {exc}") from None
        if data is None:
            data = {}
        if not isinstance(data, dict):
            raise ConfigError(f"config file {path} must hold a mapping")
    for dotted, value in (overrides or {}).items():
        cursor = data
        *parents, leaf = dotted.split(".")
        for part in parents:
            cursor = cursor.setdefault(part, {})
        cursor[leaf] = value
    return RunConfig.from_dict(data)


def save_config(config, path):
    """Serialize the effective configuration; stable key order."""
    with open(path, "w") as fh:
        yaml.safe_dump(config.to_dict(), fh, sort_keys=True,
                       default_flow_style=False)
