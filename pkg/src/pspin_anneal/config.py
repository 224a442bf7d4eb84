"""YAML configuration of annealing sweeps.

Every key is optional.  A complete file with the defaults spelled out::

    model:
      N: 16
      p: 3
      E: 1.0
      Gamma: 1.0
    schedule: linear
    bath:
      beta: 10.0
      omega_c: 50.0
    eta_values: [0.0, 1.0e-4, 1.0e-3, 1.0e-2]
    tf_values: null          # null: 0 plus 13 log-spaced points on [1, 1e4]
    evolution:
      step: null             # null: automatic fixed step
      method: rk4-ip         # rk4-ip | rk4 | dp54
      rel_tol: 1.0e-8
      abs_tol: 1.0e-10
      lamb_shift: true
      tol_omega: 1.0e-9
    gap:
      resolution: 201
    output:
      dir: .
    jobs: 1
"""

from __future__ import annotations

import dataclasses
import math
import os
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

import numpy as np
import yaml

from .dicke import SCHEDULES, DegenerateGroundStateWarning, ModelParams, Schedule, get_schedule
from .lindblad import METHODS, EvolutionConfig
from .spectral import DEFAULT_TOL_OMEGA

DEFAULT_ETA_VALUES = (0.0, 1e-4, 1e-3, 1e-2)
DEFAULT_TF_VALUES = (0.0, *(float(t) for t in np.logspace(0.0, 4.0, 13)))


class ConfigError(ValueError):
    """Invalid configuration; ``path`` is the dotted key that failed."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}" if path else message)
        self.path = path


@dataclass(frozen=True)
class SweepConfig:
    model: ModelParams = field(default_factory=ModelParams)
    schedule: Schedule = field(default_factory=lambda: get_schedule("linear"))
    beta: float = 10.0
    omega_c: float = 50.0
    eta_values: tuple = DEFAULT_ETA_VALUES
    tf_values: tuple = DEFAULT_TF_VALUES
    evolution: EvolutionConfig = field(default_factory=lambda: EvolutionConfig(t_f=0.0))
    gap_resolution: int = 201
    out_dir: Path = Path(".")
    jobs: int = 1
    source: Optional[str] = None

    def evolution_for(self, t_f: float) -> EvolutionConfig:
        return dataclasses.replace(self.evolution, t_f=float(t_f))

    def echo(self) -> dict:
        """Plain-data echo of the full configuration, for provenance blocks."""
        return {
            "model": dataclasses.asdict(self.model),
            "schedule": self.schedule.tag,
            "bath": {"beta": self.beta, "omega_c": self.omega_c},
            "eta_values": list(self.eta_values),
            "tf_values": list(self.tf_values),
            "evolution": {k: v for k, v in dataclasses.asdict(self.evolution).items() if k != "t_f"},
            "gap": {"resolution": self.gap_resolution},
            "jobs": self.jobs,
        }


_SCHEMA = {
    "model": {"N", "p", "E", "Gamma"},
    "schedule": None,
    "bath": {"beta", "omega_c"},
    "eta_values": None,
    "tf_values": None,
    "evolution": {"step", "method", "rel_tol", "abs_tol", "lamb_shift", "tol_omega", "record_stride"},
    "gap": {"resolution"},
    "output": {"dir"},
    "jobs": None,
}


def _section(raw: dict, name: str) -> dict:
    value = raw.get(name)
    if value is None:
        return {}
    if not isinstance(value, dict):
        raise ConfigError(name, "expected a mapping")
    unknown = sorted(set(value) - _SCHEMA[name])
    if unknown:
        raise ConfigError(f"{name}.{unknown[0]}", "unknown key")
    return value


def _number(value: Any, path: str, *, integer: bool = False, allow_none: bool = False):
    if value is None and allow_none:
        return None
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(path, f"expected a number, got {value!r}")
    if not math.isfinite(value):
        raise ConfigError(path, "must be finite")
    if integer:
        if int(value) != value:
            raise ConfigError(path, f"expected an integer, got {value!r}")
        return int(value)
    return float(value)


def _number_list(value: Any, path: str) -> tuple:
    if not isinstance(value, (list, tuple)):
        raise ConfigError(path, "expected a list of numbers")
    if not value:
        raise ConfigError(path, "must not be empty")
    return tuple(_number(v, f"{path}[{i}]") for i, v in enumerate(value))


def _check(cond: bool, path: str, message: str):
    if not cond:
        raise ConfigError(path, message)


def build_config(raw: Optional[dict], base_dir: Optional[Path] = None, source: Optional[str] = None) -> SweepConfig:
    """Validate a parsed mapping and apply defaults.

    Relative output directories resolve against ``base_dir`` (default: the
    current working directory).
    """
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError("", "top level must be a mapping")
    unknown = sorted(set(raw) - set(_SCHEMA))
    if unknown:
        raise ConfigError(unknown[0], "unknown key")

    m = _section(raw, "model")
    N = _number(m.get("N", 16), "model.N", integer=True)
    p = _number(m.get("p", 3), "model.p", integer=True)
    E = _number(m.get("E", 1.0), "model.E")
    Gamma = _number(m.get("Gamma", 1.0), "model.Gamma")
    _check(N >= 1, "model.N", "must be >= 1")
    _check(p >= 2, "model.p", "must be >= 2")
    _check(E > 0, "model.E", "must be positive")
    _check(Gamma >= 0, "model.Gamma", "must be non-negative")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", DegenerateGroundStateWarning)
        model = ModelParams(N=N, p=p, E=E, Gamma=Gamma)

    tag = raw.get("schedule", "linear")
    _check(isinstance(tag, str) and tag in SCHEDULES, "schedule", f"unknown schedule {tag!r}; known: {sorted(SCHEDULES)}")
    schedule = get_schedule(tag)

    b = _section(raw, "bath")
    beta = _number(b.get("beta", 10.0), "bath.beta")
    omega_c = _number(b.get("omega_c", 50.0), "bath.omega_c")
    _check(beta > 0, "bath.beta", "must be positive")
    _check(omega_c > 0, "bath.omega_c", "must be positive")

    etas = DEFAULT_ETA_VALUES if raw.get("eta_values") is None else _number_list(raw["eta_values"], "eta_values")
    for i, eta in enumerate(etas):
        _check(eta >= 0, f"eta_values[{i}]", "must be non-negative")
    tfs = DEFAULT_TF_VALUES if raw.get("tf_values") is None else _number_list(raw["tf_values"], "tf_values")
    for i, tf in enumerate(tfs):
        _check(tf >= 0, f"tf_values[{i}]", "must be non-negative")

    ev = _section(raw, "evolution")
    step = _number(ev.get("step"), "evolution.step", allow_none=True)
    _check(step is None or step > 0, "evolution.step", "must be positive")
    method = ev.get("method", "rk4-ip")
    _check(method in METHODS, "evolution.method", f"must be one of {list(METHODS)}")
    rel_tol = _number(ev.get("rel_tol", 1e-8), "evolution.rel_tol")
    abs_tol = _number(ev.get("abs_tol", 1e-10), "evolution.abs_tol")
    tol_omega = _number(ev.get("tol_omega", DEFAULT_TOL_OMEGA), "evolution.tol_omega")
    for key, value in (("rel_tol", rel_tol), ("abs_tol", abs_tol), ("tol_omega", tol_omega)):
        _check(value > 0, f"evolution.{key}", "must be positive")
    lamb_shift = ev.get("lamb_shift", True)
    _check(isinstance(lamb_shift, bool), "evolution.lamb_shift", "expected true or false")
    stride = _number(ev.get("record_stride"), "evolution.record_stride", integer=True, allow_none=True)
    _check(stride is None or stride >= 1, "evolution.record_stride", "must be >= 1")
    evolution = EvolutionConfig(t_f=0.0, step=step, method=method, rel_tol=rel_tol, abs_tol=abs_tol,
                                lamb_shift=lamb_shift, tol_omega=tol_omega, record_stride=stride)

    g = _section(raw, "gap")
    resolution = _number(g.get("resolution", 201), "gap.resolution", integer=True)
    _check(resolution >= 3, "gap.resolution", "must be >= 3")

    o = _section(raw, "output")
    out = o.get("dir", ".")
    _check(isinstance(out, str) and out != "", "output.dir", "expected a path string")
    out_dir = Path(out)
    if not out_dir.is_absolute():
        out_dir = (base_dir or Path.cwd()) / out_dir

    jobs = _number(raw.get("jobs", 1), "jobs", integer=True)
    _check(jobs >= 1, "jobs", "must be >= 1")

    return SweepConfig(model=model, schedule=schedule, beta=beta, omega_c=omega_c, eta_values=etas,
                       tf_values=tfs, evolution=evolution, gap_resolution=resolution, out_dir=out_dir,
                       jobs=jobs, source=source)


def parse_config(path) -> SweepConfig:
    """Read and validate a YAML sweep configuration file.

    Raises:
        ConfigError: on unreadable files, malformed YAML, unknown keys or
            constraint violations.
    """
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError("", f"cannot read {path}: {exc.strerror or exc}") from exc
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError("", f"malformed YAML in {path}: {exc}") from exc
    return build_config(raw, source=str(path))


def ensure_writable(directory: Path) -> None:
    """Create ``directory`` if needed and check it accepts files."""
    try:
        directory.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ConfigError("output.dir", f"cannot create {directory}: {exc.strerror or exc}") from exc
    if not os.access(directory, os.W_OK):
        raise ConfigError("output.dir", f"{directory} is not writable")
