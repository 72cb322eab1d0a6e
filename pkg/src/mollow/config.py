"""Run-configuration files: JSON with three blocks, validated up front.

    {
      "system":  {"gamma": 1.0, "rabi": 5.0 | "target_splitting": 300.0,
                  "detuning": 0.0},
      "sensors": [{"frequency": 0.0, "linewidth": 2.0, "bundle_order": 1}, ...],
      "run":     {"epsilon": ..., "workers": 1, "out": "stem",
                  "format": "csv", "grid": 401, "checkpoint_interval": 16}
    }

All numbers are in units of the emitter decay rate gamma (the default
unit); frequencies are measured from the drive laser.  Exactly one of
``rabi`` / ``target_splitting`` must be present; the latter is inverted
to a drive amplitude before any computation.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from .errors import ConfigError, ParameterError, RegimeError
from .model import SensorSpec, SystemParams, drive_for_target_splitting


@dataclass
class RunConfig:
    params: SystemParams
    sensors: tuple[SensorSpec, ...]
    run: dict = field(default_factory=dict)
    raw: dict = field(default_factory=dict)

    def echo(self) -> dict:
        """Every physical number entering the computation, for headers."""
        return {
            "system": {"gamma": self.params.gamma, "rabi": self.params.rabi,
                       "detuning": self.params.detuning},
            "sensors": [{"frequency": s.frequency, "linewidth": s.linewidth,
                         "bundle_order": s.bundle_order, "truncation": s.dim}
                        for s in self.sensors],
            "run": self.run,
        }


_SYSTEM_KEYS = {"gamma", "rabi", "target_splitting", "detuning"}
_SENSOR_KEYS = {"frequency", "linewidth", "bundle_order", "truncation"}
_RUN_KEYS = {"epsilon", "workers", "out", "format", "grid", "checkpoint_interval",
             "tau_max", "tau_points", "margin", "window"}


def _number(block: dict, key: str, where: str, default=None, required=False):
    if key not in block:
        if required:
            raise ConfigError(f"{where}: missing required key {key!r}")
        return default
    v = block[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"{where}.{key}: expected a number, got {v!r}")
    return float(v)


def parse_config(doc: dict) -> RunConfig:
    """Validate a parsed configuration document."""
    if not isinstance(doc, dict):
        raise ConfigError("configuration root must be an object")
    unknown = set(doc) - {"system", "sensors", "run"}
    if unknown:
        raise ConfigError(f"unknown top-level keys: {sorted(unknown)}")
    system = doc.get("system")
    if not isinstance(system, dict):
        raise ConfigError("missing or invalid 'system' block")
    bad = set(system) - _SYSTEM_KEYS
    if bad:
        raise ConfigError(f"system: unknown keys {sorted(bad)}")
    has_rabi = "rabi" in system
    has_target = "target_splitting" in system
    if has_rabi == has_target:
        raise ConfigError("system: exactly one of 'rabi' / 'target_splitting' is required")
    gamma = _number(system, "gamma", "system", default=1.0)
    detuning = _number(system, "detuning", "system", default=0.0)
    try:
        if has_rabi:
            rabi = _number(system, "rabi", "system", required=True)
        else:
            target = _number(system, "target_splitting", "system", required=True)
            rabi = drive_for_target_splitting(target, detuning=detuning, gamma=gamma)
        params = SystemParams(rabi=rabi, detuning=detuning, gamma=gamma)
    except (ParameterError, RegimeError) as exc:
        raise ConfigError(f"system: {exc}") from exc

    sensors = []
    for k, blk in enumerate(doc.get("sensors", [])):
        where = f"sensors[{k}]"
        if not isinstance(blk, dict):
            raise ConfigError(f"{where}: expected an object")
        bad = set(blk) - _SENSOR_KEYS
        if bad:
            raise ConfigError(f"{where}: unknown keys {sorted(bad)}")
        try:
            sensors.append(SensorSpec(
                frequency=_number(blk, "frequency", where, required=True),
                linewidth=_number(blk, "linewidth", where, required=True),
                bundle_order=int(_number(blk, "bundle_order", where, default=1)),
                truncation=(int(blk["truncation"]) if "truncation" in blk else None),
            ))
        except ParameterError as exc:
            raise ConfigError(f"{where}: {exc}") from exc

    run = doc.get("run", {})
    if not isinstance(run, dict):
        raise ConfigError("'run' block must be an object")
    bad = set(run) - _RUN_KEYS
    if bad:
        raise ConfigError(f"run: unknown keys {sorted(bad)}")
    if "format" in run and run["format"] not in ("csv", "json"):
        raise ConfigError(f"run.format must be 'csv' or 'json', got {run['format']!r}")
    for key in ("workers", "grid", "tau_points", "checkpoint_interval"):
        if key in run and (not isinstance(run[key], int) or run[key] < 1):
            raise ConfigError(f"run.{key} must be a positive integer")
    if "epsilon" in run:
        eps = _number(run, "epsilon", "run")
        if eps <= 0:
            raise ConfigError("run.epsilon must be positive")

    return RunConfig(params=params, sensors=tuple(sensors), run=dict(run), raw=doc)


def load_config(path: str) -> RunConfig:
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    return parse_config(doc)
