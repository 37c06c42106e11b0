"""Experiment configuration files.

A config is a YAML mapping with these top-level keys::

    seed: 0                 # single source of randomness
    workers: 4              # sweep parallelism, default = available cores
    model: {...}            # SivModelParams fields, plus qubit_freq / field_angle_deg
    device: {...}           # IdtSpec fields; finger_pairs may be "auto" (uses target_fwhm)
    calibration: {...}      # CalibrationPoint fields
    context: {...}          # ExperimentContext fields (timings, decoherence, solver)
    experiment: {kind: odar | rabi | ramsey | histogram | sparams, ...}
    output: {dir: results, prefix: <config stem>, formats: [csv, json, svg]}

Sweeps are either explicit lists or ``{start, stop, step}`` mappings with
the stop value included.  Errors carry the dotted path of the offending
field.
"""

from __future__ import annotations

import dataclasses
import math
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from . import saw_device
from .errors import ConfigError, SimulationError
from .experiments import ExperimentContext
from .saw_device import CalibrationPoint, IdtSpec
from .siv_model import MAGIC_ANGLE, SivModelParams

KINDS = ("odar", "rabi", "ramsey", "histogram", "sparams")
FORMATS = ("csv", "json", "svg")
OUTPUT_ENV = "SIMULATE_OUTPUT_DIR"
BUNDLED_DIR = Path(__file__).parent / "configs"

# allowed keys and defaults of each experiment kind; None means required
EXPERIMENT_KEYS = {
    "odar": {"freqs": None, "pulse_duration": 20e-9, "power": 2e-3, "lineshape": "gaussian"},
    "rabi": {"durations": None, "powers": [4e-3], "freq": None},
    "ramsey": {"delays": None, "detuning": 50e6, "power": 4e-3},
    "histogram": {"acoustic_freq": None, "pulse_duration": 20e-9, "power": 2e-3,
                  "pulses": None, "total_duration": None},
    "sparams": {"freqs": None},
}
POSITIVE = {"pulse_duration", "total_duration"}
NON_NEGATIVE = {"power", "powers", "durations", "delays"}


@dataclass
class OutputSpec:
    dir: Path
    prefix: str
    formats: tuple = FORMATS


@dataclass
class ExperimentConfig:
    kind: str
    model: SivModelParams
    qubit_freq: float
    field_angle: float
    device: IdtSpec
    calibration: CalibrationPoint
    context: dict
    experiment: dict
    output: OutputSpec
    seed: int = 0
    workers: int = 0
    raw: dict = field(default_factory=dict)

    def make_context(self):
        kw = dict(self.context)
        kw.update(seed=self.seed, workers=self.workers or os.cpu_count() or 1,
                  device=self.device, calibration=self.calibration)
        if any(self.model.b_field):
            return ExperimentContext(model=self.model, **kw)
        return ExperimentContext.create(self.qubit_freq, self.field_angle, model=self.model, **kw)


def _number(value, path, *, integer=False, positive=False, non_negative=False):
    if isinstance(value, bool):
        raise ConfigError(path, "expected a number, got a boolean")
    if isinstance(value, str):
        try:
            value = float(value.strip())
        except ValueError:
            raise ConfigError(path, f"expected a number, got {value!r}") from None
    if not isinstance(value, (int, float)):
        raise ConfigError(path, f"expected a number, got {type(value).__name__}")
    value = float(value)
    if not math.isfinite(value):
        raise ConfigError(path, "must be finite")
    if integer:
        if value != int(value):
            raise ConfigError(path, "must be an integer")
        value = int(value)
    if positive and not value > 0:
        raise ConfigError(path, "must be positive")
    if non_negative and value < 0:
        raise ConfigError(path, "must be non-negative")
    return value


def _sweep(value, path, non_negative=False):
    if isinstance(value, dict):
        unknown = set(value) - {"start", "stop", "step"}
        if unknown:
            raise ConfigError(f"{path}.{sorted(unknown)[0]}", "unknown key")
        for k in ("start", "stop", "step"):
            if k not in value:
                raise ConfigError(f"{path}.{k}", "missing")
        start = _number(value["start"], f"{path}.start")
        stop = _number(value["stop"], f"{path}.stop")
        step = _number(value["step"], f"{path}.step", positive=True)
        if stop < start:
            raise ConfigError(path, "sweep is empty (stop < start)")
        n = int(math.floor((stop - start) / step + 1e-9)) + 1
        arr = start + step * np.arange(n)
    elif isinstance(value, (list, tuple)):
        arr = np.array([_number(v, f"{path}[{i}]") for i, v in enumerate(value)], dtype=float)
    else:
        arr = np.array([_number(value, path)])
    if arr.size == 0:
        raise ConfigError(path, "sweep is empty")
    if non_negative and np.any(arr < 0):
        raise ConfigError(path, "values must be non-negative")
    return arr


def _dataclass_block(raw, name, cls, extra=()):
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError(name, "expected a mapping")
    fields = {f.name: f for f in dataclasses.fields(cls)}
    kw = {}
    for key, value in raw.items():
        path = f"{name}.{key}"
        if key in extra:
            continue
        if key not in fields:
            raise ConfigError(path, "unknown key")
        default = fields[key].default
        if isinstance(default, bool):
            if not isinstance(value, bool):
                raise ConfigError(path, "expected true or false")
            kw[key] = value
        elif isinstance(default, str):
            if not isinstance(value, str):
                raise ConfigError(path, "expected a string")
            kw[key] = value
        elif isinstance(default, tuple):
            if not isinstance(value, (list, tuple)) or len(value) != len(default):
                raise ConfigError(path, f"expected a list of {len(default)} numbers")
            kw[key] = tuple(_number(v, f"{path}[{i}]") for i, v in enumerate(value))
        elif value is None and default is None:
            kw[key] = None
        else:
            kw[key] = _number(value, path, integer=isinstance(default, int))
    try:
        return cls(**kw)
    except (SimulationError, ValueError, TypeError) as exc:
        raise ConfigError(name, str(exc)) from None


def _model(raw):
    raw = dict(raw or {})
    qf = _number(raw.get("qubit_freq", 3.43e9), "model.qubit_freq", non_negative=True)
    angle = math.radians(_number(raw.get("field_angle_deg", math.degrees(MAGIC_ANGLE)),
                                 "model.field_angle_deg"))
    params = _dataclass_block(raw, "model", SivModelParams, extra=("qubit_freq", "field_angle_deg"))
    for key in ("lambda_so", "gamma_s", "es_decay_rate", "temperature"):
        if not getattr(params, key) > 0:
            raise ConfigError(f"model.{key}", "must be positive")
    if not 0 <= params.branching_spin_conserving <= 1:
        raise ConfigError("model.branching_spin_conserving", "must lie in [0, 1]")
    return params, qf, angle


def _device(raw):
    raw = dict(raw or {})
    target = raw.pop("target_fwhm", None)
    auto = raw.get("finger_pairs") == "auto"
    if auto:
        raw.pop("finger_pairs")
    spec = _dataclass_block(raw, "device", IdtSpec)
    if auto:
        target = _number(126e6 if target is None else target, "device.target_fwhm", positive=True)
        try:
            n = saw_device.derive_finger_pairs(spec, target)
        except SimulationError as exc:
            raise ConfigError("device.target_fwhm", str(exc)) from None
        spec = dataclasses.replace(spec, finger_pairs=n)
    elif target is not None:
        raise ConfigError("device.target_fwhm", "only meaningful with finger_pairs: auto")
    return spec


def _context(raw):
    raw = dict(raw or {})
    for key in ("model", "device", "calibration", "seed", "workers"):
        if key in raw:
            raise ConfigError(f"context.{key}", "set this at the top level of the config")
    ctx_fields = {f.name: f for f in dataclasses.fields(ExperimentContext)}
    out = {}
    for key, value in raw.items():
        path = f"context.{key}"
        if key not in ctx_fields:
            raise ConfigError(path, "unknown key")
        default = ctx_fields[key].default
        if key == "t2_star":
            out[key] = None if value is None else _number(value, path, positive=True)
        elif isinstance(default, bool):
            if not isinstance(value, bool):
                raise ConfigError(path, "expected true or false")
            out[key] = value
        elif isinstance(default, str):
            out[key] = str(value)
        else:
            out[key] = _number(value, path, non_negative=True, integer=isinstance(default, int))
    return out


def _experiment(raw):
    if not isinstance(raw, dict):
        raise ConfigError("experiment", "expected a mapping with a 'kind' key")
    kind = raw.get("kind")
    if kind not in KINDS:
        raise ConfigError("experiment.kind", f"must be one of {KINDS}, got {kind!r}")
    spec = EXPERIMENT_KEYS[kind]
    out = {}
    for key, value in raw.items():
        if key == "kind":
            continue
        if key not in spec:
            raise ConfigError(f"experiment.{key}", "unknown key")
    for key, default in spec.items():
        path = f"experiment.{key}"
        value = raw.get(key, default)
        if key in ("freqs", "durations", "delays", "powers"):
            if value is None:
                raise ConfigError(path, "missing")
            out[key] = _sweep(value, path, non_negative=key in NON_NEGATIVE)
        elif key == "lineshape":
            from .fitting import LINESHAPES
            if value not in LINESHAPES:
                raise ConfigError(path, f"must be one of {LINESHAPES}")
            out[key] = value
        elif key == "pulses":
            if value is not None and not isinstance(value, list):
                raise ConfigError(path, "expected a list of pulses")
            out[key] = value
        elif value is None:
            out[key] = None
        else:
            out[key] = _number(value, path, positive=key in POSITIVE,
                               non_negative=key in NON_NEGATIVE)
    if kind == "odar" and np.any(np.diff(out["freqs"]) <= 0):
        raise ConfigError("experiment.freqs", "must be strictly increasing")
    return kind, out


def _output(raw, stem):
    raw = dict(raw or {})
    unknown = set(raw) - {"dir", "prefix", "formats"}
    if unknown:
        raise ConfigError(f"output.{sorted(unknown)[0]}", "unknown key")
    formats = raw.get("formats", list(FORMATS))
    if not isinstance(formats, list) or not formats:
        raise ConfigError("output.formats", "expected a non-empty list")
    for i, f in enumerate(formats):
        if f not in FORMATS:
            raise ConfigError(f"output.formats[{i}]", f"must be one of {FORMATS}")
    out_dir = os.environ.get(OUTPUT_ENV) or raw.get("dir", "results")
    return OutputSpec(Path(out_dir), str(raw.get("prefix", stem)), tuple(formats))


TOP_KEYS = {"seed", "workers", "model", "device", "calibration", "context", "experiment", "output"}


def parse_config(raw, stem="result"):
    """Build an :class:`ExperimentConfig` from an already-loaded mapping."""
    if not isinstance(raw, dict):
        raise ConfigError("", "config must be a mapping")
    unknown = set(raw) - TOP_KEYS
    if unknown:
        raise ConfigError(sorted(unknown)[0], "unknown top-level key")
    if "experiment" not in raw:
        raise ConfigError("experiment", "missing")
    model, qf, angle = _model(raw.get("model"))
    device = _device(raw.get("device"))
    cal = _dataclass_block(raw.get("calibration"), "calibration", CalibrationPoint)
    context = _context(raw.get("context"))
    kind, exp = _experiment(raw["experiment"])
    seed = _number(raw.get("seed", 0), "seed", integer=True, non_negative=True)
    workers = _number(raw.get("workers", 0), "workers", integer=True, non_negative=True)
    try:
        ExperimentContext(model=model, **context)
    except (SimulationError, ValueError) as exc:
        raise ConfigError("context", str(exc)) from None
    return ExperimentConfig(kind, model, qf, angle, device, cal, context, exp,
                            _output(raw.get("output"), stem), seed, workers, raw)


def resolve_path(path):
    """Config path on disk, falling back to a bundled config of the same name."""
    p = Path(path)
    if p.exists():
        return p
    for cand in (BUNDLED_DIR / p.name, BUNDLED_DIR / f"{p.name}.yaml"):
        if cand.exists():
            return cand
    raise ConfigError("", f"config file not found: {path}")


def load_config(path):
    p = resolve_path(path)
    try:
        raw = yaml.safe_load(p.read_text())
    except yaml.YAMLError as exc:
        raise ConfigError("", f"YAML syntax error: {exc}") from None
    return parse_config(raw, stem=p.stem)


def bundled_configs():
    return sorted(BUNDLED_DIR.glob("*.yaml"))
