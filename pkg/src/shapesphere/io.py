"""Run configuration, manifests and trajectory serialization.

Config files are YAML (JSON is accepted as a subset).  Schema, all keys
optional::

    preset: lagrange-circular | euler-homothetic | free-fall-345 | figure-eight
    masses: [m1, m2, m3]
    initial: {q: [z1, z2, z3], v: [z1, z2, z3]}    # z = number or [re, im]
             {w: [w1, w2, w3], wdot: [..]}          # reduced start
    T: duration
    seed: 0
    input: path of a trajectory file (project, syzygies, emit-sphere)
    integrator: {method, abs_tol, rel_tol, max_step, min_step, step,
                 collision_radius, escape_factor, max_steps, error_control}
    output: {dir, format: csv|json|both, figures: true|false}
    eight: {N, T, seed}
    kepler: {lam0, lamdot0, c, samples}
    compare: {close_fraction, samples}
    sphere: {samples}
"""
from __future__ import annotations

import csv
import dataclasses
import hashlib
import io
import json
import math
import os
import platform
import re
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
import yaml

from . import __version__, core
from .core import EQUAL_MASSES, MassDistribution, PhaseState
from .errors import ShapeSphereError
from .integrator import IntegratorConfig, Trajectory


class ConfigError(ShapeSphereError, ValueError):
    """Malformed or inconsistent run configuration."""


class OutputError(ShapeSphereError, OSError):
    """Reading or writing a file failed."""

    def __init__(self, path, message):
        self.path = str(path)
        super().__init__(f"{path}: {message}")


OMEGA = complex(-0.5, math.sqrt(3) / 2)
LAGRANGE_RATE = 3 ** -0.25
# figure eight with period 12 (shape-space arc time T = 1), body 1 in the middle
EIGHT_A = 1.5323994091250408
EIGHT_V = complex(0.5608151683336332, 0.8606905631767529)
EIGHT_PERIOD = 12.0


def _lagrange():
    q = np.array([1, OMEGA, OMEGA**2])
    return q, 1j * LAGRANGE_RATE * q, 10 * 2 * math.pi / LAGRANGE_RATE


def _euler_homothetic():
    return np.array([0, -1, 1], dtype=complex), np.zeros(3, complex), 2.0


def _free_fall_345():
    q = np.array([0, 3, 4j])
    return q - q.mean(), np.zeros(3, complex), 10.0


def _figure_eight():
    q = np.array([0, -EIGHT_A, EIGHT_A], dtype=complex)
    v = np.array([EIGHT_V, -EIGHT_V / 2, -EIGHT_V / 2])
    return q, v, EIGHT_PERIOD


PRESETS = {
    "lagrange-circular": _lagrange,
    "euler-homothetic": _euler_homothetic,
    "free-fall-345": _free_fall_345,
    "figure-eight": _figure_eight,
}

_SECTIONS = {
    "integrator": {f.name for f in dataclasses.fields(IntegratorConfig)},
    "output": {"dir", "format", "figures"},
    "eight": {"N", "T", "seed"},
    "kepler": {"lam0", "lamdot0", "c", "samples", "T"},
    "compare": {"close_fraction", "samples"},
    "sphere": {"samples"},
}
_TOP = {"preset", "masses", "initial", "T", "seed", "input"} | set(_SECTIONS)

DEFAULTS = {
    "output": {"dir": "out", "format": "both", "figures": True},
    "eight": {"N": 512, "T": 1.0, "seed": 0},
    "kepler": {"lam0": 1.0, "lamdot0": [0.0, math.sqrt(2)], "c": 2.0, "samples": 201},
    "compare": {"close_fraction": 0.05, "samples": 2001},
    "sphere": {"samples": 1001},
}


class _Loader(yaml.SafeLoader):
    """Safe loader that also reads exponent floats such as 1e-10."""


_Loader.add_implicit_resolver(
    "tag:yaml.org,2002:float",
    re.compile(r"""^(?:[-+]?(?:[0-9][0-9_]*)\.[0-9_]*(?:[eE][-+]?[0-9]+)?
                 |[-+]?(?:[0-9][0-9_]*)(?:[eE][-+]?[0-9]+)
                 |\.[0-9_]+(?:[eE][-+]?[0-9]+)?
                 |[-+]?\.(?:inf|Inf|INF)
                 |\.(?:nan|NaN|NAN))$""", re.X),
    list("-+0123456789."))


def _yaml_load(text):
    return yaml.load(text, Loader=_Loader)


def _complex(x, what):
    if isinstance(x, (list, tuple)):
        if len(x) != 2:
            raise ConfigError(f"{what}: complex numbers are [re, im] pairs")
        return complex(float(x[0]), float(x[1]))
    if isinstance(x, (int, float)) and not isinstance(x, bool):
        return complex(x)
    if isinstance(x, str):
        try:
            return complex(x.replace(" ", ""))
        except ValueError:
            pass
    raise ConfigError(f"{what}: cannot read {x!r} as a number")


def _cvec(xs, what, n=3):
    if not isinstance(xs, (list, tuple)) or len(xs) != n:
        raise ConfigError(f"{what}: expected a list of {n} entries")
    return np.array([_complex(x, f"{what}[{i}]") for i, x in enumerate(xs)])


def _rvec(xs, what, n=3):
    if not isinstance(xs, (list, tuple)) or len(xs) != n:
        raise ConfigError(f"{what}: expected a list of {n} numbers")
    try:
        return np.array([float(x) for x in xs])
    except (TypeError, ValueError):
        raise ConfigError(f"{what}: expected numbers") from None


def _encode_c(z):
    z = complex(z)
    return [z.real, z.imag]


def read_config_file(path) -> dict:
    """YAML config file as a mapping (empty file gives {})."""
    try:
        text = Path(path).read_text()
    except OSError as e:
        raise OutputError(path, e.strerror or str(e)) from e
    try:
        data = _yaml_load(text)
    except yaml.YAMLError as e:
        raise ConfigError(f"{path}: {e}") from e
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: config must be a mapping")
    return data


@dataclass
class RunConfig:
    preset: Optional[str] = None
    masses: tuple = (1.0, 1.0, 1.0)
    initial: Optional[dict] = None
    T: Optional[float] = None
    seed: int = 0
    input: Optional[str] = None
    integrator: dict = field(default_factory=dict)
    output: dict = field(default_factory=dict)
    eight: dict = field(default_factory=dict)
    kepler: dict = field(default_factory=dict)
    compare: dict = field(default_factory=dict)
    sphere: dict = field(default_factory=dict)

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        if data is None:
            data = {}
        if not isinstance(data, dict):
            raise ConfigError("config must be a mapping")
        unknown = set(data) - _TOP
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        for sec, allowed in _SECTIONS.items():
            sub = data.get(sec, {}) or {}
            if not isinstance(sub, dict):
                raise ConfigError(f"{sec} must be a mapping")
            bad = set(sub) - allowed
            if bad:
                raise ConfigError(f"unknown keys in {sec}: {sorted(bad)}")
        cfg = cls(**{k: v for k, v in data.items() if k not in _SECTIONS and v is not None},
                  **{k: dict(data.get(k) or {}) for k in _SECTIONS})
        cfg.validate()
        return cfg

    @classmethod
    def from_file(cls, path) -> "RunConfig":
        return cls.from_dict(read_config_file(path))

    def validate(self):
        if self.preset is not None and self.preset not in PRESETS:
            raise ConfigError(f"unknown preset {self.preset!r}; choose from {sorted(PRESETS)}")
        try:
            masses = MassDistribution(*_rvec(list(self.masses), "masses"))
        except ValueError as e:
            raise ConfigError(str(e)) from None
        self.masses = masses.as_tuple()
        if self.preset is not None:
            if self.initial is not None:
                raise ConfigError("give either a preset or explicit initial conditions, not both")
            if not masses.is_equal or masses.m1 != 1.0:
                raise ConfigError(f"preset {self.preset} is defined for unit equal masses")
        if self.initial is not None:
            keys = set(self.initial)
            if keys not in ({"q", "v"}, {"q"}, {"w", "wdot"}, {"w"}):
                raise ConfigError("initial must hold q[, v] or w[, wdot]")
            if "q" in keys:
                _cvec(self.initial["q"], "initial.q")
                if "v" in keys:
                    _cvec(self.initial["v"], "initial.v")
            else:
                _rvec(self.initial["w"], "initial.w")
                if "wdot" in keys:
                    _rvec(self.initial["wdot"], "initial.wdot")
        if self.T is not None:
            try:
                self.T = float(self.T)
            except (TypeError, ValueError):
                raise ConfigError("T must be a number") from None
            if not self.T > 0:
                raise ConfigError("T must be positive")
        if not isinstance(self.seed, int) or isinstance(self.seed, bool):
            raise ConfigError("seed must be an integer")
        try:
            self.integrator_config()
        except (TypeError, ValueError) as e:
            raise ConfigError(f"integrator: {e}") from None
        fmt = self.section("output")["format"]
        if fmt not in ("csv", "json", "both"):
            raise ConfigError("output.format must be csv, json or both")

    def section(self, name) -> dict:
        out = dict(DEFAULTS.get(name, {}))
        out.update(getattr(self, name))
        return out

    @property
    def mass_distribution(self) -> MassDistribution:
        return MassDistribution(*self.masses)

    def integrator_config(self) -> IntegratorConfig:
        return IntegratorConfig(**self.integrator)

    def initial_state(self) -> PhaseState:
        """Full initial state from the preset or the ``initial`` block."""
        if self.preset is not None:
            q, v, _ = PRESETS[self.preset]()
            return PhaseState(q, v)
        if self.initial is None:
            raise ConfigError("no initial conditions: give a preset or an initial block")
        if "q" in self.initial:
            q = _cvec(self.initial["q"], "initial.q")
            v = _cvec(self.initial["v"], "initial.v") if "v" in self.initial else np.zeros(3, complex)
            return PhaseState(q, v)
        from .projection import horizontal_lift_velocity, reconstruct_config

        w = _rvec(self.initial["w"], "initial.w")
        wdot = _rvec(self.initial.get("wdot", [0, 0, 0]), "initial.wdot")
        m = self.mass_distribution
        q = reconstruct_config(w, m)
        return PhaseState(q, horizontal_lift_velocity(q, wdot, m))

    def reduced_initial(self):
        from .reduced import ReducedState

        if self.initial is not None and "w" in self.initial:
            return ReducedState(_rvec(self.initial["w"], "initial.w"),
                                _rvec(self.initial.get("wdot", [0, 0, 0]), "initial.wdot"))
        return ReducedState.from_phase(self.initial_state(), self.mass_distribution)

    def duration(self) -> float:
        if self.T is not None:
            return self.T
        if self.preset is not None:
            return PRESETS[self.preset]()[2]
        raise ConfigError("no duration: set T")

    def to_dict(self) -> dict:
        """Canonical form: defaults filled in, keys sorted on dump."""
        d = {
            "preset": self.preset,
            "masses": list(self.masses),
            "initial": self.initial,
            "T": self.T,
            "seed": self.seed,
            "input": self.input,
        }
        for sec in _SECTIONS:
            d[sec] = self.section(sec) if sec != "integrator" else dataclasses.asdict(self.integrator_config())
        return d

    def config_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"), default=str)
        return hashlib.sha256(blob.encode()).hexdigest()


def apply_overrides(data: dict, assignments) -> dict:
    """Apply ``a.b=value`` strings (values parsed as YAML) to a config mapping."""
    data = dict(data or {})
    for item in assignments or []:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not key=value")
        key, raw = item.split("=", 1)
        try:
            value = _yaml_load(raw)
        except yaml.YAMLError as e:
            raise ConfigError(f"override {item!r}: {e}") from e
        parts = key.strip().split(".")
        node = data
        for p in parts[:-1]:
            node[p] = dict(node.get(p) or {})
            node = node[p]
        node[parts[-1]] = value
    return data


def make_manifest(command: str, config: RunConfig, extra: dict = None) -> dict:
    man = {
        "tool": "shapesphere",
        "version": __version__,
        "command": command,
        "config_hash": config.config_hash(),
        "config": config.to_dict(),
        "python": platform.python_version(),
        "numpy": np.__version__,
    }
    if extra:
        man.update(extra)
    return man


# ---- atomic file output -------------------------------------------------

def atomic_write(path, data, mode="w"):
    """Write to a temporary file in the target directory, then rename over ``path``."""
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
        try:
            with os.fdopen(fd, mode) as fh:
                fh.write(data)
                fh.flush()
                os.fsync(fh.fileno())
            os.replace(tmp, path)
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise
    except OSError as e:
        raise OutputError(path, e.strerror or str(e)) from e
    return path


def _read_text(path):
    try:
        return Path(path).read_text()
    except OSError as e:
        raise OutputError(path, e.strerror or str(e)) from e


# ---- CSV ------------------------------------------------------------------

FULL_COLUMNS = (["t"] + [f"q{i}_{p}" for i in (1, 2, 3) for p in ("re", "im")]
                + [f"v{i}_{p}" for i in (1, 2, 3) for p in ("re", "im")]
                + ["H", "J", "P_re", "P_im", "I"])
REDUCED_COLUMNS = ["t", "w1", "w2", "w3", "wdot1", "wdot2", "wdot3", "H", "J", "P_re", "P_im", "I"]

# packed full state is [Re q, Im q, Re v, Im v]; CSV interleaves per body
_FULL_ORDER = [0, 3, 1, 4, 2, 5, 6, 9, 7, 10, 8, 11]


def _fmt(x) -> str:
    return format(float(x), ".17g")


def write_table(path, header, rows):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_fmt(x) if isinstance(x, (float, np.floating, int, np.integer))
                         and not isinstance(x, bool) else x for x in row])
    return atomic_write(path, buf.getvalue())


def read_table(path):
    rows = list(csv.reader(io.StringIO(_read_text(path))))
    if not rows:
        raise OutputError(path, "empty file, missing header")
    return rows[0], rows[1:]


def trajectory_rows(traj: Trajectory):
    d = traj.diagnostics
    P = np.asarray(d["P"], dtype=complex)
    cols = traj.states[:, _FULL_ORDER] if traj.kind == "full" else traj.states
    diag = np.column_stack([d["H"], d["J"], P.real, P.imag, d["I"]]) if len(traj) else np.zeros((0, 5))
    return np.column_stack([traj.times, cols, diag]) if len(traj) else np.zeros((0, 18 if traj.kind == "full" else 12))


def write_trajectory_csv(traj: Trajectory, path):
    header = FULL_COLUMNS if traj.kind == "full" else REDUCED_COLUMNS
    return write_table(path, header, trajectory_rows(traj))


def read_trajectory_csv(path, masses=EQUAL_MASSES) -> Trajectory:
    header, rows = read_table(path)
    if header == FULL_COLUMNS:
        kind, n = "full", 12
    elif header == REDUCED_COLUMNS:
        kind, n = "reduced", 6
    else:
        raise OutputError(path, "header matches neither the full nor the reduced trajectory schema")
    try:
        data = np.array([[float(x) for x in r] for r in rows], dtype=float).reshape(-1, len(header))
    except ValueError as e:
        raise OutputError(path, f"bad number: {e}") from e
    states = np.empty((len(data), n))
    if kind == "full":
        states[:, _FULL_ORDER] = data[:, 1:13]
    else:
        states[:] = data[:, 1:7]
    return Trajectory(data[:, 0], states, kind, masses)


# ---- JSON -----------------------------------------------------------------

def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        if np.iscomplexobj(x):
            return {"re": x.real.tolist(), "im": x.imag.tolist()}
        return x.tolist()
    if isinstance(x, (complex, np.complexfloating)):
        return _encode_c(x)
    if isinstance(x, np.generic):
        return x.item()
    return x


def trajectory_to_dict(traj: Trajectory, manifest: dict = None) -> dict:
    return {
        "manifest": manifest or {},
        "kind": traj.kind,
        "masses": list(traj.masses.as_tuple()),
        "termination": traj.termination,
        "columns": FULL_COLUMNS if traj.kind == "full" else REDUCED_COLUMNS,
        "times": traj.times.tolist(),
        "states": traj.states.tolist(),
        "diagnostics": _jsonable(traj.diagnostics),
        "meta": _jsonable(traj.meta),
    }


def trajectory_from_dict(d: dict) -> Trajectory:
    try:
        n = 12 if d["kind"] == "full" else 6
        traj = Trajectory(np.array(d["times"], dtype=float), np.array(d["states"], dtype=float).reshape(-1, n),
                          d["kind"], core.MassDistribution(*d["masses"]), d.get("termination", "time reached"))
    except (KeyError, TypeError) as e:
        raise ConfigError(f"not a trajectory record: {e}") from e
    traj.meta = dict(d.get("meta", {}))
    return traj


def dumps(obj) -> str:
    return json.dumps(_jsonable(obj), indent=1, sort_keys=True, allow_nan=True)


def write_json(obj, path):
    return atomic_write(path, dumps(obj) + "\n")


def read_json(path):
    try:
        return json.loads(_read_text(path))
    except json.JSONDecodeError as e:
        raise OutputError(path, f"invalid JSON: {e}") from e


def write_trajectory_json(traj: Trajectory, path, manifest: dict = None):
    return write_json(trajectory_to_dict(traj, manifest), path)


def read_trajectory_json(path) -> Trajectory:
    return trajectory_from_dict(read_json(path))


def read_trajectory(path, masses=EQUAL_MASSES) -> Trajectory:
    """Load a trajectory from .json or .csv by extension."""
    path = Path(path)
    if path.suffix.lower() == ".json":
        return read_trajectory_json(path)
    if path.suffix.lower() == ".csv":
        return read_trajectory_csv(path, masses)
    raise OutputError(path, "trajectory files must end in .csv or .json")


def write_events_csv(events, path):
    rows = [[e.time, *e.w, str(e.type), int(e.grazing), int(e.counted)] for e in events]
    return write_table(path, ["t", "w1", "w2", "w3", "type", "grazing", "counted"], rows)


def write_path_csv(times, nodes, path):
    rows = np.column_stack([times, nodes]) if len(times) else np.zeros((0, 4))
    return write_table(path, ["t", "w1", "w2", "w3"], rows)
