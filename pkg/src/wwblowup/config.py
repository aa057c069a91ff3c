"""Run configuration: a flat TOML file of dotted sections.

Every key has a default, so an empty file is a valid configuration.  Example::

    # deep-ish tank, single mode
    [grid]
    n = 256
    [physics]
    depth = 1.0
    [initial]
    preset = "linear-k1"

Unknown keys and out-of-range values are reported together, each with its
dotted path.
"""

from __future__ import annotations

import copy
import hashlib
import json
import math
import sys
from dataclasses import dataclass

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib


@dataclass(frozen=True)
class Option:
    default: object
    kind: type
    doc: str


OPTIONS: dict[str, Option] = {
    "grid.dim": Option(1, int, "spatial dimension of the surface (1 or 2)"),
    "grid.n": Option(128, int, "Fourier modes per direction (even)"),
    "grid.length": Option(2 * math.pi, float, "period of the box"),
    "physics.g": Option(9.81, float, "gravity (m/s^2)"),
    "physics.depth": Option(1.0, float, "still-water depth H (m)"),
    "indices.s": Option(2.0, float, "energy index s, s > 1 + d/2"),
    "indices.s0": Option(1.25, float, "Sobolev index of the sobolev criterion, s0 > 1/2 + d/2"),
    "indices.s0_reduced": Option(1.5, float, "Sobolev index of the reduced criterion, s0 > 3/4 + d/2"),
    "indices.eps": Option(0.1, float, "Holder excess eps, 0 < eps < s0 - 1/2 - d/2"),
    "integrator.dt": Option(0.0, float, "time step; 0 selects the stability bound"),
    "integrator.cfl": Option(2.0, float, "stability constant of the linear CFL bound"),
    "integrator.cfl_advective": Option(0.5, float, "advective bound dt <= c dx / max|grad psi| for automatic dt"),
    "integrator.t_end": Option(1.0, float, "final time"),
    "integrator.integrating_factor": Option(False, bool, "propagate the linear part exactly"),
    "integrator.filter": Option(False, bool, "high-mode exponential filter"),
    "elliptic.nz_upper": Option(48, int, "Chebyshev nodes in the upper strip block"),
    "elliptic.nz_lower": Option(32, int, "Chebyshev nodes in the lower strip block"),
    "elliptic.tol": Option(1e-10, float, "relative GMRES tolerance"),
    "monitor.sup_threshold": Option(1e6, float, "value treated as infinite for running sups"),
    "monitor.int_threshold": Option(1e6, float, "value treated as infinite for time integrals"),
    "monitor.stride": Option(1, int, "record every stride-th step"),
    "monitor.da_method": Option("fd", str, "'fd' (time difference of a) or 'elliptic'"),
    "monitor.sup_points": Option(2048, int, "interpolation points for sup norms (0: grid only)"),
    "monitor.stop_on_crossing": Option(True, bool, "stop the run at the first threshold crossing"),
    "io.out": Option("run", str, "output directory"),
    "io.snapshot_every": Option(0, int, "steps between snapshots (0: only at the end)"),
    "initial.preset": Option("rest", str, "named initial condition"),
    "initial.amplitude": Option(float("nan"), float, "preset amplitude (nan: preset default)"),
    "initial.wavenumber": Option(1, int, "mode number for the linear presets"),
    "initial.width": Option(0.5, float, "Gaussian width for steep-gaussian"),
    "initial.file": Option("", str, ".npz with arrays eta and psi (preset 'file')"),
}

# Keys that may differ between a snapshot and the configuration that resumes it.
RESUME_WHITELIST = ("io.", "integrator.t_end")


class ConfigError(ValueError):
    def __init__(self, problems: list[str]):
        super().__init__("invalid configuration:\n  " + "\n  ".join(problems))
        self.problems = problems


def _flatten(d: dict, prefix: str = "") -> dict:
    out = {}
    for k, v in d.items():
        key = f"{prefix}{k}"
        if isinstance(v, dict):
            out.update(_flatten(v, key + "."))
        else:
            out[key] = v
    return out


def _coerce(key: str, value, problems: list):
    kind = OPTIONS[key].kind
    if kind is bool:
        if isinstance(value, bool):
            return value
    elif kind is int:
        if isinstance(value, int) and not isinstance(value, bool):
            return value
    elif kind is float:
        if isinstance(value, (int, float)) and not isinstance(value, bool):
            return float(value)
    elif kind is str:
        if isinstance(value, str):
            return value
    problems.append(f"{key}: expected {kind.__name__}, got {value!r}")
    return OPTIONS[key].default


class RunConfig:
    """Validated flat mapping from dotted keys to values."""

    def __init__(self, values: dict | None = None):
        problems: list[str] = []
        merged = {k: o.default for k, o in OPTIONS.items()}
        for k, v in (values or {}).items():
            if k not in OPTIONS:
                problems.append(f"{k}: unknown key")
                continue
            merged[k] = _coerce(k, v, problems)
        self.values = merged
        problems += _validate(merged)
        if problems:
            raise ConfigError(problems)

    def __getitem__(self, key: str):
        return self.values[key]

    def section(self, name: str) -> dict:
        p = name + "."
        return {k[len(p):]: v for k, v in self.values.items() if k.startswith(p)}

    def with_overrides(self, **kv) -> "RunConfig":
        vals = copy.deepcopy(self.values)
        vals.update({k.replace("__", "."): v for k, v in kv.items()})
        return RunConfig(vals)

    def updated(self, values: dict) -> "RunConfig":
        vals = dict(self.values)
        vals.update(values)
        return RunConfig(vals)

    def physics_items(self) -> dict:
        return {k: v for k, v in self.values.items() if not k.startswith(RESUME_WHITELIST)}

    def hash(self) -> str:
        blob = json.dumps({k: repr(v) for k, v in self.physics_items().items()}, sort_keys=True)
        return hashlib.sha256(blob.encode()).hexdigest()

    def to_toml(self) -> str:
        lines = []
        section = None
        for k, v in self.values.items():
            sec, name = k.split(".", 1)
            if sec != section:
                lines.append(f"\n[{sec}]" if lines else f"[{sec}]")
                section = sec
            lines.append(f"{name} = {_toml_value(v)}")
        return "\n".join(lines) + "\n"

    def diff(self, other: "RunConfig", physics_only: bool = True) -> list[str]:
        a = self.physics_items() if physics_only else self.values
        b = other.physics_items() if physics_only else other.values
        return [f"{k}: {a[k]!r} -> {b[k]!r}" for k in a if repr(a[k]) != repr(b[k])]


def _toml_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        if math.isnan(v):
            return "nan"
        return repr(v)
    if isinstance(v, str):
        return json.dumps(v)
    return str(v)


def _validate(c: dict) -> list[str]:
    p = []
    d = c["grid.dim"]
    if d not in (1, 2):
        p.append("grid.dim: must be 1 or 2")
        d = 1
    if c["grid.n"] < 8 or c["grid.n"] % 2:
        p.append("grid.n: must be an even integer >= 8")
    if not c["grid.length"] > 0:
        p.append("grid.length: must be positive")
    if not c["physics.g"] > 0:
        p.append("physics.g: must be positive")
    if not c["physics.depth"] > 0:
        p.append("physics.depth: must be positive")
    if not c["indices.s"] > 1 + d / 2:
        p.append(f"indices.s: need s > {1 + d / 2}")
    if not c["indices.s0"] > 0.5 + d / 2:
        p.append(f"indices.s0: need s0 > {0.5 + d / 2}")
    if not c["indices.s0_reduced"] > 0.75 + d / 2:
        p.append(f"indices.s0_reduced: need s0_reduced > {0.75 + d / 2}")
    eps = c["indices.eps"]
    bound = min(c["indices.s0"], c["indices.s0_reduced"]) - 0.5 - d / 2
    if not 0 < eps < bound:
        p.append(f"indices.eps: need 0 < eps < {bound:g}")
    elif abs(eps - round(eps)) < 1e-12 or abs(0.5 + eps - round(0.5 + eps)) < 1e-12:
        p.append("indices.eps: Holder indices 1+eps and eps must be non-integer")
    if c["integrator.dt"] < 0:
        p.append("integrator.dt: must be >= 0")
    for k in ("integrator.cfl", "integrator.cfl_advective"):
        if not c[k] > 0:
            p.append(f"{k}: must be positive")
    if not c["integrator.t_end"] >= 0:
        p.append("integrator.t_end: must be >= 0")
    for k in ("elliptic.nz_upper", "elliptic.nz_lower"):
        if c[k] < 4:
            p.append(f"{k}: must be >= 4")
    if not 0 < c["elliptic.tol"] < 1e-2:
        p.append("elliptic.tol: must lie in (0, 1e-2)")
    for k in ("monitor.sup_threshold", "monitor.int_threshold"):
        if not c[k] > 0:
            p.append(f"{k}: must be positive")
    if c["monitor.stride"] < 1:
        p.append("monitor.stride: must be >= 1")
    if c["monitor.da_method"] not in ("fd", "elliptic"):
        p.append("monitor.da_method: must be 'fd' or 'elliptic'")
    if c["monitor.sup_points"] < 0:
        p.append("monitor.sup_points: must be >= 0")
    if c["io.snapshot_every"] < 0:
        p.append("io.snapshot_every: must be >= 0")
    from .presets import PRESETS

    if c["initial.preset"] not in PRESETS:
        p.append(f"initial.preset: unknown preset {c['initial.preset']!r} (choose from {', '.join(PRESETS)})")
    if c["initial.preset"] == "file" and not c["initial.file"]:
        p.append("initial.file: required for preset 'file'")
    if c["initial.wavenumber"] < 0:
        p.append("initial.wavenumber: must be >= 0")
    if not c["initial.width"] > 0:
        p.append("initial.width: must be positive")
    return p


def load_config(path: str | None = None, text: str | None = None) -> RunConfig:
    if path is not None:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    else:
        data = tomllib.loads(text or "")
    return RunConfig(_flatten(data))


def describe() -> str:
    lines = []
    for k, o in OPTIONS.items():
        lines.append(f"{k:32s} {_toml_value(o.default):>20s}  {o.doc}")
    return "\n".join(lines)
