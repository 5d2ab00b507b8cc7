"""Flat ``key = value`` configuration with dotted section keys.

A config file is a list of lines ``section.key = value``; ``#`` starts a
comment, values may be quoted, and vectors are comma separated (optionally in
brackets).  ``[section]`` headers prefix the keys that follow, so small TOML
files of the same shape also load.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Optional

import numpy as np

from .dynamics import IntegratorConfig
from .errors import ConfigError
from .systems.chaplygin import ChaplyginParams
from .systems.revolution import RevolutionParams, ShapeProfile

SEED_ENV = "NONHOLO_SEED"


def _vec(s):
    s = s.strip()
    if s.startswith("[") and s.endswith("]"):
        s = s[1:-1]
    parts = [p for p in (x.strip() for x in s.split(",")) if p]
    return tuple(float(p) for p in parts)


def _str(s):
    return s


def _choice(*options):
    def parse(s):
        if s not in options:
            raise ValueError(f"expected one of {list(options)}")
        return s
    return parse


def _bool(s):
    low = s.lower()
    if low in ("true", "yes", "1"):
        return True
    if low in ("false", "no", "0"):
        return False
    raise ValueError("expected true or false")


# key -> (parser, default)
SCHEMA = {
    "system": (_choice("chaplygin", "revolution"), "chaplygin"),
    "seed": (int, 0),
    "chaplygin.I1": (float, 2.0),
    "chaplygin.I3": (float, 1.0),
    "chaplygin.m": (float, 1.0),
    "chaplygin.R": (float, 1.0),
    "chaplygin.potential": (_choice("none", "uniform-gravity-like"), "none"),
    "chaplygin.g0": (float, 9.81),
    "chaplygin.offset": (_vec, (0.0, 0.0, 0.1)),
    "chaplygin.theta_min": (float, 1e-3),
    "revolution.profile": (_choice("sphere", "offset-sphere", "ellipsoid"), "ellipsoid"),
    "revolution.R": (float, 1.0),
    "revolution.offset": (float, 0.3),
    "revolution.a": (float, 1.0),
    "revolution.c": (float, 0.6),
    "revolution.I1": (float, 2.0),
    "revolution.I3": (float, 1.0),
    "revolution.m": (float, 1.0),
    "revolution.potential": (_choice("none", "gravity"), "none"),
    "revolution.g0": (float, 9.81),
    "revolution.theta_min": (float, 1e-3),
    "revolution.ode_steps": (int, 4000),
    "integrator.method": (_choice("rk4-fixed", "rkf45-adaptive"), "rk4-fixed"),
    "integrator.step": (float, 1e-3),
    "integrator.t_end": (float, 10.0),
    "integrator.stride": (int, 10),
    "integrator.rtol": (float, 1e-9),
    "integrator.atol": (float, 1e-12),
    "initial.q": (_vec, None),
    "initial.pi": (_vec, None),
    "batch.count": (int, 1),
    "verify.n_samples": (int, 1000),
    "verify.jacobi_samples": (int, 200),
}


def _strip_comment(line):
    out, quote = [], None
    for ch in line:
        if quote:
            if ch == quote:
                quote = None
        elif ch in "\"'":
            quote = ch
        elif ch == "#":
            break
        out.append(ch)
    return "".join(out).strip()


def _unquote(v):
    v = v.strip()
    if len(v) >= 2 and v[0] == v[-1] and v[0] in "\"'":
        return v[1:-1]
    return v


def parse_text(text, source="<config>") -> Dict[str, str]:
    """Raw ``key -> value`` strings; later keys override earlier ones."""
    raw, section = {}, ""
    for lineno, line in enumerate(text.splitlines(), 1):
        line = _strip_comment(line)
        if not line:
            continue
        if line.startswith("[") and line.endswith("]") and "=" not in line:
            section = line[1:-1].strip()
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {line!r}")
        key, value = line.split("=", 1)
        key = key.strip()
        if section:
            key = f"{section}.{key}"
        raw[key] = _unquote(value)
    return raw


def parse_override(item):
    if "=" not in item:
        raise ConfigError(f"--set expects key=value, got {item!r}")
    key, value = item.split("=", 1)
    return key.strip(), _unquote(value)


@dataclass(frozen=True)
class RunConfig:
    values: Dict[str, object]

    def __getitem__(self, key):
        return self.values[key]

    @property
    def system(self):
        return self.values["system"]

    @property
    def seed(self):
        return self.values["seed"]

    def chaplygin_params(self) -> ChaplyginParams:
        v = self.values
        return _build(ChaplyginParams, I1=v["chaplygin.I1"], I3=v["chaplygin.I3"], m=v["chaplygin.m"],
                      R=v["chaplygin.R"], potential=v["chaplygin.potential"], g0=v["chaplygin.g0"],
                      offset=v["chaplygin.offset"], theta_min=v["chaplygin.theta_min"])

    def profile(self) -> ShapeProfile:
        v = self.values
        return _build(ShapeProfile, kind=v["revolution.profile"], R=v["revolution.R"],
                      offset=v["revolution.offset"], a=v["revolution.a"], c=v["revolution.c"])

    def revolution_params(self) -> RevolutionParams:
        v = self.values
        return _build(RevolutionParams, I1=v["revolution.I1"], I3=v["revolution.I3"], m=v["revolution.m"],
                      potential=v["revolution.potential"], g0=v["revolution.g0"],
                      theta_min=v["revolution.theta_min"])

    def integrator(self, t_end: Optional[float] = None) -> IntegratorConfig:
        v = self.values
        return _build(IntegratorConfig, method=v["integrator.method"], step=v["integrator.step"],
                      t_end=v["integrator.t_end"] if t_end is None else t_end, rtol=v["integrator.rtol"],
                      atol=v["integrator.atol"], sample_stride=v["integrator.stride"])


def _build(cls, **kw):
    try:
        return cls(**kw)
    except (ValueError, TypeError) as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path=None, overrides=(), environ=None) -> RunConfig:
    """Defaults, then the file, then ``--set`` overrides, then ``NONHOLO_SEED``."""
    environ = os.environ if environ is None else environ
    raw = {}
    if path is not None:
        p = Path(path)
        if not p.is_file():
            raise ConfigError(f"config file not found: {path}")
        raw.update(parse_text(p.read_text(), str(p)))
    for item in overrides:
        k, v = parse_override(item)
        raw[k] = v
    if environ.get(SEED_ENV, "").strip():
        raw["seed"] = environ[SEED_ENV].strip()
    values = {k: default for k, (_, default) in SCHEMA.items()}
    for key, text in raw.items():
        if key not in SCHEMA:
            raise ConfigError(f"unknown config key {key!r}")
        parser = SCHEMA[key][0]
        try:
            values[key] = parser(text)
        except ValueError as exc:
            raise ConfigError(f"bad value for {key}: {text!r} ({exc})") from exc
    for key in ("initial.q", "initial.pi"):
        if values[key] is not None:
            values[key] = np.array(values[key])
    return RunConfig(values)
