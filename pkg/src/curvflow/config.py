"""TOML run configuration with dotted keys (``speed.n``, ``flow.cfl_safety``, ...).

Every recognised key is listed in :data:`SCHEMA`; unknown keys, wrong types
and out-of-range values raise :class:`~curvflow.errors.ConfigError` carrying
the offending field and, when it can be located, the line number.
"""

from __future__ import annotations

import math
import re
import sys
from dataclasses import dataclass, field
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .errors import ConfigError
from .estimates import DEFAULT_GRID
from .flow import ProfileConfig, RunConfig
from .speed import SpeedSpec

_num = (int, float)

#: dotted key -> (accepted types, default)
SCHEMA = {
    "command": (str, None),
    "seed": (int, 0),
    "speed.n": (int, 4),
    "speed.k": (int, 3),
    "speed.rho": (_num, 0.05),
    "speed.kappa": (_num, 0.0),
    "profile.kind": (str, "neck"),
    "profile.R": (_num, 1.0),
    "profile.a": (_num, 0.2),
    "profile.L": (_num, 8.0),
    "profile.N": (int, 400),
    "profile.phase": (_num, 0.0),
    "profile.eps": (_num, 0.1),
    "profile.jitter": (_num, 0.0),
    "flow.cfl_safety": (_num, 0.2),
    "flow.max_rel_motion": (_num, 0.01),
    "flow.stop_G_max": (_num, None),
    "flow.stop_G_factor": (_num, 1e3),
    "flow.stop_t_max": (_num, math.inf),
    "flow.output_stride": (int, 100),
    "flow.integrator": (str, "ssprk3"),
    "flow.max_steps": (int, 5_000_000),
    "flow.min_margin": (_num, 0.1),
    "monitor.eps_grid": (list, list(DEFAULT_GRID)),
    "monitor.eta_grid": (list, list(DEFAULT_GRID)),
    "lemmas.alpha": (_num, 7.0),
    "lemmas.rhos": (list, [1.0, 0.5, 0.05]),
    "lemmas.count": (int, 100_000),
    "lemmas.grad_count": (int, 20_000),
    "lemmas.bound_count": (int, 20_000),
    "lemmas.bound_rhos": (list, [0.2, 0.1, 0.05, 0.025]),
    "lemmas.min_eig_count": (int, 10_000),
    "lemmas.refine_iterations": (int, 1000),
    "lemmas.regression_dir": (str, "regression"),
    "sweep.rhos": (list, [0.02, 0.05, 0.1, 0.3, 0.7]),
    "fit.run_dir": (str, None),
    "fit.u_column": (str, "min_u"),
    "fit.G_column": (str, "max_G"),
}


def _flatten(d, prefix=""):
    out = {}
    for k, v in d.items():
        key = f"{prefix}{k}"
        if isinstance(v, dict):
            out.update(_flatten(v, key + "."))
        else:
            out[key] = v
    return out


def _find_line(text, key):
    """Best-effort line number for a dotted key (1-based) or ``None``."""
    section, _, leaf = key.rpartition(".")
    lines = text.splitlines()
    current = ""
    for i, line in enumerate(lines, 1):
        s = line.split("#", 1)[0].strip()
        m = re.fullmatch(r"\[\s*([^\]]+?)\s*\]", s)
        if m:
            current = m.group(1)
            continue
        m = re.match(r"([A-Za-z0-9_.\s\"]+?)\s*=", s)
        if not m:
            continue
        name = re.sub(r"[\s\"]", "", m.group(1))
        full = f"{current}.{name}" if current else name
        if full == key or (not section and name == leaf and not current):
            return i
    return None


@dataclass
class Config:
    """Validated flat configuration."""

    values: dict
    path: Path | None = None
    text: str = ""
    explicit: set = field(default_factory=set)

    def __getitem__(self, key):
        return self.values[key]

    def error(self, key, message):
        return ConfigError(message, field=key, line=_find_line(self.text, key) if self.text else None)

    # ----- typed views -------------------------------------------------

    def speed(self, rho=None):
        v = self.values
        try:
            return SpeedSpec(v["speed.n"], v["speed.k"], v["speed.rho"] if rho is None else rho, v["speed.kappa"])
        except ValueError as exc:
            msg = str(exc)
            key = next((f"speed.{p}" for p in ("rho", "kappa", "k", "n") if msg.startswith(p)), "speed")
            raise self.error(key, msg) from exc

    def run_config(self, rho=None, seed=None):
        v = self.values
        profile = ProfileConfig(**{f: v[f"profile.{f}"] for f in ("kind", "R", "a", "L", "N", "phase", "eps", "jitter")})
        cfg = RunConfig(
            spec=self.speed(rho),
            profile=profile,
            cfl_safety=float(v["flow.cfl_safety"]),
            max_rel_motion=float(v["flow.max_rel_motion"]),
            stop_G_max=None if v["flow.stop_G_max"] is None else float(v["flow.stop_G_max"]),
            stop_G_factor=None
            if v["flow.stop_G_max"] is not None and "flow.stop_G_factor" not in self.explicit
            else float(v["flow.stop_G_factor"]),
            stop_t_max=float(v["flow.stop_t_max"]),
            output_stride=v["flow.output_stride"],
            integrator=v["flow.integrator"],
            max_steps=v["flow.max_steps"],
            min_margin=float(v["flow.min_margin"]),
            eps_grid=tuple(v["monitor.eps_grid"]),
            eta_grid=tuple(v["monitor.eta_grid"]),
            seed=v["seed"] if seed is None else int(seed),
        )
        try:
            return cfg.validate()
        except ConfigError as exc:
            exc.line = _find_line(self.text, exc.field) if exc.field and self.text else None
            raise


def _check_list(cfg, key, value):
    if not all(isinstance(x, _num) and not isinstance(x, bool) for x in value):
        raise cfg.error(key, f"{key} must be a list of numbers")


def build_config(raw, text="", path=None):
    flat = _flatten(raw)
    cfg = Config(values={}, path=path, text=text, explicit=set(flat))
    for key, value in flat.items():
        if key not in SCHEMA:
            raise cfg.error(key, f"unknown configuration key {key!r}")
        types, _ = SCHEMA[key]
        if isinstance(value, bool) or not isinstance(value, types):
            raise cfg.error(key, f"{key} has the wrong type ({type(value).__name__})")
        if isinstance(value, list):
            _check_list(cfg, key, value)
    cfg.values = {k: flat.get(k, default) for k, (_, default) in SCHEMA.items()}
    v = cfg.values
    for key in ("lemmas.count", "lemmas.grad_count", "lemmas.bound_count", "lemmas.min_eig_count"):
        if v[key] < 1:
            raise cfg.error(key, f"{key} must be positive")
    if v["lemmas.refine_iterations"] < 0:
        raise cfg.error("lemmas.refine_iterations", "refine_iterations must be >= 0")
    for key in ("lemmas.rhos", "lemmas.bound_rhos"):
        for rho in v[key]:
            if not 0 < rho <= 1:
                raise cfg.error(key, f"rho={rho} is outside (0, 1]")
    cfg.speed()
    return cfg


def load_config(path):
    """Read and validate a TOML config file."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from exc
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        m = re.search(r"line (\d+)", str(exc))
        raise ConfigError(f"malformed config {path}: {exc}", line=int(m.group(1)) if m else None) from exc
    return build_config(raw, text, path)


def default_config():
    return build_config({})


def example_path(name):
    """Path of a bundled example config (``neck``, ``sphere``, ``lemmas``, ``sweep``)."""
    return Path(__file__).with_name("configs") / f"{name}.toml"
