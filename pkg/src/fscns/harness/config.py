"""Run configuration files.

A configuration is an INI text with the sections ``grid``, ``physics``,
``stepper``, ``initial``, ``diagnostics`` and ``run``. Every key outside the
schema is an error, and validation reports all failing fields at once.
A sweep plan is a configuration with an additional ``sweep`` section.
"""
from __future__ import annotations

import ast
import configparser
import inspect
from dataclasses import dataclass, field, fields, replace

from ..dynamics.physics import PhysParams
from ..dynamics.presets import PRESETS
from ..dynamics.stepper import StepperConfig
from ..errors import ConfigError
from ..geometry import build_grid

__all__ = ["RunConfig", "SweepPlan", "parse_config", "serialize_config", "load_config",
           "parse_plan", "serialize_plan", "load_plan", "COMPARISONS"]

COMPARISONS = ("cauchy_sup_norm", "theta_boundedness", "layer_scaling")


def _bool(text):
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _opt_float(text):
    return None if text.strip().lower() in ("", "none") else float(text)


def _opt_int(text):
    return None if text.strip().lower() in ("", "none") else int(text)


def _float_or_auto(text):
    return "auto" if text.strip().lower() == "auto" else float(text)


def _literal(text):
    t = text.strip()
    try:
        return ast.literal_eval(t)
    except (ValueError, SyntaxError):
        return t


SCHEMA = {
    "grid": {"N_y": int, "N_z": int, "Z_max": float, "stretch": float, "L": float, "d_h": int},
    "physics": {"gamma": float, "mu": float, "lam": float, "eps": float, "sigma": float,
                "p_e": float, "bottom_bc": str, "c0_health": float, "C0_health": float},
    "stepper": {"cfl": float, "dt_max": float, "t_end": float, "output_every": float,
                "scheme": str, "capillary_factor": float, "relax_factor": float,
                "dt": _opt_float, "check_dt": _bool},
    "diagnostics": {"m_cap": int, "alpha0_max": int, "weighted": _bool, "theta": _bool,
                    "energy": _bool, "layer": _bool, "identities": _bool},
    "run": {"seed": int, "name": str, "max_steps": _opt_int, "snapshots": _bool},
}

GRID_DEFAULTS = {"N_y": 64, "N_z": 64, "Z_max": 3.0, "stretch": 1.0, "L": 6.283185307179586,
                 "d_h": 1}
DIAG_DEFAULTS = {"m_cap": 2, "alpha0_max": 1, "weighted": False, "theta": True,
                 "energy": True, "layer": True, "identities": False}
RUN_DEFAULTS = {"seed": 0, "name": "run", "max_steps": None, "snapshots": True}


@dataclass
class RunConfig:
    """Validated run description."""

    grid: dict = field(default_factory=lambda: dict(GRID_DEFAULTS))
    physics: dict = field(default_factory=dict)
    stepper: dict = field(default_factory=dict)
    preset: str = "equilibrium"
    preset_params: dict = field(default_factory=dict)
    diagnostics: dict = field(default_factory=lambda: dict(DIAG_DEFAULTS))
    run: dict = field(default_factory=lambda: dict(RUN_DEFAULTS))

    def build_grid(self):
        return build_grid(**self.grid)

    def build_params(self):
        return PhysParams(**self.physics)

    def build_stepper_config(self):
        return StepperConfig(**self.stepper)

    @property
    def seed(self):
        return self.run["seed"]

    def with_seed(self, seed):
        return replace(self, run={**self.run, "seed": int(seed)})

    def with_physics(self, **kw):
        return replace(self, physics={**self.physics, **kw})

    def with_grid(self, **kw):
        return replace(self, grid={**self.grid, **kw})

    def with_stepper(self, **kw):
        return replace(self, stepper={**self.stepper, **kw})

    def preset_kwargs(self):
        """Preset keyword arguments, with the seed injected when accepted."""
        kw = dict(self.preset_params)
        if "seed" in inspect.signature(PRESETS[self.preset]).parameters and "seed" not in kw:
            kw["seed"] = self.seed
        return kw


def _dataclass_defaults(cls):
    return {f.name: f.default for f in fields(cls)}


def _convert(section, raw, problems):
    out = {}
    schema = SCHEMA[section]
    for key, text in raw.items():
        if key not in schema:
            problems.append(f"{section}.{key}: unknown key")
            continue
        try:
            out[key] = schema[key](text)
        except ValueError as err:
            problems.append(f"{section}.{key}: {err}")
    return out


def _prefixed(section, err):
    return [f"{section}.{p}" for p in err.problems]


def validate(cfg):
    """Check every section against the module preconditions.

    Raises
    ------
    ConfigError
        Listing every failing field.
    """
    problems = []
    try:
        build_grid(**cfg.grid)
    except ConfigError as err:
        problems += _prefixed("grid", err)
    except TypeError as err:
        problems.append(f"grid: {err}")
    try:
        PhysParams(**cfg.physics)
    except ConfigError as err:
        problems += _prefixed("physics", err)
    try:
        StepperConfig(**cfg.stepper)
    except ConfigError as err:
        problems += _prefixed("stepper", err)
    if cfg.preset not in PRESETS:
        problems.append(f"initial.preset: unknown preset {cfg.preset!r}, "
                        f"choose from {sorted(PRESETS)}")
    else:
        sig = inspect.signature(PRESETS[cfg.preset]).parameters
        allowed = [k for k in sig if k not in ("grid", "params")]
        for k in cfg.preset_params:
            if k not in allowed:
                problems.append(f"initial.{k}: not a parameter of preset {cfg.preset!r} "
                                f"(allowed: {allowed})")
    d = cfg.diagnostics
    if not 1 <= d["m_cap"] <= 3:
        problems.append(f"diagnostics.m_cap: must lie in [1, 3], got {d['m_cap']}")
    if d["alpha0_max"] not in (0, 1, 2):
        problems.append(f"diagnostics.alpha0_max: must be 0, 1 or 2, got {d['alpha0_max']}")
    if cfg.run["max_steps"] is not None and cfg.run["max_steps"] < 1:
        problems.append("run.max_steps: must be positive")
    if problems:
        raise ConfigError(problems)
    return cfg


def _from_parser(cp, extra_sections=()):
    problems = []
    known = set(SCHEMA) | {"initial"} | set(extra_sections)
    for sec in cp.sections():
        if sec not in known:
            problems.append(f"{sec}: unknown section")
    sec = {name: _convert(name, dict(cp[name]) if cp.has_section(name) else {}, problems)
           for name in SCHEMA}
    init = dict(cp["initial"]) if cp.has_section("initial") else {}
    preset = init.pop("preset", "equilibrium").strip()
    cfg = RunConfig(
        grid={**GRID_DEFAULTS, **sec["grid"]},
        physics={**_dataclass_defaults(PhysParams), **sec["physics"]},
        stepper={**_dataclass_defaults(StepperConfig), **sec["stepper"]},
        preset=preset,
        preset_params={k: _literal(v) for k, v in init.items()},
        diagnostics={**DIAG_DEFAULTS, **sec["diagnostics"]},
        run={**RUN_DEFAULTS, **sec["run"]},
    )
    try:
        validate(cfg)
    except ConfigError as err:
        problems += err.problems
    if problems:
        raise ConfigError(problems)
    return cfg


def _parser():
    cp = configparser.ConfigParser(interpolation=None, strict=True)
    cp.optionxform = str
    return cp


def _read(text):
    cp = _parser()
    try:
        cp.read_string(text)
    except configparser.Error as err:
        raise ConfigError([f"syntax: {err}"]) from None
    return cp


def parse_config(text):
    """Parse and validate configuration ``text`` into a :class:`RunConfig`."""
    return _from_parser(_read(text))


def _fmt(v):
    if v is None:
        return "none"
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, str):
        return v
    return repr(v)


def _sections(cfg):
    init = {"preset": cfg.preset, **{k: _fmt_literal(v) for k, v in cfg.preset_params.items()}}
    return [
        ("grid", cfg.grid), ("physics", cfg.physics), ("stepper", cfg.stepper),
        ("initial", init), ("diagnostics", cfg.diagnostics), ("run", cfg.run),
    ]


def _fmt_literal(v):
    return repr(v) if isinstance(v, str) else _fmt(v)


def _emit(sections):
    lines = []
    for name, values in sections:
        lines.append(f"[{name}]")
        for k in sorted(values) if name == "initial" else values:
            val = values[k]
            lines.append(f"{k} = {val if name == 'initial' else _fmt(val)}")
        lines.append("")
    return "\n".join(lines)


def serialize_config(cfg):
    """Canonical text of ``cfg`` with every field spelled out."""
    return _emit(_sections(cfg))


def load_config(path):
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())


@dataclass
class SweepPlan:
    """Family of runs differing along one parameter axis."""

    base: RunConfig
    axis: str
    values: list
    comparison: tuple = COMPARISONS
    limit: bool = True

    def member(self, value):
        return self.base.with_physics(**{self.axis: float(value)})


def parse_plan(text):
    """Parse a sweep plan: a configuration plus a ``[sweep]`` section.

    ``[sweep]`` keys: ``axis`` (``eps`` or ``sigma``), ``values`` (comma
    separated, strictly decreasing, positive), ``comparison`` (comma
    separated subset of :data:`COMPARISONS`) and ``limit`` (also run the
    axis value 0 as reference).
    """
    cp = _read(text)
    problems = []
    raw = dict(cp["sweep"]) if cp.has_section("sweep") else {}
    if not raw:
        problems.append("sweep: missing section")
    axis = raw.pop("axis", "eps").strip()
    vals_text = raw.pop("values", "")
    comp_text = raw.pop("comparison", ",".join(COMPARISONS))
    limit_text = raw.pop("limit", "true")
    for k in raw:
        problems.append(f"sweep.{k}: unknown key")
    if axis not in ("eps", "sigma"):
        problems.append(f"sweep.axis: must be eps or sigma, got {axis!r}")
    try:
        values = [float(x) for x in vals_text.split(",") if x.strip()]
    except ValueError as err:
        problems.append(f"sweep.values: {err}")
        values = []
    if not values:
        problems.append("sweep.values: at least one value required")
    if any(v <= 0 for v in values):
        problems.append("sweep.values: values must be positive")
    if any(b >= a for a, b in zip(values, values[1:])):
        problems.append("sweep.values: values must be strictly decreasing")
    comparison = tuple(c.strip() for c in comp_text.split(",") if c.strip())
    for c in comparison:
        if c not in COMPARISONS:
            problems.append(f"sweep.comparison: unknown comparison {c!r}")
    try:
        limit = _bool(limit_text)
    except ValueError as err:
        problems.append(f"sweep.limit: {err}")
        limit = True
    cp.remove_section("sweep")
    try:
        base = _from_parser(cp)
    except ConfigError as err:
        problems += err.problems
        base = None
    if problems:
        raise ConfigError(problems)
    return SweepPlan(base, axis, values, comparison, limit)


def serialize_plan(plan):
    sweep = {"axis": plan.axis, "values": ", ".join(repr(float(v)) for v in plan.values),
             "comparison": ", ".join(plan.comparison), "limit": plan.limit}
    return serialize_config(plan.base) + _emit([("sweep", sweep)])


def load_plan(path):
    with open(path, encoding="utf-8") as fh:
        return parse_plan(fh.read())
