"""INI configuration for the command-line front end.

A config has the sections ``system``, ``grid``, ``matching``, ``simulate``,
``analyze`` and ``output``; only ``system`` is required.  Free functions
and custom fields are written in the expression language of ``expr``::

    [system]
    preset = pendulum_cart
    b = 0.5

    [matching]
    route = grid
    mu_boundary = 1
    h = 1
    w = 0.15*y^2
    sigma0 = 0.25
    damping = 2

A custom system replaces ``preset`` with ``g12``, ``g22``, ``V`` (and
optionally ``c11`` .. ``c22``) as expressions in x1, x2, and then needs
the chart bounds in ``[grid]``.
"""
from __future__ import annotations

import configparser
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, ParseError
from .expr import parse_expression
from .fields import AnalyticField, Chart, ConstantField
from .geometry import System2DOF
from .matching import DesignData
from .simulate import SimSettings

SECTIONS = ("system", "grid", "matching", "simulate", "analyze", "output")


@dataclass
class GridConfig:
    x1_min: float | None = None
    x1_max: float | None = None
    x2_min: float | None = None
    x2_max: float | None = None
    n1: int | None = None
    n2: int | None = None


@dataclass
class MatchingConfig:
    route: str = "grid"
    mu_boundary: str | None = None
    h: str | None = None
    w: str | None = None
    chat21: str | None = None
    chat22: str | None = None
    sigma0: float | None = None
    x1_ref: float = 0.0
    x2_ref: float = 0.0
    mu_axis: str = "x2"
    damping: float | None = None
    degree: int = 120
    samples: int = 500


@dataclass
class SimulateConfig:
    t_final: float = 10.0
    dt: float = 0.01
    rtol: float = 1e-9
    atol: float = 1e-9
    max_step: float = 1e-2
    method: str = "RK45"
    kinds: tuple = ("closed_loop",)
    initial_states: tuple = ()


@dataclass
class AnalyzeConfig:
    O: tuple | None = None
    D: tuple | None = None
    samples_box: tuple | None = None
    sample_counts: tuple = (2, 2, 2, 2)
    t_horizon: float | None = None
    weights: tuple = (1.0, 1.0, 1.0, 1.0)
    n_boundary: int = 512


@dataclass
class Config:
    path: str
    system: dict
    grid: GridConfig = field(default_factory=GridConfig)
    matching: MatchingConfig = field(default_factory=MatchingConfig)
    simulate: SimulateConfig = field(default_factory=SimulateConfig)
    analyze: AnalyzeConfig = field(default_factory=AnalyzeConfig)
    out_dir: str = "out"
    text: str = ""

    @property
    def preset_name(self):
        return self.system.get("preset")


# --- parsing helpers -----------------------------------------------------------

def _float(sec, key, raw):
    try:
        return float(parse_expression(raw)())
    except (ParseError, ValueError, ArithmeticError) as exc:
        raise ConfigError(f"[{sec}] {key}: not a number: {exc}") from None


def _int(sec, key, raw):
    try:
        return int(raw)
    except ValueError:
        raise ConfigError(f"[{sec}] {key}: not an integer: {raw!r}") from None


def _vector(sec, key, raw, n=None):
    parts = [p for p in raw.replace(";", ",").split(",") if p.strip()]
    vals = tuple(_float(sec, key, p) for p in parts)
    if n is not None and len(vals) != n:
        raise ConfigError(f"[{sec}] {key}: expected {n} values, got {len(vals)}")
    return vals


def _expression(sec, key, raw, allowed):
    try:
        e = parse_expression(raw)
    except ParseError as exc:
        raise ConfigError(f"[{sec}] {key}: {exc}") from None
    extra = e.variables() - set(allowed)
    if extra:
        raise ConfigError(f"[{sec}] {key}: unexpected variables {sorted(extra)}; "
                          f"allowed: {sorted(allowed)}")
    return raw


def _fill(obj, sec, items, kinds):
    for key, raw in items.items():
        if key not in kinds:
            raise ConfigError(f"[{sec}] unknown key {key!r}")
        kind = kinds[key]
        if kind is float:
            val = _float(sec, key, raw)
        elif kind is int:
            val = _int(sec, key, raw)
        elif kind == "vec4":
            val = _vector(sec, key, raw, 4)
        elif kind == "words":
            val = tuple(w.strip() for w in raw.split(",") if w.strip())
        elif isinstance(kind, tuple):
            val = _expression(sec, key, raw, kind)
        else:
            val = raw.strip()
        setattr(obj, key, val)


def load_config(path=None, text=None):
    """Parse and validate a config file (or its ``text``)."""
    cp = configparser.ConfigParser(inline_comment_prefixes=("#",), interpolation=None)
    cp.optionxform = str  # keys are case-sensitive (V, O, D)
    try:
        if text is None:
            with open(path, encoding="utf-8") as fh:
                text = fh.read()
        cp.read_string(text, source=str(path or "<string>"))
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from None
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from None
    unknown = [s for s in cp.sections() if s not in SECTIONS]
    if unknown:
        raise ConfigError(f"unknown sections {unknown}; known: {list(SECTIONS)}")
    if not cp.has_section("system"):
        raise ConfigError("missing [system] section")
    cfg = Config(path=str(path or ""), system=dict(cp["system"]), text=text)

    if cp.has_section("grid"):
        _fill(cfg.grid, "grid", dict(cp["grid"]),
              {"x1_min": float, "x1_max": float, "x2_min": float, "x2_max": float,
               "n1": int, "n2": int})
    if cp.has_section("matching"):
        y_only, xy = ("y",), ("x1", "x2")
        _fill(cfg.matching, "matching", dict(cp["matching"]),
              {"route": str, "mu_boundary": ("x1", "x2", "y"), "h": y_only, "w": y_only,
               "chat21": xy, "chat22": xy, "sigma0": float, "x1_ref": float,
               "x2_ref": float, "mu_axis": str, "damping": float, "degree": int,
               "samples": int})
        if cfg.matching.route not in ("grid", "analytic"):
            raise ConfigError("[matching] route must be 'grid' or 'analytic'")
        if cfg.matching.mu_axis not in ("x1", "x2"):
            raise ConfigError("[matching] mu_axis must be 'x1' or 'x2'")
        if (cfg.matching.chat21 is None) != (cfg.matching.chat22 is None):
            raise ConfigError("[matching] give both chat21 and chat22 or neither")
        if cfg.matching.chat21 is not None and cfg.matching.damping:
            raise ConfigError("[matching] give either chat21/chat22 or damping, not both")
    if cp.has_section("simulate"):
        items = dict(cp["simulate"])
        states = items.pop("initial_states", None)
        _fill(cfg.simulate, "simulate", items,
              {"t_final": float, "dt": float, "rtol": float, "atol": float,
               "max_step": float, "method": str, "kinds": "words"})
        if states is not None:
            cfg.simulate.initial_states = tuple(
                _vector("simulate", "initial_states", s, 4) for s in states.split(";") if s.strip())
        if cfg.simulate.t_final <= 0 or cfg.simulate.dt <= 0:
            raise ConfigError("[simulate] t_final and dt must be positive")
        bad = set(cfg.simulate.kinds) - {"closed_loop", "open_loop", "matched"}
        if bad:
            raise ConfigError(f"[simulate] unknown kinds {sorted(bad)}")
        try:
            SimSettings(cfg.simulate.rtol, cfg.simulate.atol, cfg.simulate.max_step,
                        cfg.simulate.method)
        except ValueError as exc:
            raise ConfigError(f"[simulate] {exc}") from None
    if cp.has_section("analyze"):
        _fill(cfg.analyze, "analyze", dict(cp["analyze"]),
              {"O": "vec4", "D": "vec4", "samples_box": "vec4", "sample_counts": "vec4",
               "t_horizon": float, "weights": "vec4", "n_boundary": int})
        cfg.analyze.sample_counts = tuple(int(c) for c in cfg.analyze.sample_counts)
        for key in ("O", "D", "samples_box", "weights"):
            v = getattr(cfg.analyze, key)
            if v is not None and min(v) <= 0:
                raise ConfigError(f"[analyze] {key} entries must be positive")
    if cp.has_section("output"):
        _fill(cfg, "output", dict(cp["output"]), {"dir": str})
        if hasattr(cfg, "dir"):
            cfg.out_dir = cfg.__dict__.pop("dir")
    _check_system(cfg)
    return cfg


def _check_system(cfg):
    s = dict(cfg.system)
    if "preset" in s:
        from .presets import get_preset
        name = s.pop("preset").strip()
        try:
            get_preset(name, **{k: _float("system", k, v) for k, v in s.items()})
        except ValueError as exc:
            raise ConfigError(f"[system] {exc}") from None
        return
    needed = {"g12", "g22", "V"}
    if not needed <= set(s):
        raise ConfigError("[system] needs 'preset' or the fields g12, g22, V")
    extra = set(s) - needed - {"c11", "c12", "c21", "c22", "name"}
    if extra:
        raise ConfigError(f"[system] unknown keys {sorted(extra)}")
    for k in set(s) - {"name"}:
        _expression("system", k, s[k], ("x1", "x2"))
    g = cfg.grid
    if None in (g.x1_min, g.x1_max, g.x2_min, g.x2_max):
        raise ConfigError("[grid] a custom system needs x1_min, x1_max, x2_min, x2_max")


# --- building objects -------------------------------------------------------------

def expression_field(src, chart, name=""):
    """AnalyticField of an expression in x1, x2 with symbolic partials."""
    e = parse_expression(src)
    if not e.variables():
        return ConstantField(float(e()), name=name)
    d1, d2 = e.diff("x1"), e.diff("x2")

    def wrap(ex):
        return lambda a, b: ex(x1=a, x2=b) + 0.0 * a + 0.0 * b

    return AnalyticField(wrap(e), wrap(d1), wrap(d2), chart, name=name)


def chart_of(cfg, default=None):
    g = cfg.grid
    base = default
    vals = {}
    for k in ("x1_min", "x1_max", "x2_min", "x2_max"):
        v = getattr(g, k)
        vals[k] = v if v is not None else getattr(base, k)
    vals["n1"] = g.n1 if g.n1 is not None else (base.n1 if base else 241)
    vals["n2"] = g.n2 if g.n2 is not None else (base.n2 if base else 241)
    try:
        return Chart(**vals)
    except ValueError as exc:
        raise ConfigError(f"[grid] {exc}") from None


def build_system(cfg):
    """The System2DOF named by the config."""
    s = dict(cfg.system)
    if "preset" in s:
        from .presets import get_preset
        p = get_preset(s.pop("preset").strip(), **{k: _float("system", k, v) for k, v in s.items()})
        default = p.system().chart
        return p.system(chart_of(cfg, default))
    chart = chart_of(cfg)
    zero = ConstantField(0.0)
    c = tuple(tuple(expression_field(s[k], chart, k) if k in s else zero for k in row)
              for row in (("c11", "c12"), ("c21", "c22")))
    return System2DOF(g12=expression_field(s["g12"], chart, "g12"),
                      g22=expression_field(s["g22"], chart, "g22"),
                      V=expression_field(s["V"], chart, "V"), c=c, chart=chart,
                      name=s.get("name", "custom"))


def _one_var(src, var):
    e = parse_expression(src)
    if not e.variables():
        val = float(e())
        return lambda t: np.zeros_like(np.asarray(t, dtype=float)) + val
    return e.as_function(var)


def build_design(cfg, sys):
    """DesignData from [matching], falling back to the preset's defaults."""
    m = cfg.matching
    base = None
    s = dict(cfg.system)
    if "preset" in s:
        from .presets import get_preset
        p = get_preset(s.pop("preset").strip(), **{k: _float("system", k, v) for k, v in s.items()})
        base = p.design() if p.design else None
    if base is None and None in (m.mu_boundary, m.h, m.w):
        raise ConfigError("[matching] needs mu_boundary, h and w for this system")
    kw = {}
    if m.mu_boundary is not None:
        # a function of the coordinate along the reference line; any one variable name
        used = parse_expression(m.mu_boundary).variables()
        if len(used) > 1:
            raise ConfigError("[matching] mu_boundary must depend on one variable")
        kw["mu_boundary"] = _one_var(m.mu_boundary, used.pop() if used else "y")
    if m.h is not None:
        kw["h"] = _one_var(m.h, "y")
    if m.w is not None:
        kw["w"] = _one_var(m.w, "y")
    if m.sigma0 is not None:
        kw["sigma0"] = m.sigma0
    if m.damping is not None:
        kw["damping"] = m.damping
        kw["chat2"] = None
    if m.chat21 is not None:
        kw["chat2"] = (expression_field(m.chat21, sys.chart, "chat21"),
                       expression_field(m.chat22, sys.chart, "chat22"))
        kw["damping"] = 0.0
    kw.update(x1_ref=m.x1_ref, x2_ref=m.x2_ref, mu_axis=m.mu_axis)
    try:
        if base is None:
            return DesignData(**kw)
        from dataclasses import replace
        return replace(base, **kw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"[matching] {exc}") from None


def sim_settings(cfg):
    s = cfg.simulate
    return SimSettings(rtol=s.rtol, atol=s.atol, max_step=s.max_step, method=s.method)
