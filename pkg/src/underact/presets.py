"""Built-in systems and design presets."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import BadParameter
from .fields import AnalyticField, Chart, ConstantField
from .geometry import System2DOF
from .matching import DesignData, LambdaSolution, MatchedSystem, build_chat, constant
from .simulate import SimSettings

PENDULUM_CHART = Chart(-1.5, 1.5, -5.0, 5.0, 241, 241)


def _x1_field(f, df, chart, name):
    return AnalyticField(lambda a, b: f(a) + 0.0 * b, lambda a, b: df(a) + 0.0 * b,
                         lambda a, b: 0.0 * a + 0.0 * b, chart, name=name)


def pendulum_cart(b=0.5, chart=None):
    """Inverted pendulum on a cart: x1 = angle from upright (unactuated), x2 = cart position.

    g = dx1^2 + 2 b cos(x1) dx1 dx2 + dx2^2, V = cos(x1), no friction.
    """
    b = float(b)
    if not 0.0 < b < 1.0:
        raise BadParameter(f"pendulum cart needs 0 < b < 1, got {b}")
    chart = chart or PENDULUM_CHART
    g12 = _x1_field(lambda t: b * np.cos(t), lambda t: -b * np.sin(t), chart, "g12")
    V = _x1_field(np.cos, lambda t: -np.sin(t), chart, "V")
    return System2DOF(g12=g12, g22=ConstantField(1.0, name="g22"), V=V, chart=chart,
                      name=f"pendulum_cart(b={b:g})")


def pendulum_design(b=0.5, sigma0=0.25, h=1.0, k_w=0.3, damping=2.0, mu=1.0):
    """Stabilizing member of the matching family for the pendulum cart.

    With mu constant, sigma = b cos(x1) - 2b + sigma0.  sigma0 < b makes
    sigma(0) < 0, which puts a strict minimum of Vhat = k_w y^2 / 2 + int V'/sigma
    at the origin; h > 0 makes ghat positive definite on a band around x1 = 0.
    """
    if not sigma0 < b:
        raise BadParameter("sigma0 must be below b for a minimum of Vhat at the origin")
    return DesignData(mu_boundary=constant(mu), h=constant(h),
                      w=lambda y: 0.5 * k_w * np.asarray(y, dtype=float) ** 2,
                      sigma0=sigma0, damping=damping)


def flat_block(m, s, chart=None):
    """Free unit mass in the plane, with constant design data mu = m, sigma = s.

    h = 1 and w(y) = y^2 / 2; the matched system has a closed form,
    see ``flat_block_closed_form``.
    """
    m, s = float(m), float(s)
    if m == 0.0 or s == 0.0:
        raise BadParameter("flat_block needs m != 0 and s != 0")
    chart = chart or Chart(-2.0, 2.0, -2.0, 2.0, 241, 241)
    zero = ConstantField(0.0)
    sys = System2DOF(g12=ConstantField(0.0, name="g12"), g22=ConstantField(1.0, name="g22"),
                     V=zero, chart=chart, name=f"flat_block(m={m:g}, s={s:g})")
    d = DesignData(mu_boundary=constant(m), h=constant(1.0),
                   w=lambda y: 0.5 * np.asarray(y, dtype=float) ** 2, sigma0=s)
    return sys, d


def flat_block_closed_form(m, s, chart=None):
    """Exact matched system of ``flat_block``: y = x2 - (m/s) x1,
    ghat11 = m^2/s^2, ghat12 = (1 - m^2/s)/m, ghat22 = (s/m^2)(m^2/s - 1),
    Vhat = y^2 / 2."""
    sys, d = flat_block(m, s, chart)
    r = m / s
    g11 = r * r
    g12 = (1.0 - s * g11) / m
    g22 = -s * g12 / m
    y = AnalyticField(lambda a, b: b - r * a, lambda a, b: -r + 0 * a + 0 * b,
                      lambda a, b: 1.0 + 0 * a + 0 * b, sys.chart, name="y")
    Vhat = AnalyticField(lambda a, b: 0.5 * (b - r * a) ** 2, lambda a, b: -r * (b - r * a),
                         lambda a, b: b - r * a, sys.chart, name="Vhat")
    lam = LambdaSolution(mu=ConstantField(m), sigma=ConstantField(s), y=y)
    ghat = (ConstantField(g11), ConstantField(g12), ConstantField(g22))
    ms = MatchedSystem(ghat11=ghat[0], ghat12=ghat[1], ghat22=ghat[2], Vhat=Vhat,
                       chat=build_chat(sys, d, ghat), design=d, lam=lam, chart=sys.chart)
    return sys, d, ms


@dataclass(frozen=True)
class Preset:
    name: str
    params: dict
    system: Callable
    design: Callable | None = None
    settings: SimSettings = field(default_factory=SimSettings)
    initial_state: tuple = (0.2, 0.0, 0.1, -0.1)
    regions: dict = field(default_factory=dict)
    t_horizon: float = 25.0
    analysis_settings: SimSettings = field(
        default_factory=lambda: SimSettings(rtol=1e-7, atol=1e-9, max_step=float("inf")))


def _pendulum_regions():
    from .analysis import Region
    # N samples: corners (and interior points) of the box "N0"
    return {"O": Region.box((0, 0, 0, 0), (0.6, 3.0, 1.5, 3.0)),
            "D": Region.box((0, 0, 0, 0), (0.05, 0.3, 0.1, 0.3)),
            "N0": Region.box((0, 0, 0, 0), (0.1, 0.4, 0.1, 0.4))}


def get_preset(name, **params):
    """Look up a preset by name; ``params`` override its defaults."""
    if name == "pendulum_cart":
        b = float(params.pop("b", 0.5))
        design_keys = {"sigma0", "h", "k_w", "damping", "mu"}
        dp = {k: float(params.pop(k)) for k in list(params) if k in design_keys}
        if params:
            raise BadParameter(f"unknown pendulum_cart parameters: {sorted(params)}")
        return Preset(name, {"b": b, **dp}, system=lambda chart=None: pendulum_cart(b, chart),
                      design=lambda: pendulum_design(b, **dp), regions=_pendulum_regions())
    if name == "flat_block":
        m, s = float(params.pop("m", 2.0)), float(params.pop("s", 1.0))
        if params:
            raise BadParameter(f"unknown flat_block parameters: {sorted(params)}")
        flat_block(m, s)
        return Preset(name, {"m": m, "s": s},
                      system=lambda chart=None: flat_block(m, s, chart)[0],
                      design=lambda: flat_block(m, s)[1], initial_state=(0.2, 0.1, 0.0, 0.0))
    raise BadParameter(f"unknown preset {name!r}; known: {sorted(PRESETS)}")


PRESETS = ("flat_block", "pendulum_cart")
