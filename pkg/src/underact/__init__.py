"""Matching-based stabilization of two-degree-of-freedom underactuated mechanical systems."""
from .errors import *  # noqa: F401,F403
from .fields import AnalyticField, Chart, ConstantField, GridField
from .geometry import System2DOF, TangentState
from .matching import DesignData, MatchedSystem, synthesize, synthesize_analytic
from .control import ControlLaw
from .simulate import SimSettings, integrate
from .presets import flat_block, flat_block_closed_form, get_preset, pendulum_cart, pendulum_design
from .expr import parse_expression

__version__ = "0.1.0"

__all__ = ["AnalyticField", "Chart", "ConstantField", "GridField", "System2DOF", "TangentState",
           "DesignData", "MatchedSystem", "synthesize", "synthesize_analytic", "ControlLaw",
           "SimSettings", "integrate", "flat_block", "flat_block_closed_form", "get_preset",
           "pendulum_cart", "pendulum_design", "parse_expression"]
