"""Synthesis of the matched system (ghat, Vhat, chat) for 2-DOF systems.

Pipeline, in order:

1. ``solve_mu``: mu from the compatibility condition
   d/dx2([11,2] mu) = d/dx1([12,2] mu), by characteristics from a
   reference line on which mu is prescribed.
2. ``compute_sigma``: sigma = -g12 mu + 2 * int([11,2] mu dx1 + [12,2] mu dx2) + sigma0.
3. ``characteristic_coordinate``: y constant along (sigma, mu), normalised
   to the x2-ordinate where the curve meets the line x1 = x1_ref.
4. ``solve_ghat11``: transport of ghat11 along the same curves, with the
   free function h(y) as data on the reference line.
5. ``complete_ghat``: ghat12, ghat22 from ghat(lambda d/dx1, .) = g(d/dx1, .).
6. ``solve_Vhat``: sigma dVhat/dx1 + mu dVhat/dx2 = dV/dx1 with data w(y).
7. ``build_chat``: dissipation with g(c - chat, d/dx1) = 0.

``synthesize`` runs the gridded pipeline; ``synthesize_analytic`` is a
semi-analytic route for systems whose data depend on x1 only (the pendulum
cart class) and produces fields accurate to round-off.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np
from numpy.polynomial import Chebyshev
from scipy.integrate import DOP853

from .errors import (CharacteristicExit, MuVanishes, PathDependence,
                     SigmaVanishes, UnderactError)
from .fields import (CachedField, Chart, ConstantField, GridField,
                     ScalarField, as_field, cumulative_integral, line_integral)
from .geometry import System2DOF, christoffel_first_kind

TRACE_TOL = 1e-10


def constant(value):
    """A free function of one variable that is identically ``value``."""
    return lambda y: np.zeros_like(np.asarray(y, dtype=float)) + value


@dataclass(frozen=True)
class DesignData:
    """Free data selecting one member of the matching family.

    ``mu_axis`` names the reference line for mu: ``"x2"`` prescribes
    mu(x1) on the line x2 = x2_ref, ``"x1"`` prescribes mu(x2) on the
    line x1 = x1_ref.  The line must be transverse to the characteristics
    of the compatibility condition (horizontal for the pendulum cart).

    Dissipation of the matched system is either given directly through
    ``chat2`` = (chat_21, chat_22) or generated by ``damping`` k >= 0 as
    chat^2 - c^2 = k * ghat(X, (-g12, 1)), which makes the energy decay
    rate -k * ghat(X, (-g12, 1))**2 nonpositive.
    """

    mu_boundary: Callable
    h: Callable
    w: Callable
    sigma0: float = 0.0
    x1_ref: float = 0.0
    x2_ref: float = 0.0
    mu_axis: str = "x2"
    chat2: tuple | None = None
    damping: float = 0.0
    mu_min: float = 1e-6
    sigma_min: float = 1e-6

    def __post_init__(self):
        if self.mu_axis not in ("x1", "x2"):
            raise ValueError("mu_axis must be 'x1' or 'x2'")
        if self.chat2 is not None and self.damping:
            raise ValueError("give either chat2 or damping, not both")


@dataclass
class LambdaSolution:
    """lambda(d/dx1) = sigma d/dx1 + mu d/dx2 and the coordinate y."""

    mu: ScalarField
    sigma: ScalarField
    y: ScalarField | None = None


@dataclass
class MatchedSystem:
    ghat11: ScalarField
    ghat12: ScalarField
    ghat22: ScalarField
    Vhat: ScalarField
    chat: tuple
    design: DesignData | None = None
    lam: LambdaSolution | None = None
    grids: dict = field(default_factory=dict)
    diagnostics: dict = field(default_factory=dict)
    chart: Chart | None = None

    def metric_data(self, x1, x2):
        f11, a11, b11 = self.ghat11._vp(x1, x2)
        f12, a12, b12 = self.ghat12._vp(x1, x2)
        f22, a22, b22 = self.ghat22._vp(x1, x2)
        return (f11, f12, f22), (a11, a12, a22), (b11, b12, b22)

    def in_region(self, x1, x2):
        """Valid region: inside the chart and on finite interpolation cells."""
        x1 = np.asarray(x1, dtype=float)
        x2 = np.asarray(x2, dtype=float)
        ok = np.ones(np.broadcast(x1, x2).shape, dtype=bool)
        if self.chart is not None:
            ok &= self.chart.contains(x1, x2)
        if not np.any(ok):
            return ok
        for g in self.grids.values():
            inside = ok.copy()
            ok &= np.where(inside, g.cell_finite(np.where(inside, x1, g.chart.x1_min),
                                                 np.where(inside, x2, g.chart.x2_min)), False)
        return ok

    @classmethod
    def identity(cls, sys):
        """ghat = g, Vhat = V, chat = c: the trivial member of the family."""
        return cls(ghat11=ConstantField(1.0), ghat12=sys.g12, ghat22=sys.g22,
                   Vhat=sys.V, chat=sys.c, chart=sys.chart)


# --- brackets as fields ------------------------------------------------------

class _BracketField(ScalarField):
    """Value-only view of [ij, k]; partials are unavailable (NaN)."""

    def __init__(self, sys, i, j, k):
        self.sys, self.idx = sys, (i - 1, j - 1, k - 1)
        self.chart = sys.chart
        self.name = f"[{i}{j},{k}]"

    def _vp(self, x1, x2):
        br = christoffel_first_kind(*self.sys.metric_data(x1, x2))
        i, j, k = self.idx
        v = np.asarray(br[i][j][k], dtype=float) + np.zeros(np.broadcast(x1, x2).shape)
        nan = np.full_like(v, np.nan)
        return v, nan, nan


def bracket_grids(sys, chart=None):
    """[11,2] and [12,2] sampled at the grid nodes, as gridded fields."""
    chart = chart or sys.chart
    A = _BracketField(sys, 1, 1, 2).sample(chart)
    B = _BracketField(sys, 1, 2, 2).sample(chart)
    return GridField(chart, A, name="[11,2]"), GridField(chart, B, name="[12,2]")


# --- characteristic tracing ---------------------------------------------------

def _soft_clip(q, lo, hi, margin):
    """Identity inside [lo, hi], C2 saturation to within ``margin`` outside."""
    above = hi + margin * np.tanh((q - hi) / margin)
    below = lo + margin * np.tanh((q - lo) / margin)
    return np.where(q > hi, above, np.where(q < lo, below, q))


def trace_to_line(chart, axis, ref, start1, start2, rates, n_extra=0,
                  tol=TRACE_TOL, checks_per_step=3, max_steps=300):
    """Follow characteristics from many start points to a coordinate line.

    ``axis`` = 0 parameterises each curve by x1 and stops on x1 = ref;
    ``axis`` = 1 uses x2 and stops on x2 = ref.  ``rates(x1, x2, E)``
    returns ``(slope, extra, bad)``: d(other coordinate)/d(parameter), the
    parameter-rates of the ``n_extra`` accumulated integrals E, and a mask
    of points where the rates are ill-defined.  All curves share one
    adaptive DOP853 solve in a normalised parameter tau in [0, 1].

    Returns (other coordinate on the line, E on the line, ok mask); ``ok``
    is False where the curve left the chart or hit a bad point.
    """
    start1 = np.asarray(start1, dtype=float).ravel()
    start2 = np.asarray(start2, dtype=float).ravel()
    N = start1.size
    p0, q0 = (start1, start2) if axis == 0 else (start2, start1)
    delta = ref - p0
    if axis == 0:
        qlo, qhi, hq = chart.x2_min, chart.x2_max, chart.h2
    else:
        qlo, qhi, hq = chart.x1_min, chart.x1_max, chart.h1
    margin = 2.0 * hq
    slack = 1e-9 * (qhi - qlo)

    def evaluate(tau, Y):
        q = Y[:N]
        E = Y[N:].reshape(n_extra, N)
        p = p0 + tau * delta
        qe = _soft_clip(q, qlo, qhi, margin)
        x1, x2 = (p, qe) if axis == 0 else (qe, p)
        slope, extra, bad = rates(x1, x2, E)
        return q, slope, np.asarray(extra).reshape(n_extra, N), bad

    ok = np.ones(N, dtype=bool)

    def rhs(tau, Y):
        _, slope, extra, _ = evaluate(tau, Y)
        out = np.empty_like(Y)
        out[:N] = delta * slope
        out[N:] = (delta * extra).ravel()
        return out

    def check(tau, Y):
        q, slope, extra, bad = evaluate(tau, Y)
        ok[:] &= (q >= qlo - slack) & (q <= qhi + slack) & ~bad
        ok[:] &= np.isfinite(slope) & np.all(np.isfinite(extra), axis=0)

    Y0 = np.concatenate([q0, np.zeros(n_extra * N)])
    check(0.0, Y0)
    solver = DOP853(rhs, 0.0, Y0, 1.0, rtol=tol, atol=tol)
    # stiff or singular curves (sigma crossing zero) would otherwise stall every curve
    steps = 0
    while solver.status == "running":
        msg = solver.step()
        steps += 1
        if steps > max_steps:
            raise CharacteristicExit(f"characteristic integration exceeded {max_steps} steps")
        if solver.status == "failed":
            raise CharacteristicExit(f"characteristic integration failed: {msg}")
        if checks_per_step:
            dense = solver.dense_output()
            for s in np.linspace(solver.t_old, solver.t, checks_per_step + 2)[1:-1]:
                check(s, dense(s))
        check(solver.t, solver.y)
    Y = solver.y
    return Y[:N], Y[N:].reshape(n_extra, N), ok


def _safe_div(num, den, floor):
    sgn = np.where(den >= 0, 1.0, -1.0)
    return num / (sgn * np.maximum(np.abs(den), floor))


# --- stage 1: mu ----------------------------------------------------------------

def solve_mu(sys, d, chart=None, tol=TRACE_TOL):
    """mu on the chart grid from the compatibility condition.

    Along the characteristic field (-[12,2], [11,2]) mu obeys
    d(ln mu) = ([12,2]_x1 - [11,2]_x2) ds.  Nodes where both brackets and
    the source vanish (e.g. the whole chart for a flat metric, or the line
    x1 = 0 for the pendulum cart) are stationary: mu takes the boundary value
    at the node's own label.  Invalid nodes are NaN.
    """
    chart = chart or sys.chart
    A, B = bracket_grids(sys, chart)
    X1, X2 = chart.mesh()
    scale = max(np.nanmax(np.abs(A.values)), np.nanmax(np.abs(B.values)), 1.0)
    stag_tol = 1e-12 * scale

    if d.mu_axis == "x2":
        axis, ref, lead, lead_name = 1, d.x2_ref, A, "[11,2]"
    else:
        axis, ref, lead, lead_name = 0, d.x1_ref, B, "[12,2]"

    def rates(x1, x2, E):
        a, a1, a2 = A._vp(x1, x2)
        b, b1, b2 = B._vp(x1, x2)
        src = b1 - a2
        den = a if axis == 1 else -b
        # direction (-b, a); parameter is x2 (axis 1) or x1 (axis 0)
        other = -b if axis == 1 else a
        stagnant = (np.abs(a) <= stag_tol) & (np.abs(b) <= stag_tol)
        quiet = stagnant & (np.abs(src) <= 1e-9 * scale)
        slope = np.where(quiet, 0.0, _safe_div(other, den, stag_tol))
        rate = np.where(quiet, 0.0, _safe_div(src, den, stag_tol))
        bad = (np.abs(den) <= stag_tol) & ~quiet
        return slope, rate[None, :], bad

    q_end, E, ok = trace_to_line(chart, axis, ref, X1, X2, rates, n_extra=1, tol=tol)
    label = q_end
    with np.errstate(over="ignore", invalid="ignore"):
        mu = np.asarray(d.mu_boundary(label), dtype=float) * np.exp(-E[0])
    mu = mu.reshape(X1.shape)
    ok = ok.reshape(X1.shape) & np.isfinite(mu)
    small = np.abs(mu) < d.mu_min
    if np.all(small | ~ok):
        raise MuVanishes(f"|mu| < mu_min={d.mu_min:g} at every node", stage="solve_mu")
    ok &= ~small
    if not np.any(ok):
        raise CharacteristicExit("no node's characteristic reaches the mu reference line "
                                 f"(direction of {lead_name} vanishes)", stage="solve_mu")
    mu[~ok] = np.nan
    return GridField(chart, mu, name="mu")


# --- stage 2: sigma --------------------------------------------------------------

def _sigma_form(sys, mu):
    """The closed 1-form 2 mu ([11,2] dx1 + [12,2] dx2) as (p, q) fields."""
    return (2.0 * _BracketField(sys, 1, 1, 2) * mu,
            2.0 * _BracketField(sys, 1, 2, 2) * mu)


def loop_integral(sys, mu, rect, tol=1e-12):
    """Integral of the sigma-defining form around an axis-aligned rectangle."""
    a1, a2, b1, b2 = rect
    p, q = _sigma_form(sys, mu)
    path = [(a1, a2), (b1, a2), (b1, b2), (a1, b2), (a1, a2)]
    return line_integral(p, q, path, tol=tol)


def _probe_rectangles(chart, mu, n, seed):
    rng = np.random.default_rng(seed)
    rects = []
    for _ in range(20 * n):
        if len(rects) == n:
            break
        u = np.sort(rng.uniform(0.1, 0.9, size=2))
        v = np.sort(rng.uniform(0.1, 0.9, size=2))
        if u[1] - u[0] < 0.05 or v[1] - v[0] < 0.05:
            continue
        r = (chart.x1_min + u[0] * (chart.x1_max - chart.x1_min),
             chart.x2_min + v[0] * (chart.x2_max - chart.x2_min),
             chart.x1_min + u[1] * (chart.x1_max - chart.x1_min),
             chart.x2_min + v[1] * (chart.x2_max - chart.x2_min))
        # one probe per grid cell along each edge, so no invalid cell is skipped
        m1 = max(9, int(np.ceil((r[2] - r[0]) / chart.h1)) + 2)
        m2 = max(9, int(np.ceil((r[3] - r[1]) / chart.h2)) + 2)
        edge1, edge2 = np.linspace(r[0], r[2], m1), np.linspace(r[1], r[3], m2)
        pts1 = np.concatenate([edge1, edge1, np.full(m2, r[0]), np.full(m2, r[2])])
        pts2 = np.concatenate([np.full(m1, r[1]), np.full(m1, r[3]), edge2, edge2])
        if isinstance(mu, GridField) and not np.all(mu.cell_finite(pts1, pts2)):
            continue
        with np.errstate(invalid="ignore"):
            if not np.all(np.isfinite(mu._vp(pts1, pts2)[0])):
                continue
        rects.append(r)
    return rects


def compute_sigma(sys, mu, d, loop_tol=1e-6, n_loops=6, seed=0):
    """sigma on the grid by integrating the closed form from the anchor.

    The anchor is (x1_ref, x2_ref); the path runs along x2 = x2_ref to the
    node's x1 and then along x1 = const.  Path independence is checked on
    ``n_loops`` rectangles first.
    """
    chart = mu.chart if mu.chart is not None else sys.chart
    for rect in _probe_rectangles(chart, mu, n_loops, seed):
        loop = loop_integral(sys, mu, rect)
        if not abs(loop) <= loop_tol:
            raise PathDependence(f"loop integral {loop:.3e} around {rect} exceeds {loop_tol:g}",
                                 stage="compute_sigma")
    p, q = _sigma_form(sys, mu)
    n1, n2 = chart.nodes1, chart.nodes2
    row = cumulative_integral(lambda t: p._vp(t, np.full_like(t, d.x2_ref))[0], n1, d.x1_ref)
    cols = cumulative_integral(
        lambda s: q._vp(n1[:, None], s[None, :])[0], n2, d.x2_ref)
    X1, X2 = chart.mesh()
    g12 = sys.g12._vp(X1, X2)[0]
    mu_n = mu._vp(X1, X2)[0] if not isinstance(mu, GridField) else mu.values
    sigma = -g12 * mu_n + row[:, None] + cols + d.sigma0
    small = np.abs(sigma) < d.sigma_min
    if np.all(small | ~np.isfinite(sigma)):
        raise SigmaVanishes(f"|sigma| < sigma_min={d.sigma_min:g} at every node",
                            stage="compute_sigma")
    sigma = np.where(small, np.nan, sigma)
    return GridField(chart, sigma, name="sigma")


# --- stages 3, 4, 6: transport along (sigma, mu) --------------------------------

def _transport(sys, mu, sigma, d, chart, want, tol=TRACE_TOL):
    """Trace every node along (sigma, mu) to x1 = x1_ref.

    ``want`` is a subset of {"ghat11", "Vhat"}.  Accumulated integrals
    (per unit x1, from the node toward the reference line):
      rho = int R,  K = int Q exp(rho)   with Q = 2 sigma mu_x1 / mu^3,
                                          R = (2/sigma)(mu_x2 - mu sigma_x2 / sigma)
      P   = int V_x1 / sigma
    so that ghat11 = (mu/sigma)^2 (exp(rho) h(y) + K) and Vhat = w(y) - P.
    R vanishes when sigma and mu do not depend on x2, and the ghat11 formula
    then reduces to the closed quadrature along the characteristic.
    """
    X1, X2 = chart.mesh()
    smin = d.sigma_min
    on_ref = sigma._vp(np.full(chart.n2, d.x1_ref), chart.nodes2)[0]
    if not np.any(np.abs(on_ref) >= smin):
        raise SigmaVanishes(f"sigma vanishes on the reference line x1 = {d.x1_ref:g}; "
                            "no characteristic can reach it", stage="transport")
    extras = []
    if "ghat11" in want:
        extras += ["rho", "K"]
    if "Vhat" in want:
        extras += ["P"]
    idx = {name: k for k, name in enumerate(extras)}

    def rates(x1, x2, E):
        s, s1, s2 = sigma._vp(x1, x2)
        m, m1, m2 = mu._vp(x1, x2)
        slope = _safe_div(m, s, smin)
        out = []
        if "ghat11" in want:
            R = _safe_div(2.0 * (m2 - _safe_div(m * s2, s, smin)), s, smin)
            Q = 2.0 * s * m1 / m ** 3
            out += [R, Q * np.exp(E[idx["rho"]])]
        if "Vhat" in want:
            _, V1, _ = sys.V._vp(x1, x2)
            out += [_safe_div(V1, s, smin)]
        bad = (np.abs(s) < smin) | (np.abs(m) < d.mu_min) | ~np.isfinite(s) | ~np.isfinite(m)
        return slope, np.array(out).reshape(len(extras), -1), bad

    base_ok = np.isfinite(sigma.values) & np.isfinite(mu.values) if isinstance(sigma, GridField) \
        else np.ones(X1.shape, dtype=bool)
    y, E, ok = trace_to_line(chart, 0, d.x1_ref, X1, X2, rates, n_extra=len(extras), tol=tol)
    ok = ok.reshape(X1.shape) & base_ok
    y = y.reshape(X1.shape)
    out = {"y": np.where(ok, y, np.nan), "ok": ok}
    s_n, m_n = sigma._vp(X1, X2)[0], mu._vp(X1, X2)[0]
    if "ghat11" in want:
        rho = E[idx["rho"]].reshape(X1.shape)
        K = E[idx["K"]].reshape(X1.shape)
        with np.errstate(invalid="ignore", over="ignore"):
            g11 = (m_n / s_n) ** 2 * (np.exp(rho) * d.h(y) + K)
        out["ghat11"] = np.where(ok, g11, np.nan)
    if "Vhat" in want:
        P = E[idx["P"]].reshape(X1.shape)
        out["Vhat"] = np.where(ok, d.w(y) - P, np.nan)
    return out


def characteristic_coordinate(lam, chart, x1_ref=0.0, sigma_min=1e-6, tol=TRACE_TOL):
    """y with sigma y_x1 + mu y_x2 = 0, equal to x2 on the line x1 = x1_ref."""
    mu, sigma = lam.mu, lam.sigma
    X1, X2 = chart.mesh()
    s_n = sigma._vp(X1, X2)[0]
    if np.all(~(np.abs(s_n) >= sigma_min)):
        raise SigmaVanishes("sigma vanishes on the whole chart", stage="characteristic_coordinate")
    d = DesignData(mu_boundary=constant(1.0), h=constant(0.0), w=constant(0.0),
                   x1_ref=x1_ref, sigma_min=sigma_min, mu_min=0.0)
    out = _transport(None, mu, sigma, d, chart, want=(), tol=tol)
    if not np.any(out["ok"]):
        raise CharacteristicExit("every characteristic leaves the chart",
                                 stage="characteristic_coordinate")
    return GridField(chart, out["y"], name="y")


def solve_ghat11(sys, lam, d, chart=None, tol=TRACE_TOL):
    """ghat11 by transport along the characteristics of (sigma, mu)."""
    chart = chart or sys.chart
    out = _transport(sys, lam.mu, lam.sigma, d, chart, want=("ghat11",), tol=tol)
    if not np.any(out["ok"]):
        raise CharacteristicExit("every characteristic leaves the chart", stage="solve_ghat11")
    g = GridField(chart, out["ghat11"], name="ghat11")
    g.nonpositive = np.isfinite(out["ghat11"]) & (out["ghat11"] <= 0)
    return g


def solve_Vhat(sys, lam, d, chart=None, tol=TRACE_TOL):
    """Vhat = w(y) + integral of V_x1 / sigma along the characteristic."""
    chart = chart or sys.chart
    out = _transport(sys, lam.mu, lam.sigma, d, chart, want=("Vhat",), tol=tol)
    if not np.any(out["ok"]):
        raise CharacteristicExit("every characteristic leaves the chart", stage="solve_Vhat")
    return GridField(chart, out["Vhat"], name="Vhat")


# --- stages 5, 7 ----------------------------------------------------------------

def complete_ghat(sys, lam, ghat11):
    """ghat12 = (1 - sigma ghat11)/mu, ghat22 = (g12 - sigma ghat12)/mu."""
    mu, sigma = lam.mu, lam.sigma
    if isinstance(mu, ConstantField) and abs(mu.value) < 1e-300:
        raise MuVanishes("mu is identically zero", stage="complete_ghat")
    ghat12 = (1.0 - sigma * ghat11) / mu
    ghat22 = (sys.g12 - sigma * ghat12) / mu
    ghat12.name, ghat22.name = "ghat12", "ghat22"
    return ghat12, ghat22


def build_chat(sys, d, ghat=None):
    """Matched dissipation components chat_ij (contravariant, velocity-linear).

    chat^2 is the design choice; chat^1 = c^1 - g12 (chat^2 - c^2) makes
    g(c(X) - chat(X), d/dx1) vanish.
    """
    (c11, c12), (c21, c22) = sys.c
    if d.chat2 is not None:
        h21, h22 = (as_field(f) for f in d.chat2)
    elif d.damping:
        if ghat is None:
            raise ValueError("damping injection needs ghat")
        g11h, g12h, g22h = ghat
        k = float(d.damping)
        h21 = c21 + k * (g12h - sys.g12 * g11h)
        h22 = c22 + k * (g22h - sys.g12 * g12h)
    else:
        h21, h22 = c21, c22
    h11 = c11 - sys.g12 * (h21 - c21)
    h12 = c12 - sys.g12 * (h22 - c22)
    return ((h11, h12), (h21, h22))


# --- pipeline --------------------------------------------------------------------

def _assemble(sys, d, chart, mu, sigma, y, ghat11, Vhat):
    grids = {k: v for k, v in (("mu", mu), ("sigma", sigma), ("y", y),
                               ("ghat11", ghat11), ("Vhat", Vhat))
             if isinstance(v, GridField)}
    mu, sigma, ghat11 = CachedField(mu), CachedField(sigma), CachedField(ghat11)
    lam = LambdaSolution(mu=mu, sigma=sigma, y=y)
    ghat12, ghat22 = complete_ghat(sys, lam, ghat11)
    ghat12, ghat22 = CachedField(ghat12), CachedField(ghat22)
    chat = build_chat(sys, d, (ghat11, ghat12, ghat22))
    return MatchedSystem(ghat11=ghat11, ghat12=ghat12, ghat22=ghat22, Vhat=Vhat,
                         chat=chat, design=d, lam=lam, grids=grids, chart=chart)


def matched_from_grids(sys, d, chart, arrays):
    """Rebuild a gridded MatchedSystem from node arrays (used for snapshots)."""
    g = {k: GridField(chart, arrays[k], name=k) for k in ("mu", "sigma", "y", "ghat11", "Vhat")}
    return _assemble(sys, d, chart, g["mu"], g["sigma"], g["y"], g["ghat11"], g["Vhat"])


def synthesize(sys, d, chart=None, tol=TRACE_TOL, diagnostics=True):
    """Run the gridded pipeline and return a MatchedSystem with diagnostics."""
    chart = chart or sys.chart
    stage = "solve_mu"
    try:
        mu = solve_mu(sys, d, chart, tol=tol)
        stage = "compute_sigma"
        sigma = compute_sigma(sys, mu, d)
        stage = "transport"
        out = _transport(sys, mu, sigma, d, chart, want=("ghat11", "Vhat"), tol=tol)
        if not np.any(out["ok"]):
            raise CharacteristicExit("every characteristic leaves the chart")
    except UnderactError as exc:
        if exc.stage is None:
            exc.stage = stage
        raise
    arrays = {"mu": np.where(out["ok"], mu.values, np.nan),
              "sigma": np.where(out["ok"], sigma.values, np.nan),
              "y": out["y"], "ghat11": out["ghat11"], "Vhat": out["Vhat"]}
    ms = matched_from_grids(sys, d, chart, arrays)
    if diagnostics:
        from .diagnostics import synthesis_report
        ms.diagnostics = synthesis_report(sys, ms)
    return ms


# --- semi-analytic route ------------------------------------------------------------

class _Cheb:
    """Chebyshev series on [lo, hi], evaluated as sum c_k cos(k arccos t).

    One vectorised cosine evaluation replaces the Clenshaw loop, which is
    the bottleneck for the scalar calls made during simulation.  Trailing
    coefficients below round-off are dropped.
    """

    def __init__(self, series):
        c = np.asarray(series.coef, dtype=float)
        keep = np.nonzero(np.abs(c) > 1e-17 * max(np.abs(c).max(), 1e-300))[0]
        self.series = series
        self.coef = c[: keep[-1] + 1] if keep.size else c[:1]
        self.lo, self.hi = series.domain
        self.k = np.arange(len(self.coef))

    @classmethod
    def fit(cls, fun, lo, hi, deg):
        return cls(Chebyshev.interpolate(fun, deg, domain=[lo, hi]))

    def __call__(self, x):
        t = (2.0 * np.asarray(x, dtype=float) - (self.lo + self.hi)) / (self.hi - self.lo)
        theta = np.arccos(np.clip(t, -1.0, 1.0))
        out = np.cos(np.multiply.outer(theta, self.k)) @ self.coef
        outside = np.abs(t) > 1.0
        if np.any(outside):
            out = np.where(outside, self.series(x), out)
        return out

    def deriv(self):
        return _Cheb(self.series.deriv())

    def integ(self, lbnd):
        return _Cheb(self.series.integ(lbnd=lbnd))

    def tail(self):
        return float(np.abs(self.series.coef[-3:]).max())


class _X1Field(ScalarField):
    def __init__(self, f, chart, name):
        self.f, self.df = f, f.deriv()
        self.chart, self.name = chart, name

    def _vp(self, x1, x2):
        z = np.zeros(np.broadcast(x1, x2).shape)
        return self.f(x1) + z, self.df(x1) + z, z


class _ShiftField(ScalarField):
    """F(x2 - Y(x1)) + G(x1) with exact partials."""

    def __init__(self, F, Y, G, chart, name):
        self.F, self.dF, self.Y, self.dY = F, F.deriv(), Y, Y.deriv()
        self.G = G
        self.dG = G.deriv() if G is not None else None
        self.chart, self.name = chart, name

    def _vp(self, x1, x2):
        x1, x2 = np.broadcast_arrays(np.asarray(x1, float), np.asarray(x2, float))
        y = x2 - self.Y(x1)
        Fp = self.dF(y)
        f = self.F(y)
        f1 = -Fp * self.dY(x1)
        if self.G is not None:
            f = f + self.G(x1)
            f1 = f1 + self.dG(x1)
        return f, f1, Fp


class _Ghat11Field(ScalarField):
    """(mu/sigma)^2 (h(y) - I(x1)) with y = x2 - Y(x1)."""

    def __init__(self, mu, sig, Y, I, h, chart):
        self.mu, self.dmu, self.sig, self.dsig = mu, mu.deriv(), sig, sig.deriv()
        self.Y, self.dY, self.I, self.dI = Y, Y.deriv(), I, I.deriv()
        self.h, self.dh = h, h.deriv()
        self.chart, self.name = chart, "ghat11"

    def _vp(self, x1, x2):
        x1, x2 = np.broadcast_arrays(np.asarray(x1, float), np.asarray(x2, float))
        y = x2 - self.Y(x1)
        m, dm, s, ds = self.mu(x1), self.dmu(x1), self.sig(x1), self.dsig(x1)
        q = (m / s) ** 2
        dq = 2.0 * m * dm / s ** 2 - 2.0 * m * m * ds / s ** 3
        hp = self.dh(y)
        F = self.h(y) - self.I(x1)
        F1 = -hp * self.dY(x1) - self.dI(x1)
        return q * F, dq * F + q * F1, q * hp


def _depends_on_x2(f, chart, n=25):
    X1, X2 = np.meshgrid(np.linspace(chart.x1_min, chart.x1_max, n),
                         np.linspace(chart.x2_min, chart.x2_max, n), indexing="ij")
    return np.max(np.abs(f._vp(X1, X2)[2])) > 1e-12


def synthesize_analytic(sys, d, deg=120, diagnostics=True):
    """Closed-form synthesis when g12, V depend on x1 only and g22 is constant.

    mu is prescribed as a function of x1 (``mu_axis="x2"``), so every
    characteristic integral becomes a one-dimensional quadrature in x1;
    those are represented by Chebyshev interpolants accurate to round-off,
    and the resulting fields carry exact partial derivatives.
    """
    chart = sys.chart
    if d.mu_axis != "x2":
        raise ValueError("analytic route needs mu prescribed along x1 (mu_axis='x2')")
    for f in (sys.g12, sys.g22, sys.V):
        if _depends_on_x2(f, chart):
            raise ValueError(f"analytic route needs {f.name or 'field'} independent of x2")
    X1s = np.linspace(chart.x1_min, chart.x1_max, 101)
    if np.max(np.abs(sys.g22._vp(X1s, 0.0 * X1s)[1])) > 1e-12:
        raise ValueError("analytic route needs constant g22")
    lo, hi = chart.x1_min, chart.x1_max
    x2r = d.x2_ref
    fine = np.linspace(lo, hi, 2001)

    def along(field, k):
        return lambda t: field._vp(t, np.full_like(t, x2r))[k]

    mu = _Cheb.fit(lambda t: np.asarray(d.mu_boundary(t), float) + 0 * t, lo, hi, deg)
    if np.min(np.abs(mu(fine))) < d.mu_min:
        raise MuVanishes("mu vanishes on the chart", stage="solve_mu")
    dmu = mu.deriv()
    g12, g12_1, V1 = along(sys.g12, 0), along(sys.g12, 1), along(sys.V, 1)
    int_Amu = _Cheb.fit(lambda t: g12_1(t) * mu(t), lo, hi, deg).integ(d.x1_ref)
    sig = _Cheb.fit(lambda t: -g12(t) * mu(t) + 2.0 * int_Amu(t) + d.sigma0, lo, hi, deg)
    if np.min(np.abs(sig(fine))) < d.sigma_min:
        raise SigmaVanishes("sigma vanishes on the chart", stage="compute_sigma")
    Y = _Cheb.fit(lambda t: mu(t) / sig(t), lo, hi, deg).integ(d.x1_ref)
    I = _Cheb.fit(lambda t: 2.0 * sig(t) * dmu(t) / mu(t) ** 3, lo, hi, deg).integ(d.x1_ref)
    P = _Cheb.fit(lambda t: V1(t) / sig(t), lo, hi, deg).integ(d.x1_ref)
    Yv = Y(fine)
    ylo, yhi = chart.x2_min - Yv.max(), chart.x2_max - Yv.min()
    pad = 0.05 * (yhi - ylo)
    h = _Cheb.fit(lambda t: np.asarray(d.h(t), float) + 0 * t, ylo - pad, yhi + pad, deg)
    w = _Cheb.fit(lambda t: np.asarray(d.w(t), float) + 0 * t, ylo - pad, yhi + pad, deg)

    ident = _Cheb(Chebyshev.interpolate(lambda t: t, 1, domain=[ylo - pad, yhi + pad]))
    ms = _assemble(sys, d, chart,
                   _X1Field(mu, chart, "mu"), _X1Field(sig, chart, "sigma"),
                   _ShiftField(ident, Y, None, chart, "y"),
                   _Ghat11Field(mu, sig, Y, I, h, chart),
                   _ShiftField(w, Y, P, chart, "Vhat"))
    ms.diagnostics = {"route": "analytic", "chebyshev_degree": deg,
                      "chebyshev_tail": max(c.tail() for c in (sig, Y, I, P))}
    if diagnostics:
        from .diagnostics import synthesis_report
        ms.diagnostics.update(synthesis_report(sys, ms))
    return ms


def with_design(ms, **changes):
    return replace(ms, design=replace(ms.design, **changes))
