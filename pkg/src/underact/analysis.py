"""Sampled estimators of the normal operating range, the settling time into
a target range, and the largest inscribed ball of a region of states.

All estimators work with a ``Flow``: anything with ``dim``,
``trajectory(x0, t_final)`` returning a ``FlowPath`` and, optionally,
``lyapunov(X)`` for the convergence certificate.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp
from scipy.interpolate import CubicHermiteSpline
from scipy.spatial import cKDTree
from scipy.stats import qmc

from .errors import CenterOutside, NotSettled, UnderactError


@dataclass(frozen=True)
class Region:
    kind: str
    center: tuple
    extents: tuple
    weights: tuple | None = None

    def __post_init__(self):
        if self.kind not in ("box", "ellipsoid"):
            raise ValueError("kind must be 'box' or 'ellipsoid'")
        c = tuple(float(v) for v in np.ravel(self.center))
        e = tuple(float(v) for v in np.ravel(self.extents))
        if len(c) != len(e):
            raise ValueError("center and extents differ in length")
        if min(e) <= 0:
            raise ValueError("extents must be positive")
        object.__setattr__(self, "center", c)
        object.__setattr__(self, "extents", e)
        if self.weights is not None:
            object.__setattr__(self, "weights", tuple(float(v) for v in np.ravel(self.weights)))

    @classmethod
    def box(cls, center, half_widths, weights=None):
        return cls("box", center, half_widths, weights)

    @classmethod
    def ellipsoid(cls, center, semi_axes, weights=None):
        return cls("ellipsoid", center, semi_axes, weights)

    @property
    def dim(self):
        return len(self.center)

    def _scaled(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        return (X - np.array(self.center)) / np.array(self.extents)

    def contains(self, X):
        Z = self._scaled(X)
        if self.kind == "box":
            return np.all(np.abs(Z) <= 1.0 + 1e-12, axis=-1)
        return np.sum(Z * Z, axis=-1) <= 1.0 + 1e-12

    def boundary_samples(self, n=256, seed=0):
        """Deterministic boundary points: face centres, corners and Sobol points."""
        U = _unit_surface(self.dim, n, seed, self.kind)
        return np.array(self.center) + U * np.array(self.extents)

    def grid(self, counts):
        """Tensor grid with ``counts[i]`` points along axis i, edges included."""
        axes = [np.linspace(c - e, c + e, int(k)) if int(k) > 1 else np.array([c])
                for c, e, k in zip(self.center, self.extents, counts)]
        return np.stack([m.ravel() for m in np.meshgrid(*axes, indexing="ij")], axis=-1)


def _unit_surface(dim, n, seed, kind="box"):
    """Points on the surface of the unit max-norm ball (box) or unit sphere."""
    sob = qmc.Sobol(dim, scramble=True, seed=seed)
    m = max(int(np.ceil(np.log2(max(n, 2)))), 1)
    P = sob.random_base2(m)[:n]
    if kind == "ellipsoid":
        from scipy.stats import norm
        G = norm.ppf(np.clip(P, 1e-12, 1 - 1e-12))
        return G / np.linalg.norm(G, axis=1, keepdims=True)
    Z = 2.0 * P - 1.0
    face = np.arange(len(Z)) % (2 * dim)
    Z[np.arange(len(Z)), face // 2] = np.where(face % 2, 1.0, -1.0)
    faces = np.zeros((2 * dim, dim))
    for i in range(dim):
        faces[2 * i, i], faces[2 * i + 1, i] = -1.0, 1.0
    corners = np.array(np.meshgrid(*[[-1.0, 1.0]] * dim, indexing="ij")).reshape(dim, -1).T
    return np.vstack([faces, corners, Z])


# --- flows -----------------------------------------------------------------------

@dataclass
class FlowPath:
    times: np.ndarray
    states: np.ndarray
    termination: str = "completed"
    interp: object = None

    def at(self, t):
        if self.interp is not None:
            return self.interp(t)
        return np.array([np.interp(t, self.times, self.states[:, k])
                         for k in range(self.states.shape[1])]).T


@dataclass
class FunctionFlow:
    """Autonomous ODE x' = rhs(x) with an optional Lyapunov function."""

    rhs: object
    dim: int
    lyapunov: object = None
    rtol: float = 1e-10
    atol: float = 1e-12
    max_step: float = 0.05

    def trajectory(self, x0, t_final):
        sol = solve_ivp(lambda t, x: self.rhs(x), (0.0, t_final), np.asarray(x0, float),
                        method="DOP853", rtol=self.rtol, atol=self.atol,
                        max_step=self.max_step, dense_output=True)
        if not sol.success:
            raise UnderactError(sol.message, stage="trajectory")
        return FlowPath(sol.t, sol.y.T, "completed", lambda t: sol.sol(t).T)


@dataclass
class ClosedLoopFlow:
    """The closed loop of a ControlLaw; the Lyapunov function is Hhat - Hhat(target)."""

    law: object
    settings: object = None
    target: tuple = (0.0, 0.0, 0.0, 0.0)
    dim: int = 4

    def __post_init__(self):
        from .simulate import SimSettings, closed_loop
        self.settings = self.settings or SimSettings()
        self._dyn = closed_loop(self.law)
        self._H0 = self.law.Hhat(self.target)

    def lyapunov(self, X):
        from .control import matched_energy
        X = np.atleast_2d(X)
        ms = self.law.matched
        inside = np.asarray(ms.in_region(X[:, 0], X[:, 1]), dtype=bool)
        out = np.full(len(X), np.inf)
        if np.any(inside):
            Y = X[inside]
            out[inside] = matched_energy(ms, Y[:, 0], Y[:, 1], Y[:, 2], Y[:, 3]) - self._H0
        return out

    def trajectory(self, x0, t_final):
        from .simulate import integrate
        tr = integrate(self._dyn, x0, t_final, self.settings)
        t, X = tr.times, tr.states
        keep = tr.in_region
        t, X = t[keep], X[keep]
        if len(t) < 2:
            return FlowPath(t, X, tr.termination, None)
        dX = np.array([self._dyn.rhs(0.0, x) for x in X])
        spl = CubicHermiteSpline(t, X, dX, axis=0)
        return FlowPath(t, X, tr.termination, spl)


# --- normal operating range ----------------------------------------------------------

def certificate_level(flow, D, n=512, seed=0):
    """min of the flow's Lyapunov function over sampled boundary points of D."""
    if getattr(flow, "lyapunov", None) is None:
        return None
    return float(np.min(flow.lyapunov(D.boundary_samples(n, seed))))


@dataclass
class NormalRange:
    samples: np.ndarray
    member: np.ndarray
    stayed: np.ndarray
    certified: np.ndarray
    termination: list
    level: float | None
    paths: list = field(default_factory=list, repr=False)

    @property
    def counts(self):
        return {"samples": int(len(self.member)), "members": int(self.member.sum()),
                "stayed": int(self.stayed.sum()), "certified": int(self.certified.sum())}


def _map(fn, items, threads):
    if threads and threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            return list(pool.map(fn, items))
    return [fn(x) for x in items]


def estimate_normal_range(flow, O, samples, t_horizon, D, threads=1, level=None,
                          keep_paths=False):
    """Membership in the normal operating range for each sample.

    A sample is a member when its trajectory runs the whole horizon inside O
    and ends in D below the certificate level (the least Lyapunov value on
    the boundary of D), which places it in a sublevel set that cannot leave D.
    Without a Lyapunov function the certificate is only "ends in D".
    """
    samples = np.atleast_2d(np.asarray(samples, dtype=float))
    if not np.all(O.contains(samples)):
        raise ValueError("samples must lie inside O")
    if level is None:
        level = certificate_level(flow, D)

    def one(x0):
        try:
            p = flow.trajectory(x0, t_horizon)
        except UnderactError as exc:
            return False, False, f"error: {exc}", None
        done = p.termination == "completed" and len(p.times) and p.times[-1] >= t_horizon * (1 - 1e-12)
        stayed = bool(done and np.all(O.contains(p.states)))
        xf = p.states[-1]
        cert = bool(D.contains(xf)[0])
        if cert and level is not None:
            cert = bool(flow.lyapunov(xf)[0] < level)
        return stayed, cert, p.termination, p

    res = _map(one, list(samples), threads)
    stayed = np.array([r[0] for r in res], dtype=bool)
    cert = np.array([r[1] for r in res], dtype=bool)
    return NormalRange(samples, stayed & cert, stayed, cert, [r[2] for r in res], level,
                       [r[3] for r in res] if keep_paths else [])


# --- settling time -------------------------------------------------------------------

@dataclass
class SettlingResult:
    T: float
    per_sample: np.ndarray


def last_exit_time(path, D, tol=1e-10):
    """Last time the path is outside D; 0 if it never leaves."""
    inside = D.contains(path.states)
    if not inside[-1]:
        raise NotSettled(f"final state at t={path.times[-1]:g} lies outside the target range")
    out = np.nonzero(~inside)[0]
    if out.size == 0:
        return 0.0
    k = out[-1]
    lo, hi = path.times[k], path.times[k + 1]
    while hi - lo > tol * max(1.0, hi):
        mid = 0.5 * (lo + hi)
        if D.contains(path.at(mid))[0]:
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


def settling_time(flow, samples, D, t_horizon, threads=1, paths=None):
    """sup over samples of the last exit time from D within the horizon.

    ``paths`` may supply already computed FlowPaths (same order as samples).
    """
    samples = np.atleast_2d(np.asarray(samples, dtype=float))
    if paths is not None:
        if len(paths) != len(samples):
            raise ValueError("paths and samples differ in length")
        lookup = {tuple(x): p for x, p in zip(samples, paths)}

    def one(x0):
        p = lookup[tuple(x0)] if paths is not None else flow.trajectory(x0, t_horizon)
        if p.termination != "completed":
            raise NotSettled(f"trajectory from {x0} ended early ({p.termination})")
        return last_exit_time(p, D)

    per = np.array(_map(one, list(samples), threads))
    return SettlingResult(float(per.max()) if per.size else 0.0, per)


# --- inscribed ball -----------------------------------------------------------------

def membership_indicator(points, member, weights=None, domain=None):
    """Indicator from a sampled membership map by weighted nearest neighbour.

    Points outside ``domain`` (a Region, usually the sampled box) count as
    outside, so the map says nothing beyond where it was sampled.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    w = np.ones(points.shape[1]) if weights is None else np.asarray(weights, float)
    tree = cKDTree(points * w)
    member = np.asarray(member, dtype=bool)

    def indicator(X):
        X = np.atleast_2d(X)
        _, idx = tree.query(X * w, p=np.inf)
        inside = member[idx]
        if domain is not None:
            inside = inside & domain.contains(X)
        return inside

    return indicator


def inscribed_radius(indicator, center, weights=None, n_boundary=512, seed=0,
                     rtol=1e-6, r_max=1e6, domain=None):
    """Largest r whose weighted max-norm ball max_i w_i |z_i - c_i| <= r has
    every sampled boundary point inside the region.

    ``indicator`` is a callable on (N, d) arrays or a (points, member) pair;
    for a pair, ``domain`` bounds where the map is trusted.
    The result is a sampled estimate: a region with a thin notch between
    boundary samples can be overestimated.
    """
    if isinstance(indicator, tuple):
        indicator = membership_indicator(*indicator, weights=weights, domain=domain)
    c = np.asarray(center, dtype=float)
    w = np.ones_like(c) if weights is None else np.asarray(weights, dtype=float)
    if np.any(w <= 0):
        raise ValueError("weights must be positive")
    if not bool(np.asarray(indicator(c[None, :]))[0]):
        raise CenterOutside("center is not inside the region")
    U = _unit_surface(len(c), n_boundary, seed) / w

    def feasible(r):
        return bool(np.all(indicator(c + r * U)))

    lo, hi = 0.0, 1.0 / np.max(w) * 1e-3
    while feasible(hi):
        lo, hi = hi, 2.0 * hi
        if hi > r_max:
            return float(lo)
    while hi - lo > rtol * max(hi, 1e-300):
        mid = 0.5 * (lo + hi)
        if feasible(mid):
            lo = mid
        else:
            hi = mid
    return float(lo)
