"""Time integration of open-loop, closed-loop and matched dynamics."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import DOP853, RK45

from .control import (ControlLaw, dissipation_rate, energy_rate,
                      matched_accelerations, matched_energy)
from .errors import StepFailure, UnderactError
from .geometry import TangentState, open_loop_accelerations
from .matching import MatchedSystem

_METHODS = {"RK45": RK45, "DOP853": DOP853}


@dataclass(frozen=True)
class SimSettings:
    rtol: float = 1e-9
    atol: float = 1e-9
    max_step: float = 1e-2
    method: str = "RK45"

    def __post_init__(self):
        if self.method not in _METHODS:
            raise ValueError(f"unknown method {self.method!r}")


@dataclass
class Trajectory:
    times: np.ndarray
    states: np.ndarray
    u: np.ndarray
    Hhat: np.ndarray
    dHhat_dt: np.ndarray
    in_region: np.ndarray
    termination: str = "completed"
    kind: str = ""
    message: str = ""

    def __len__(self):
        return len(self.times)

    @property
    def final(self):
        return TangentState.of(self.states[-1])

    def columns(self):
        """Rows in the fixed CSV column order."""
        return np.column_stack([self.times, self.states, self.u, self.Hhat,
                                self.dHhat_dt, self.in_region.astype(float)])

    COLUMNS = ("t", "x1", "x2", "v1", "v2", "u", "H_hat", "dH_hat_dt", "in_region")


@dataclass
class Dynamics:
    """Right-hand side plus the per-sample records of one kind of motion.

    ``kind`` is "open_loop", "closed_loop" or "matched".  Hhat is taken from
    ``matched``; for an open loop without one it is the system's own energy.
    """

    kind: str
    sys: object
    matched: MatchedSystem
    law: ControlLaw | None = None
    chart: object = field(default=None)

    def accel(self, x):
        x1, x2, v1, v2 = x
        if self.kind == "closed_loop":
            u = self.law.control_input(x)
            a = open_loop_accelerations(self.sys, x1, x2, v1, v2, u)
        elif self.kind == "matched":
            u = 0.0
            a = matched_accelerations(self.matched, x1, x2, v1, v2)
        else:
            u = 0.0
            a = open_loop_accelerations(self.sys, x1, x2, v1, v2, 0.0)
        return float(a[0]), float(a[1]), float(u)

    def rhs(self, t, x):
        a1, a2, _ = self.accel(x)
        return np.array([x[2], x[3], a1, a2])

    def inside(self, x):
        if not bool(self.chart.contains(x[0], x[1])):
            return False, "left_chart"
        if self.kind != "open_loop" and not bool(self.matched.in_region(x[0], x[1])):
            return False, "left_region"
        return True, ""

    def record(self, x):
        a1, a2, u = self.accel(x)
        ms = self.matched
        H = matched_energy(ms, *x)
        dH = energy_rate(ms, *x, a1, a2)
        return u, float(H), float(dH)


def open_loop(sys, matched=None):
    return Dynamics("open_loop", sys, matched or MatchedSystem.identity(sys), chart=sys.chart)


def closed_loop(law):
    return Dynamics("closed_loop", law.sys, law.matched, law=law, chart=law.sys.chart)


def matched(sys, ms):
    return Dynamics("matched", sys, ms, chart=ms.chart or sys.chart)


def integrate(dyn, s0, t_final, settings=None, t_eval=None):
    """Adaptive Runge-Kutta integration.

    Records one row per accepted step, or, when ``t_eval`` is given, one row
    per requested time from the solver's dense output.  Stops early with
    termination "left_chart" or "left_region"; the first state found outside
    is kept with ``in_region`` False when its records can be evaluated.
    """
    settings = settings or SimSettings()
    x0 = TangentState.of(s0).as_array()
    ok, why = dyn.inside(x0)
    if not ok:
        raise UnderactError(f"initial state outside: {why}", stage="integrate")
    if t_eval is not None:
        t_eval = np.asarray(t_eval, dtype=float)
        if np.any(np.diff(t_eval) <= 0) or t_eval[0] < 0 or t_eval[-1] > t_final:
            raise ValueError("t_eval must increase within [0, t_final]")
    rows = []
    termination, message = "completed", ""

    def emit(t, x):
        nonlocal termination
        ok, why = dyn.inside(x)
        if not ok:
            termination = why
            try:
                rows.append((t, x, *dyn.record(x), False))
            except (UnderactError, FloatingPointError):
                pass
            return False
        rows.append((t, x, *dyn.record(x), True))
        return True

    k = 0
    if t_eval is None or t_eval[0] == 0.0:
        emit(0.0, x0)
        k = 1
    solver = _METHODS[settings.method](dyn.rhs, 0.0, x0, t_final, rtol=settings.rtol,
                                       atol=settings.atol, max_step=settings.max_step)
    running = True
    while running and solver.status == "running":
        try:
            msg = solver.step()
        except UnderactError as exc:
            termination, message = "left_region", str(exc)
            break
        if solver.status == "failed":
            raise StepFailure(f"integrator failed at t={solver.t:.6g}: {msg}", stage="integrate")
        if t_eval is None:
            running = emit(solver.t, solver.y.copy())
            continue
        dense = None
        while k < len(t_eval) and t_eval[k] <= solver.t:
            dense = dense or solver.dense_output()
            if not emit(float(t_eval[k]), dense(t_eval[k])):
                running = False
                break
            k += 1
        if running and not dyn.inside(solver.y)[0]:
            termination, running = dyn.inside(solver.y)[1], False
    return Trajectory(times=np.array([r[0] for r in rows]),
                      states=np.array([r[1] for r in rows]).reshape(-1, 4),
                      u=np.array([r[2] for r in rows]), Hhat=np.array([r[3] for r in rows]),
                      dHhat_dt=np.array([r[4] for r in rows]),
                      in_region=np.array([r[5] for r in rows], dtype=bool),
                      termination=termination, kind=dyn.kind, message=message)


@dataclass(frozen=True)
class DecayReport:
    max_mismatch: float
    max_fd_mismatch: float
    max_rate: float
    increasing_intervals: list

    def as_dict(self):
        return dict(self.__dict__)


def _local_poly_derivative(t, f, deg=4):
    """Derivative of sampled f from degree-``deg`` fits over deg+1 neighbours."""
    n = len(t)
    k = deg + 1
    if n < k:
        return np.gradient(f, t)
    out = np.empty(n)
    for i in range(n):
        lo = min(max(i - deg // 2, 0), n - k)
        tt = t[lo:lo + k] - t[i]
        scale = max(np.max(np.abs(tt)), 1e-300)
        c = np.polynomial.polynomial.polyfit(tt / scale, f[lo:lo + k], deg)
        out[i] = c[1] / scale
    return out


def energy_decay_check(traj, ms, tol=1e-8):
    """Compare dHhat/dt with -ghat(chat X, X) along a trajectory.

    ``max_mismatch`` uses the chain-rule rate recorded during integration,
    ``max_fd_mismatch`` a local quartic fit to the recorded Hhat samples,
    an independent route.  ``increasing_intervals`` lists [t0, t1] where
    the recorded rate exceeds ``tol``.
    """
    m = traj.in_region
    t, X = traj.times[m], traj.states[m]
    D = dissipation_rate(ms, X[:, 0], X[:, 1], X[:, 2], X[:, 3])
    rate = traj.dHhat_dt[m]
    fd = _local_poly_derivative(t, traj.Hhat[m])
    up = rate > tol
    intervals = []
    i = 0
    while i < len(up):
        if up[i]:
            j = i
            while j + 1 < len(up) and up[j + 1]:
                j += 1
            intervals.append([float(t[i]), float(t[j])])
            i = j + 1
        else:
            i += 1
    return DecayReport(max_mismatch=float(np.max(np.abs(rate + D))) if len(t) else 0.0,
                       max_fd_mismatch=float(np.max(np.abs(fd + D))) if len(t) else 0.0,
                       max_rate=float(np.max(rate)) if len(t) else 0.0,
                       increasing_intervals=intervals)


def max_state_gap(a, b):
    """Max state difference over the common rows of two trajectories.

    Both must have been recorded on the same ``t_eval`` grid.
    """
    n = min(len(a), len(b))
    if n == 0:
        return float("nan")
    if not np.array_equal(a.times[:n], b.times[:n]):
        raise ValueError("trajectories were not recorded on the same times")
    return float(np.max(np.abs(a.states[:n] - b.states[:n])))
