"""Linear analysis: pendulum-cart linearization, pole placement,
stabilizability, the Lyapunov matrix equation and closed-loop germs."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_continuous_lyapunov

from .errors import (BadD, BadParameter, NotHurwitz, OutOfRegion,
                     SingularPlacement)
from .geometry import TangentState, open_loop_accelerations


@dataclass(frozen=True)
class LinearSystem:
    A: np.ndarray
    B: np.ndarray

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        B = np.asarray(self.B, dtype=float)
        B = B.reshape(len(A), -1)
        if A.shape[0] != A.shape[1]:
            raise ValueError("A must be square")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)


@dataclass(frozen=True)
class Gains:
    """u = a1 x1 + a2 x2 + a3 v1 + a4 v2."""

    a1: float
    a2: float
    a3: float
    a4: float

    def as_array(self):
        return np.array([self.a1, self.a2, self.a3, self.a4])

    @classmethod
    def of(cls, k):
        return cls(*(float(v) for v in k))


def _check_b(b):
    if not 0.0 < b < 1.0:
        raise BadParameter(f"need 0 < b < 1, got {b}")


def pendulum_open_loop(b):
    """(A, B) of the pendulum cart at the upright rest point.

    Mass matrix [[1, b], [b, 1]] and potential Hessian diag(-1, 0) from
    g and V = cos(x1) at x1 = 0; the input enters the x2 equation.
    """
    _check_b(b)
    M = np.array([[1.0, b], [b, 1.0]])
    K = np.array([[1.0, 0.0], [0.0, 0.0]])  # -Hessian of cos(x1)
    Minv = np.linalg.inv(M)
    A = np.zeros((4, 4))
    A[:2, 2:] = np.eye(2)
    A[2:, :2] = Minv @ K
    B = np.zeros((4, 1))
    B[2:, 0] = Minv @ np.array([0.0, 1.0])
    return LinearSystem(A, B)


def pendulum_cart_linearization(b, gains):
    """Closed-loop matrix A + B k for u = k . (x1, x2, v1, v2)."""
    lin = pendulum_open_loop(b)
    k = Gains.of(gains.as_array() if isinstance(gains, Gains) else gains).as_array()
    return lin.A + lin.B @ k[None, :]


def printed_linearization(b, gains):
    """The closed-loop matrix as it appears in print, with (a1 + b) in row 4."""
    D = 1.0 - b * b
    a1, a2, a3, a4 = Gains.of(gains.as_array() if isinstance(gains, Gains) else gains).as_array()
    return np.array([[0, 0, 1, 0], [0, 0, 0, 1],
                     [(1 - a1 * b) / D, -a2 * b / D, -a3 * b / D, -a4 * b / D],
                     [(a1 + b) / D, a2 / D, a3 / D, a4 / D]])


def char_poly(M):
    """Monic characteristic polynomial, highest power first (Faddeev-LeVerrier)."""
    M = np.atleast_2d(np.asarray(M, dtype=float))
    n = M.shape[0]
    if M.shape != (n, n):
        raise ValueError("matrix must be square")
    coeffs = [1.0]
    Mk = np.zeros_like(M)
    I = np.eye(n)
    for k in range(1, n + 1):
        Mk = M @ Mk + coeffs[-1] * I
        coeffs.append(-np.trace(M @ Mk) / k)
    return np.array(coeffs)


def derived_char_poly_coefficients(b, gains):
    """Closed-form coefficients [1, c3, c2, c1, c0] of the derived closed loop."""
    D = 1.0 - b * b
    a1, a2, a3, a4 = Gains.of(gains.as_array() if isinstance(gains, Gains) else gains).as_array()
    return np.array([1.0, (a3 * b - a4) / D, (a1 * b - a2 - 1.0) / D, a4 / D, a2 / D])


def printed_char_poly_coefficients(b, gains):
    D = 1.0 - b * b
    a1, a2, a3, a4 = Gains.of(gains.as_array() if isinstance(gains, Gains) else gains).as_array()
    return np.array([1.0, (a3 * b - a4) / D, (1.0 + a2 - a1 * b) / D,
                     a4 * (1 + b * b) / D ** 2, a2 * (1 + b * b) / D ** 2])


def discrepancy_report(b=0.5, gains=(1.0, 2.0, 3.0, 4.0)):
    """Entry and coefficient differences between printed and derived forms."""
    derived = pendulum_cart_linearization(b, gains)
    printed = printed_linearization(b, gains)
    diff = np.argwhere(~np.isclose(derived, printed, rtol=0, atol=1e-14))
    dc = derived_char_poly_coefficients(b, gains)
    pc = printed_char_poly_coefficients(b, gains)
    names = ["lambda^4", "lambda^3", "lambda^2", "lambda^1", "lambda^0"]
    return {
        "b": b, "gains": list(map(float, gains)),
        "matrix_entries": [{"row": int(i) + 1, "col": int(j) + 1,
                            "derived": float(derived[i, j]), "printed": float(printed[i, j])}
                           for i, j in diff],
        "char_poly": [{"term": names[k], "derived": float(dc[k]), "printed": float(pc[k]),
                       "agree": bool(np.isclose(dc[k], pc[k], rtol=1e-14, atol=0))}
                      for k in range(5)],
    }


def _conjugate_closed(z, tol=1e-9):
    z = np.asarray(z, dtype=complex)
    used = np.zeros(len(z), dtype=bool)
    for i, zi in enumerate(z):
        if used[i]:
            continue
        if abs(zi.imag) <= tol * max(1.0, abs(zi)):
            used[i] = True
            continue
        cand = [j for j in range(len(z)) if not used[j] and j != i
                and abs(z[j] - np.conj(zi)) <= tol * max(1.0, abs(zi))]
        if not cand:
            return False
        used[i] = used[cand[0]] = True
    return True


def coefficient_map(lin):
    """(c0, J) with char-poly coefficients [c_{n-1}, ..., c_0] = c0 + J k.

    ``lin`` is a single-input LinearSystem or a pendulum parameter b.  The
    gains enter through the rank-one term B k, so the map is affine; it is
    measured at k = 0 and at the unit gain vectors.
    """
    if not isinstance(lin, LinearSystem):
        lin = pendulum_open_loop(lin)
    if lin.B.shape[1] != 1:
        raise ValueError("pole placement needs a single input")
    n = len(lin.A)
    base = char_poly(lin.A)[1:]
    J = np.empty((n, n))
    for i in range(n):
        e = np.zeros(n)
        e[i] = 1.0
        J[:, i] = char_poly(lin.A + lin.B @ e[None, :])[1:] - base
    return base, J


def place_poles(lin, target_poles, cond_max=1e12):
    """Gains k with spec(A + B k) = ``target_poles`` for a single-input system."""
    n = len(lin.A)
    z = np.asarray(target_poles, dtype=complex).ravel()
    if z.size != n or not _conjugate_closed(z):
        raise ValueError(f"need {n} target poles closed under conjugation")
    target = np.real(np.poly(z))[1:]
    base, J = coefficient_map(lin)
    if np.linalg.cond(J) > cond_max:
        raise SingularPlacement("coefficient map is singular (system not controllable)")
    return np.linalg.solve(J, target - base)


def pole_place_pendulum(b, target_poles):
    """Gains placing the pendulum-cart closed-loop spectrum at ``target_poles``."""
    _check_b(b)
    try:
        return Gains.of(place_poles(pendulum_open_loop(b), target_poles))
    except SingularPlacement as exc:
        raise SingularPlacement(f"coefficient map singular at b={b}") from exc


def linearize_open_loop(sys, equilibrium=(0.0, 0.0, 0.0, 0.0), step=1e-4):
    """Numerical (A, B) of x' = f(x, u) at an equilibrium with u = 0."""
    x0 = TangentState.of(equilibrium).as_array()

    def rhs(x, u=0.0):
        a = open_loop_accelerations(sys, *x, u)
        return np.array([x[2], x[3], float(a[0]), float(a[1])])

    def rich(f, h):
        return (4.0 * _central(f, x0, h / 2) - _central(f, x0, h)) / 3.0

    A = rich(rhs, step)
    Bcol = (rhs(x0, 1.0) - rhs(x0, -1.0)) / 2.0  # exactly linear in u
    return LinearSystem(A, Bcol[:, None])


@dataclass(frozen=True)
class StabilizabilityResult:
    stabilizable: bool
    certificate: complex | None
    checked: tuple

    def __bool__(self):
        return self.stabilizable


def stabilizability_test(sys, rel_tol=1e-9):
    """Rank of [sI - A, B] at each eigenvalue of A with Re s >= 0."""
    A, B = sys.A, sys.B
    n = len(A)
    checked = []
    for s in np.linalg.eigvals(A):
        if s.real < -1e-12:
            continue
        M = np.hstack([s * np.eye(n) - A, B.astype(complex)])
        sv = np.linalg.svd(M, compute_uv=False)
        rank = int(np.sum(sv > rel_tol * max(sv[0], 1e-300)))
        checked.append(complex(s))
        if rank < n:
            s = complex(s)
            return StabilizabilityResult(False, s.real if abs(s.imag) < 1e-12 else s, tuple(checked))
    return StabilizabilityResult(True, None, tuple(checked))


def two_oscillator_example():
    """x1'' - x1 = 0, x2'' + x2 = u in first-order form (x1, x2, v1, v2)."""
    A = np.array([[0, 0, 1, 0], [0, 0, 0, 1], [1, 0, 0, 0], [0, -1, 0, 0]], dtype=float)
    B = np.array([[0], [0], [0], [1]], dtype=float)
    return LinearSystem(A, B)


def solve_lyapunov(Acl, D):
    """Symmetric K with Acl^T K + K Acl = D for Hurwitz Acl and D < 0."""
    Acl = np.atleast_2d(np.asarray(Acl, dtype=float))
    D = np.atleast_2d(np.asarray(D, dtype=float))
    if D.shape != Acl.shape:
        raise BadD("D must have the shape of Acl")
    if not np.allclose(D, D.T, rtol=0, atol=1e-12 * max(1.0, np.abs(D).max())):
        raise BadD("D must be symmetric")
    if np.max(np.linalg.eigvalsh(0.5 * (D + D.T))) >= 0:
        raise BadD("D must be negative definite")
    ev = np.linalg.eigvals(Acl)
    if np.max(ev.real) >= 0:
        raise NotHurwitz(f"Acl has eigenvalue {ev[np.argmax(ev.real)]:.6g} with Re >= 0")
    K = solve_continuous_lyapunov(Acl.T, D)
    return 0.5 * (K + K.T)


def lyapunov_residual(Acl, K, D):
    Acl = np.atleast_2d(Acl)
    return float(np.max(np.abs(Acl.T @ K + K @ Acl - D)))


# --- closed-loop germs ----------------------------------------------------------

@dataclass(frozen=True)
class Germ:
    gains: Gains
    A: np.ndarray
    eigenvalues: np.ndarray
    step: float

    @property
    def stable(self):
        return bool(np.max(self.eigenvalues.real) < 0)


def _central(f, x0, h):
    cols = []
    for i in range(len(x0)):
        e = np.zeros(len(x0))
        e[i] = h
        cols.append((np.asarray(f(x0 + e)) - np.asarray(f(x0 - e))) / (2 * h))
    return np.array(cols).T


def linearize_closed_loop(law, equilibrium=(0.0, 0.0, 0.0, 0.0), step=1e-4):
    """First-order germ of u and the closed-loop Jacobian at an equilibrium.

    Fourth-order Richardson combination of central differences at
    ``step`` and ``step``/2 in each state direction.
    """
    x0 = TangentState.of(equilibrium).as_array()
    if not bool(law.matched.in_region(x0[0], x0[1])):
        raise OutOfRegion("equilibrium outside the valid region")

    def u(x):
        return law.control_input(x)

    def rhs(x):
        a = open_loop_accelerations(law.sys, *x, law.control_input(x))
        return np.array([x[2], x[3], float(a[0]), float(a[1])])

    def rich(f, h):
        return (4.0 * _central(f, x0, h / 2) - _central(f, x0, h)) / 3.0

    k = rich(lambda x: np.atleast_1d(u(x)), step)[0]
    A = rich(rhs, step)
    return Germ(Gains.of(k), A, np.linalg.eigvals(A), step)
