"""Riemannian data of a two-degree-of-freedom mechanical system.

Coordinates are chosen so that the unactuated direction is d/dx1 and
g11 = 1.  Dissipation is velocity-linear, c^i = c_ij(x) v^j, with c^i the
contravariant components of the vector c(X); the force it exerts in the
k-th equation of motion is g_ki c^i.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateMetric
from .fields import Chart, ConstantField, ScalarField

DET_MIN = 1e-12


@dataclass(frozen=True)
class TangentState:
    x1: float
    x2: float
    v1: float
    v2: float

    @classmethod
    def of(cls, s):
        if isinstance(s, TangentState):
            return s
        x1, x2, v1, v2 = (float(v) for v in s)
        return cls(x1, x2, v1, v2)

    def as_array(self):
        return np.array([self.x1, self.x2, self.v1, self.v2])


def _zero():
    return ConstantField(0.0)


def _zero_damping():
    return ((_zero(), _zero()), (_zero(), _zero()))


@dataclass(frozen=True)
class System2DOF:
    g12: ScalarField
    g22: ScalarField
    V: ScalarField
    chart: Chart
    c: tuple = field(default_factory=_zero_damping)
    name: str = "system"

    def metric_data(self, x1, x2):
        """Metric components and partials as ((g11, g12, g22), d/dx1, d/dx2)."""
        f12, a12, b12 = self.g12._vp(x1, x2)
        f22, a22, b22 = self.g22._vp(x1, x2)
        one = np.ones_like(f12)
        zero = np.zeros_like(f12)
        return (one, f12, f22), (zero, a12, a22), (zero, b12, b22)

    def metric_matrix(self, x1, x2):
        self.chart.require(x1, x2)
        (g11, g12, g22), _, _ = self.metric_data(float(x1), float(x2))
        return np.array([[g11, g12], [g12, g22]], dtype=float)

    def metric_det(self, x1, x2):
        G = self.metric_matrix(x1, x2)
        det = float(G[0, 0] * G[1, 1] - G[0, 1] ** 2)
        if det <= DET_MIN:
            raise DegenerateMetric(f"det g = {det:.3e} at ({x1}, {x2})")
        return det

    def metric_inverse(self, x1, x2):
        G = self.metric_matrix(x1, x2)
        det = self.metric_det(x1, x2)
        return np.array([[G[1, 1], -G[0, 1]], [-G[0, 1], G[0, 0]]]) / det

    def christoffel_bracket(self, i, j, k, x1, x2):
        """[ij, k] = 1/2 (g_ik,j + g_jk,i - g_ij,k), indices in {1, 2}."""
        self.chart.require(x1, x2)
        br = christoffel_first_kind(*self.metric_data(np.asarray(x1, float), np.asarray(x2, float)))
        return _as_scalar(br[i - 1][j - 1][k - 1])

    def damping_vector(self, x1, x2, v1, v2):
        """Contravariant components (c^1, c^2) of c(X)."""
        return damping_vector(self.c, x1, x2, v1, v2)

    def total_energy(self, s):
        s = TangentState.of(s)
        self.chart.require(s.x1, s.x2)
        (g11, g12, g22), _, _ = self.metric_data(s.x1, s.x2)
        kin = 0.5 * (g11 * s.v1 ** 2 + 2 * g12 * s.v1 * s.v2 + g22 * s.v2 ** 2)
        return float(kin + self.V._vp(s.x1, s.x2)[0])

    def accelerations(self, s, u=0.0):
        """Solve g_kj a^j = -[ij,k] v^i v^j - g_ki c^i - dV/dx^k + u delta_k2."""
        s = TangentState.of(s)
        self.chart.require(s.x1, s.x2)
        a = open_loop_accelerations(self, s.x1, s.x2, s.v1, s.v2, u)
        return float(a[0]), float(a[1])


def _as_scalar(a):
    a = np.asarray(a)
    return float(a) if a.ndim == 0 else a


def christoffel_first_kind(vals, d1, d2):
    """All brackets [ij, k] of a 2x2 metric given its components and partials.

    ``vals``, ``d1``, ``d2`` are (m11, m12, m22) tuples of arrays.  Returns a
    nested list ``br[i][j][k]`` (0-based).
    """
    def comp(i, j, dk):
        d = (d1, d2)[dk]
        if i == j:
            return d[0] if i == 0 else d[2]
        return d[1]

    br = [[[None, None], [None, None]], [[None, None], [None, None]]]
    for i in range(2):
        for j in range(2):
            for k in range(2):
                br[i][j][k] = 0.5 * (comp(i, k, j) + comp(j, k, i) - comp(i, j, k))
    return br


def inverse_2x2(m11, m12, m22, det_min=DET_MIN, definite=True):
    """Inverse entries and determinant; ``definite=False`` only needs |det| > det_min."""
    det = m11 * m22 - m12 * m12
    if np.any(~((det if definite else np.abs(det)) > det_min)):
        raise DegenerateMetric(f"metric determinant {np.min(det):.3e} <= {det_min:g}")
    return m22 / det, -m12 / det, m11 / det, det


def second_kind(br, inv):
    """Gamma^k_ij = m^{kp} [ij, p] from brackets and inverse (i11, i12, i22)."""
    i11, i12, i22 = inv
    gam = [[[None, None], [None, None]], [[None, None], [None, None]]]
    for i in range(2):
        for j in range(2):
            b1, b2 = br[i][j]
            gam[i][j][0] = i11 * b1 + i12 * b2
            gam[i][j][1] = i12 * b1 + i22 * b2
    return gam


def quadratic(t, v1, v2):
    """sum_ij t[i][j] v^i v^j for a symmetric nested list ``t``."""
    return t[0][0] * v1 * v1 + 2.0 * t[0][1] * v1 * v2 + t[1][1] * v2 * v2


def damping_vector(c, x1, x2, v1, v2):
    (c11, c12), (c21, c22) = c
    d1 = c11._vp(x1, x2)[0] * v1 + c12._vp(x1, x2)[0] * v2
    d2 = c21._vp(x1, x2)[0] * v1 + c22._vp(x1, x2)[0] * v2
    return d1, d2


def open_loop_accelerations(sys, x1, x2, v1, v2, u=0.0):
    vals, d1, d2 = sys.metric_data(x1, x2)
    g11, g12, g22 = vals
    br = christoffel_first_kind(vals, d1, d2)
    _, V1, V2 = sys.V._vp(x1, x2)
    c1, c2 = sys.damping_vector(x1, x2, v1, v2)
    rhs1 = -quadratic([[br[0][0][0], br[0][1][0]], [br[1][0][0], br[1][1][0]]], v1, v2) - V1
    rhs2 = -quadratic([[br[0][0][1], br[0][1][1]], [br[1][0][1], br[1][1][1]]], v1, v2) - V2 + u
    i11, i12, i22, _ = inverse_2x2(g11, g12, g22)
    a1 = i11 * rhs1 + i12 * rhs2 - c1
    a2 = i12 * rhs1 + i22 * rhs2 - c2
    return a1, a2
