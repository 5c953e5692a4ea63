"""Real scalar fields on a rectangular chart in the coordinates (x1, x2).

Two representations share one interface: analytic fields carry their own
derivative evaluators, gridded fields are bicubic Hermite interpolants on a
uniform grid with fourth-order finite-difference node slopes (one-sided
stencils next to the boundary).  Fields combine with ``+ - * /`` and the
product/quotient rules are applied to the partials, so derived quantities
such as ``(1 - sigma * ghat11) / mu`` stay exact pointwise.

Every field evaluates vectorised over numpy arrays.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import OutOfChart

_EDGE_TOL = 1e-9


@dataclass(frozen=True)
class Chart:
    x1_min: float
    x1_max: float
    x2_min: float
    x2_max: float
    n1: int = 241
    n2: int = 241

    def __post_init__(self):
        if not (self.x1_min < self.x1_max and self.x2_min < self.x2_max):
            raise ValueError("chart bounds must satisfy min < max")
        if self.n1 < 4 or self.n2 < 4:
            raise ValueError("chart needs at least 4 nodes per axis")

    @property
    def nodes1(self):
        return np.linspace(self.x1_min, self.x1_max, self.n1)

    @property
    def nodes2(self):
        return np.linspace(self.x2_min, self.x2_max, self.n2)

    @property
    def h1(self):
        return (self.x1_max - self.x1_min) / (self.n1 - 1)

    @property
    def h2(self):
        return (self.x2_max - self.x2_min) / (self.n2 - 1)

    def mesh(self):
        return np.meshgrid(self.nodes1, self.nodes2, indexing="ij")

    def refined(self, factor=2):
        """Same bounds, grid spacing divided by ``factor``."""
        return Chart(self.x1_min, self.x1_max, self.x2_min, self.x2_max,
                     (self.n1 - 1) * factor + 1, (self.n2 - 1) * factor + 1)

    def with_counts(self, n1, n2):
        return Chart(self.x1_min, self.x1_max, self.x2_min, self.x2_max, n1, n2)

    def contains(self, x1, x2):
        t1 = _EDGE_TOL * (self.x1_max - self.x1_min)
        t2 = _EDGE_TOL * (self.x2_max - self.x2_min)
        return ((x1 >= self.x1_min - t1) & (x1 <= self.x1_max + t1)
                & (x2 >= self.x2_min - t2) & (x2 <= self.x2_max + t2))

    def require(self, x1, x2):
        inside = self.contains(np.asarray(x1), np.asarray(x2))
        if not np.all(inside):
            raise OutOfChart(f"point(s) outside chart [{self.x1_min}, {self.x1_max}]"
                             f" x [{self.x2_min}, {self.x2_max}]")


class ScalarField:
    """Base class.  Subclasses implement ``_vp`` returning (f, df/dx1, df/dx2)."""

    chart: Chart | None = None
    name: str = ""
    units: str = ""

    def _vp(self, x1, x2):
        raise NotImplementedError

    def _checked(self, x1, x2):
        x1 = np.asarray(x1, dtype=float)
        x2 = np.asarray(x2, dtype=float)
        if self.chart is not None:
            self.chart.require(x1, x2)
        return x1, x2

    def eval(self, x1, x2):
        x1, x2 = self._checked(x1, x2)
        return _scalarize(self._vp(x1, x2)[0])

    __call__ = eval

    def partials(self, x1, x2):
        x1, x2 = self._checked(x1, x2)
        _, d1, d2 = self._vp(x1, x2)
        return _scalarize(d1), _scalarize(d2)

    def value_and_partials(self, x1, x2):
        x1, x2 = self._checked(x1, x2)
        f, d1, d2 = self._vp(x1, x2)
        return _scalarize(f), _scalarize(d1), _scalarize(d2)

    def sample(self, chart=None):
        """Values at the nodes of ``chart`` (defaults to the field's own)."""
        chart = chart or self.chart
        X1, X2 = chart.mesh()
        return np.broadcast_to(self._vp(X1, X2)[0], X1.shape).astype(float)

    def to_grid(self, chart=None, name=None):
        chart = chart or self.chart
        return GridField(chart, self.sample(chart), name=name or self.name)

    # --- algebra -------------------------------------------------------
    def __add__(self, other):
        return _Sum(self, as_field(other), 1.0)

    def __radd__(self, other):
        return _Sum(as_field(other), self, 1.0)

    def __sub__(self, other):
        return _Sum(self, as_field(other), -1.0)

    def __rsub__(self, other):
        return _Sum(as_field(other), self, -1.0)

    def __mul__(self, other):
        return _Product(self, as_field(other))

    def __rmul__(self, other):
        return _Product(as_field(other), self)

    def __truediv__(self, other):
        return _Quotient(self, as_field(other))

    def __rtruediv__(self, other):
        return _Quotient(as_field(other), self)

    def __neg__(self):
        return _Product(ConstantField(-1.0), self)

    def __repr__(self):
        return f"{type(self).__name__}({self.name!r})"


def _scalarize(a):
    a = np.asarray(a)
    return float(a) if a.ndim == 0 else a


def _zeros_like(x1, x2):
    return np.zeros(np.broadcast(x1, x2).shape)


class ConstantField(ScalarField):
    def __init__(self, value, chart=None, name=""):
        self.value = float(value)
        self.chart = chart
        self.name = name or repr(self.value)

    def _vp(self, x1, x2):
        z = _zeros_like(x1, x2)
        return z + self.value, z, z


class AnalyticField(ScalarField):
    """Closure-backed field; ``d1``/``d2`` evaluate the partial derivatives."""

    def __init__(self, f, d1, d2, chart=None, name="", units=""):
        self.f, self.d1, self.d2 = f, d1, d2
        self.chart = chart
        self.name = name
        self.units = units

    def _vp(self, x1, x2):
        if np.ndim(x1) == 0 and np.ndim(x2) == 0:
            return tuple(np.float64(fn(x1, x2)) for fn in (self.f, self.d1, self.d2))
        shape = np.broadcast(x1, x2).shape
        out = []
        for fn in (self.f, self.d1, self.d2):
            out.append(np.broadcast_to(np.asarray(fn(x1, x2), dtype=float), shape))
        return tuple(out)


class CachedField(ScalarField):
    """Remembers the last scalar evaluation of ``base``.

    Composite fields such as ghat22 = (g12 - sigma ghat12) / mu evaluate
    their operands repeatedly at one point; the cache makes that cheap.
    The entry is replaced in one assignment, so concurrent readers see
    either the old or the new pair.
    """

    def __init__(self, base):
        self.base = base
        self.chart = base.chart
        self.name = base.name
        self.units = base.units
        self._last = None

    def _vp(self, x1, x2):
        if np.ndim(x1) or np.ndim(x2):
            return self.base._vp(x1, x2)
        key = (float(x1), float(x2))
        last = self._last
        if last is not None and last[0] == key:
            return last[1]
        out = self.base._vp(*key)
        self._last = (key, out)
        return out

    def __getattr__(self, item):
        return getattr(self.__dict__["base"], item)


def as_field(obj):
    if isinstance(obj, ScalarField):
        return obj
    return ConstantField(obj)


def _common_chart(a, b):
    return a.chart if a.chart is not None else b.chart


class _Sum(ScalarField):
    def __init__(self, a, b, sign):
        self.a, self.b, self.sign = a, b, sign
        self.chart = _common_chart(a, b)

    def _vp(self, x1, x2):
        fa, a1, a2 = self.a._vp(x1, x2)
        fb, b1, b2 = self.b._vp(x1, x2)
        s = self.sign
        return fa + s * fb, a1 + s * b1, a2 + s * b2


class _Product(ScalarField):
    def __init__(self, a, b):
        self.a, self.b = a, b
        self.chart = _common_chart(a, b)

    def _vp(self, x1, x2):
        fa, a1, a2 = self.a._vp(x1, x2)
        fb, b1, b2 = self.b._vp(x1, x2)
        return fa * fb, a1 * fb + fa * b1, a2 * fb + fa * b2


class _Quotient(ScalarField):
    def __init__(self, a, b):
        self.a, self.b = a, b
        self.chart = _common_chart(a, b)

    def _vp(self, x1, x2):
        fa, a1, a2 = self.a._vp(x1, x2)
        fb, b1, b2 = self.b._vp(x1, x2)
        with np.errstate(divide="ignore", invalid="ignore"):
            q = fa / fb
            return q, (a1 - q * b1) / fb, (a2 - q * b2) / fb


# --- gridded fields --------------------------------------------------------

# Cubic Hermite on [0, 1]: coefficients of 1, t, t^2, t^3 from (p0, p1, p0', p1').
_HERMITE = np.array([[1.0, 0.0, 0.0, 0.0],
                     [0.0, 0.0, 1.0, 0.0],
                     [-3.0, 3.0, -2.0, -1.0],
                     [2.0, -2.0, 1.0, 1.0]])


def fd_derivative(values, h, axis):
    """Fourth-order finite-difference derivative along ``axis``.

    Central five-point stencil in the interior, one-sided five-point stencils
    on the two nodes nearest each boundary.
    """
    f = np.moveaxis(np.asarray(values, dtype=float), axis, 0)
    n = f.shape[0]
    if n < 5:
        d = np.gradient(f, h, axis=0, edge_order=2)
        return np.moveaxis(d, 0, axis)
    d = np.empty_like(f)
    d[2:-2] = (f[:-4] - 8.0 * f[1:-3] + 8.0 * f[3:-1] - f[4:]) / (12.0 * h)
    d[0] = (-25.0 * f[0] + 48.0 * f[1] - 36.0 * f[2] + 16.0 * f[3] - 3.0 * f[4]) / (12.0 * h)
    d[1] = (-3.0 * f[0] - 10.0 * f[1] + 18.0 * f[2] - 6.0 * f[3] + f[4]) / (12.0 * h)
    d[-1] = (25.0 * f[-1] - 48.0 * f[-2] + 36.0 * f[-3] - 16.0 * f[-4] + 3.0 * f[-5]) / (12.0 * h)
    d[-2] = (3.0 * f[-1] + 10.0 * f[-2] - 18.0 * f[-3] + 6.0 * f[-4] - f[-5]) / (12.0 * h)
    return np.moveaxis(d, 0, axis)


class GridField(ScalarField):
    """Bicubic Hermite interpolant of node samples on a uniform chart grid.

    Node values are reproduced exactly; value error is O(h^4) and partial
    derivative error O(h^3) for smooth data.  NaN samples mark invalid
    nodes and poison the cells that touch them.
    """

    def __init__(self, chart, values, name="", units=""):
        values = np.array(values, dtype=float)
        if values.shape != (chart.n1, chart.n2):
            raise ValueError(f"grid shape {values.shape} != ({chart.n1}, {chart.n2})")
        self.chart = chart
        self.values = values
        self.name = name
        self.units = units
        h1, h2 = chart.h1, chart.h2
        fx = fd_derivative(values, h1, 0)
        fy = fd_derivative(values, h2, 1)
        fxy = fd_derivative(fx, h2, 1)
        F = np.empty((chart.n1 - 1, chart.n2 - 1, 4, 4))
        F[..., 0, 0] = values[:-1, :-1]
        F[..., 0, 1] = values[:-1, 1:]
        F[..., 1, 0] = values[1:, :-1]
        F[..., 1, 1] = values[1:, 1:]
        F[..., 0, 2] = fy[:-1, :-1] * h2
        F[..., 0, 3] = fy[:-1, 1:] * h2
        F[..., 1, 2] = fy[1:, :-1] * h2
        F[..., 1, 3] = fy[1:, 1:] * h2
        F[..., 2, 0] = fx[:-1, :-1] * h1
        F[..., 2, 1] = fx[:-1, 1:] * h1
        F[..., 3, 0] = fx[1:, :-1] * h1
        F[..., 3, 1] = fx[1:, 1:] * h1
        F[..., 2, 2] = fxy[:-1, :-1] * h1 * h2
        F[..., 2, 3] = fxy[:-1, 1:] * h1 * h2
        F[..., 3, 2] = fxy[1:, :-1] * h1 * h2
        F[..., 3, 3] = fxy[1:, 1:] * h1 * h2
        self._coef = np.einsum("ak,ijkl,bl->ijab", _HERMITE, F, _HERMITE)
        self.finite_cells = np.all(np.isfinite(self._coef), axis=(2, 3))

    def _locate(self, x1, x2):
        c = self.chart
        s = (x1 - c.x1_min) / c.h1
        r = (x2 - c.x2_min) / c.h2
        # NaN coordinates land in cell 0 and stay NaN through t, u
        i = np.clip(np.floor(np.nan_to_num(s)), 0, c.n1 - 2).astype(int)
        j = np.clip(np.floor(np.nan_to_num(r)), 0, c.n2 - 2).astype(int)
        return i, j, s - i, r - j

    def _vp(self, x1, x2):
        if np.ndim(x1) == 0 and np.ndim(x2) == 0:
            return self._vp_scalar(float(x1), float(x2))
        x1, x2 = np.broadcast_arrays(np.asarray(x1, float), np.asarray(x2, float))
        i, j, t, u = self._locate(x1, x2)
        C = self._coef[i, j]
        one, zero = np.ones_like(t), np.zeros_like(t)
        tp = np.stack([one, t, t * t, t * t * t], axis=-1)
        up = np.stack([one, u, u * u, u * u * u], axis=-1)
        dtp = np.stack([zero, one, 2.0 * t, 3.0 * t * t], axis=-1)
        dup = np.stack([zero, one, 2.0 * u, 3.0 * u * u], axis=-1)
        Cu = np.einsum("...ab,...b->...a", C, up)
        Cdu = np.einsum("...ab,...b->...a", C, dup)
        f = np.einsum("...a,...a->...", tp, Cu)
        f1 = np.einsum("...a,...a->...", dtp, Cu) / self.chart.h1
        f2 = np.einsum("...a,...a->...", tp, Cdu) / self.chart.h2
        return f, f1, f2

    def _vp_scalar(self, x1, x2):
        c = self.chart
        s = (x1 - c.x1_min) / c.h1
        r = (x2 - c.x2_min) / c.h2
        i = min(max(math.floor(s), 0), c.n1 - 2)
        j = min(max(math.floor(r), 0), c.n2 - 2)
        t, u = s - i, r - j
        C = self._coef[i, j]
        Cu = C @ np.array([1.0, u, u * u, u * u * u])
        Cdu = C @ np.array([0.0, 1.0, 2.0 * u, 3.0 * u * u])
        tp = np.array([1.0, t, t * t, t * t * t])
        f = tp @ Cu
        f1 = (Cu[1] + 2.0 * t * Cu[2] + 3.0 * t * t * Cu[3]) / c.h1
        f2 = (tp @ Cdu) / c.h2
        return np.float64(f), np.float64(f1), np.float64(f2)

    def cell_finite(self, x1, x2):
        """True where the interpolation cell containing the point is finite."""
        i, j, _, _ = self._locate(np.asarray(x1, float), np.asarray(x2, float))
        return self.finite_cells[i, j]


# --- quadrature ------------------------------------------------------------

def _simpson_adaptive(fun, a, b, tol, max_depth=50):
    """Vectorised adaptive Simpson on [a, b] for a scalar integrand.

    ``fun`` takes an array of abscissae.  Intervals are refined in batches;
    each accepted interval contributes its Richardson-corrected estimate.
    """
    if a == b:
        return 0.0
    m = 0.5 * (a + b)
    fa, fm, fb = fun(np.array([a, m, b]))
    pending = [(a, b, fa, fm, fb, (b - a) / 6.0 * (fa + 4 * fm + fb), tol)]
    total = 0.0
    depth = 0
    while pending:
        depth += 1
        A = np.array([p[0] for p in pending])
        B = np.array([p[1] for p in pending])
        M = 0.5 * (A + B)
        L = 0.5 * (A + M)
        R = 0.5 * (M + B)
        vals = fun(np.concatenate([L, R]))
        fl, fr = vals[:len(A)], vals[len(A):]
        nxt = []
        for k, (a0, b0, f0, f1, f2, whole, eps) in enumerate(pending):
            m0 = M[k]
            left = (m0 - a0) / 6.0 * (f0 + 4 * fl[k] + f1)
            right = (b0 - m0) / 6.0 * (f1 + 4 * fr[k] + f2)
            delta = left + right - whole
            if abs(delta) <= 15.0 * eps or depth >= max_depth or not np.isfinite(delta):
                total += left + right + delta / 15.0
            else:
                nxt.append((a0, m0, f0, fl[k], f1, left, 0.5 * eps))
                nxt.append((m0, b0, f1, fr[k], f2, right, 0.5 * eps))
        pending = nxt
    return float(total)


def line_integral(p_field, q_field, path, tol=1e-10):
    """Integrate the 1-form ``p dx1 + q dx2`` along a polyline.

    ``path`` is a sequence of (x1, x2) vertices.  Each segment uses adaptive
    Simpson with its share of the absolute tolerance.
    """
    pts = np.asarray(path, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2 or len(pts) < 2:
        raise ValueError("path must be a sequence of at least two (x1, x2) points")
    p_field, q_field = as_field(p_field), as_field(q_field)
    for fld in (p_field, q_field):
        if fld.chart is not None:
            fld.chart.require(pts[:, 0], pts[:, 1])
    seg_tol = tol / (len(pts) - 1)
    total = 0.0
    for P0, P1 in zip(pts[:-1], pts[1:]):
        d = P1 - P0

        def integrand(s, P0=P0, d=d):
            x1 = P0[0] + s * d[0]
            x2 = P0[1] + s * d[1]
            return p_field._vp(x1, x2)[0] * d[0] + q_field._vp(x1, x2)[0] * d[1]

        total += _simpson_adaptive(integrand, 0.0, 1.0, seg_tol)
    return total


# Gauss-Legendre nodes for cumulative integrals along grid lines.
_GL_X, _GL_W = np.polynomial.legendre.leggauss(6)


def cumulative_integral(fun, nodes, ref):
    """Integrals of ``fun`` from ``ref`` to each entry of sorted ``nodes``.

    ``fun`` maps a 1-D array of abscissae of length k to values of shape
    (..., k); leading axes let several parallel lines share one call.
    Six-point Gauss-Legendre per node interval, accumulated outward from
    ``ref`` so a NaN only spoils the nodes beyond it.
    """
    nodes = np.asarray(nodes, dtype=float)
    a, b = nodes[:-1], nodes[1:]
    mid, half = 0.5 * (a + b), 0.5 * (b - a)
    xs = mid[:, None] + half[:, None] * _GL_X[None, :]
    vals = np.asarray(fun(xs.ravel()))
    vals = vals.reshape(vals.shape[:-1] + xs.shape)
    seg = (vals * _GL_W).sum(axis=-1) * half

    def partial(lo, hi):
        m, hw = 0.5 * (lo + hi), 0.5 * (hi - lo)
        return (np.asarray(fun(m + hw * _GL_X)) * _GL_W).sum(axis=-1) * hw

    # ref lies in [nodes[k], nodes[k+1]]
    k = int(np.clip(np.searchsorted(nodes, ref) - 1, 0, len(nodes) - 2))
    out = np.empty(seg.shape[:-1] + (len(nodes),))
    out[..., k] = -partial(nodes[k], ref)
    out[..., k + 1] = partial(ref, nodes[k + 1])
    if k + 2 < len(nodes):
        out[..., k + 2:] = out[..., k + 1, None] + np.cumsum(seg[..., k + 1:], axis=-1)
    if k > 0:
        left = np.cumsum(seg[..., :k][..., ::-1], axis=-1)[..., ::-1]
        out[..., :k] = out[..., k, None] - left
    return out
