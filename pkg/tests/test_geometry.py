import numpy as np
import pytest
import sympy as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from underact.errors import DegenerateMetric
from underact.fields import AnalyticField, Chart, ConstantField
from underact.geometry import System2DOF, TangentState, inverse_2x2


def _sympy_brackets(g12, g22):
    x1, x2 = sp.symbols("x1 x2")
    g = sp.Matrix([[1, g12], [g12, g22]])
    X = (x1, x2)
    return {(i, j, k): sp.Rational(1, 2) * (sp.diff(g[i, k], X[j]) + sp.diff(g[j, k], X[i])
                                            - sp.diff(g[i, j], X[k]))
            for i in range(2) for j in range(2) for k in range(2)}, X


def _coupled_system():
    chart = Chart(-2, 2, -2, 2, 11, 11)
    g12 = AnalyticField(lambda a, b: 0.3 * np.sin(a + 2 * b), lambda a, b: 0.3 * np.cos(a + 2 * b),
                        lambda a, b: 0.6 * np.cos(a + 2 * b), chart)
    g22 = AnalyticField(lambda a, b: 2 + a * a * b, lambda a, b: 2 * a * b, lambda a, b: a * a + 0 * b,
                        chart)
    V = AnalyticField(lambda a, b: a * a - np.cos(b), lambda a, b: 2 * a + 0 * b,
                      lambda a, b: np.sin(b) + 0 * a, chart)
    return System2DOF(g12=g12, g22=g22, V=V, chart=chart)


@settings(max_examples=20, deadline=None)
@given(st.floats(-1, 1), st.floats(-1, 1))
def test_brackets_match_symbolic(a, b):
    sys = _coupled_system()
    x1, x2 = sp.symbols("x1 x2")
    br, X = _sympy_brackets(sp.Rational(3, 10) * sp.sin(x1 + 2 * x2), 2 + x1 ** 2 * x2)
    for (i, j, k), expr in br.items():
        want = float(expr.subs({X[0]: a, X[1]: b}))
        assert sys.christoffel_bracket(i + 1, j + 1, k + 1, a, b) == pytest.approx(want, abs=1e-13)


@settings(max_examples=20, deadline=None)
@given(st.floats(-1, 1), st.floats(-1, 1), st.floats(-2, 2), st.floats(-2, 2), st.floats(-3, 3))
def test_accelerations_satisfy_equations_of_motion(a, b, v1, v2, u):
    sys = _coupled_system()
    acc = np.array(sys.accelerations((a, b, v1, v2), u))
    G = sys.metric_matrix(a, b)
    v = np.array([v1, v2])
    force = np.array([sum(sys.christoffel_bracket(i, j, k, a, b) * v[i - 1] * v[j - 1]
                          for i in (1, 2) for j in (1, 2)) for k in (1, 2)])
    _, V1, V2 = sys.V.value_and_partials(a, b)
    lhs = G @ acc + force + np.array([V1, V2]) - np.array([0.0, u])
    np.testing.assert_allclose(lhs, 0.0, atol=1e-12)


def test_energy_and_inverse():
    sys = _coupled_system()
    s = TangentState(0.3, -0.2, 1.0, -0.5)
    G = sys.metric_matrix(0.3, -0.2)
    v = np.array([1.0, -0.5])
    assert sys.total_energy(s) == pytest.approx(0.5 * v @ G @ v + sys.V(0.3, -0.2))
    np.testing.assert_allclose(sys.metric_inverse(0.3, -0.2) @ G, np.eye(2), atol=1e-14)


def test_degenerate_metric():
    chart = Chart(-1, 1, -1, 1, 5, 5)
    sys = System2DOF(g12=ConstantField(1.0), g22=ConstantField(1.0), V=ConstantField(0.0),
                     chart=chart)
    with pytest.raises(DegenerateMetric):
        sys.metric_det(0.0, 0.0)
    with pytest.raises(DegenerateMetric):
        inverse_2x2(1.0, 1.0, 1.0)
    inverse_2x2(1.0, 2.0, 1.0, definite=False)  # indefinite but invertible
