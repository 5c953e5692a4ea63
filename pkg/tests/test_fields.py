import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from underact.errors import OutOfChart
from underact.fields import (AnalyticField, Chart, ConstantField, GridField,
                             cumulative_integral, line_integral)

CHART = Chart(-1.0, 2.0, -1.5, 1.0, 31, 27)


def _bicubic(c):
    def f(a, b):
        return sum(c[i, j] * a ** i * b ** j for i in range(4) for j in range(4))

    def f1(a, b):
        return sum(i * c[i, j] * a ** (i - 1) * b ** j for i in range(1, 4) for j in range(4))

    def f2(a, b):
        return sum(j * c[i, j] * a ** i * b ** (j - 1) for i in range(4) for j in range(1, 4))
    return f, f1, f2


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(-2, 2), min_size=16, max_size=16),
       st.floats(-1.0, 2.0), st.floats(-1.5, 1.0))
def test_grid_field_reproduces_bicubics(coefs, a, b):
    f, f1, f2 = _bicubic(np.array(coefs).reshape(4, 4))
    X1, X2 = CHART.mesh()
    g = GridField(CHART, f(X1, X2))
    v, d1, d2 = g.value_and_partials(a, b)
    assert v == pytest.approx(f(a, b), abs=1e-10)
    assert d1 == pytest.approx(f1(a, b), abs=1e-9)
    assert d2 == pytest.approx(f2(a, b), abs=1e-9)


def test_grid_field_converges_at_fourth_order():
    f = lambda a, b: np.sin(2 * a) * np.cos(b)  # noqa: E731
    pts = (np.array([0.123, 1.7, -0.6]), np.array([0.31, -1.2, 0.77]))
    errs = []
    for n in (21, 41, 81):
        c = Chart(-1.0, 2.0, -1.5, 1.0, n, n)
        X1, X2 = c.mesh()
        errs.append(np.max(np.abs(GridField(c, f(X1, X2))(*pts) - f(*pts))))
    assert errs[0] / errs[1] > 10 and errs[1] / errs[2] > 10


def test_nan_nodes_poison_only_touching_cells():
    X1, X2 = CHART.mesh()
    vals = X1 + X2
    vals[10, 10] = np.nan
    g = GridField(CHART, vals)
    assert np.isnan(g(CHART.nodes1[10] + 0.01, CHART.nodes2[10] + 0.01))
    assert g(0.0 + CHART.nodes1[20], CHART.nodes2[20]) == pytest.approx(
        CHART.nodes1[20] + CHART.nodes2[20])
    assert not g.cell_finite(CHART.nodes1[10] - 0.01, CHART.nodes2[10] - 0.01)


def test_chart_checks():
    with pytest.raises(OutOfChart):
        ConstantField(1.0, chart=CHART)(5.0, 0.0)
    with pytest.raises(ValueError):
        Chart(1, 0, 0, 1)
    r = CHART.refined()
    assert (r.n1, r.n2) == (61, 53) and r.h1 == pytest.approx(CHART.h1 / 2)


def test_field_algebra_partials():
    a = AnalyticField(lambda x, y: x * y, lambda x, y: y, lambda x, y: x)
    b = AnalyticField(lambda x, y: np.sin(x), lambda x, y: np.cos(x), lambda x, y: 0 * y)
    h = (a * b + 2.0) / (1.0 + a * a) - b
    x, y, eps = 0.4, -0.7, 1e-6
    d1 = (h(x + eps, y) - h(x - eps, y)) / (2 * eps)
    d2 = (h(x, y + eps) - h(x, y - eps)) / (2 * eps)
    got = h.partials(x, y)
    assert got[0] == pytest.approx(d1, abs=1e-8) and got[1] == pytest.approx(d2, abs=1e-8)


@settings(max_examples=20, deadline=None)
@given(st.lists(st.tuples(st.floats(-1, 2), st.floats(-1.5, 1)), min_size=2, max_size=6))
def test_exact_form_line_integral_is_potential_difference(path):
    # d(phi) with phi = sin(x1) x2^2
    nil = lambda a, b: 0 * a  # noqa: E731 - partials unused here
    p = AnalyticField(lambda a, b: np.cos(a) * b * b, nil, nil)
    q = AnalyticField(lambda a, b: 2 * np.sin(a) * b, nil, nil)
    phi = lambda a, b: np.sin(a) * b * b  # noqa: E731
    got = line_integral(p, q, path, tol=1e-12)
    assert got == pytest.approx(phi(*path[-1]) - phi(*path[0]), abs=1e-10)


def test_cumulative_integral():
    nodes = np.linspace(-1, 2, 31)
    got = cumulative_integral(np.exp, nodes, 0.37)
    np.testing.assert_allclose(got, np.exp(nodes) - np.exp(0.37), atol=1e-13)
