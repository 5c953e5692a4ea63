import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from underact.errors import BadParameter
from underact.matching import synthesize
from underact.presets import PRESETS, flat_block, flat_block_closed_form, get_preset, pendulum_cart


def test_pendulum_metric_and_potential():
    sys = pendulum_cart(0.5)
    assert sys.g12(np.pi / 3, 1.234) == pytest.approx(0.25, abs=1e-15)
    assert sys.V(0.0, 0.0) == 1.0
    assert sys.V._vp(np.pi / 2, 0.0)[0] == pytest.approx(0.0, abs=1e-15)  # outside the default chart
    c = sys.chart
    assert (c.x1_min, c.x1_max, c.x2_min, c.x2_max) == (-1.5, 1.5, -5.0, 5.0)


@settings(max_examples=30, deadline=None)
@given(st.floats(-1.4, 1.4), st.floats(-4, 4), st.floats(-2, 2), st.floats(-2, 2),
       st.floats(-3, 3), st.floats(0.05, 0.95))
def test_pendulum_equations_of_motion(th, x, w, v, u, b):
    sys = pendulum_cart(b)
    a_th, a_x = sys.accelerations((th, x, w, v), u)
    r1 = a_th + b * np.cos(th) * a_x - np.sin(th)
    r2 = b * np.cos(th) * a_th + a_x - b * np.sin(th) * w * w - u
    assert abs(r1) <= 1e-12 and abs(r2) <= 1e-12


@pytest.mark.parametrize("b", [0.0, 1.0, -0.2, 1.5])
def test_pendulum_rejects_b(b):
    with pytest.raises(BadParameter):
        pendulum_cart(b)


def test_flat_block_closed_forms():
    _, _, ms = flat_block_closed_form(2.0, 1.0)
    G = [[ms.ghat11(0, 0), ms.ghat12(0, 0)], [ms.ghat12(0, 0), ms.ghat22(0, 0)]]
    np.testing.assert_allclose(G, [[4.0, -1.5], [-1.5, 0.75]], atol=1e-15)
    assert ms.Vhat(0.3, 1.0) == pytest.approx(0.5 * (1.0 - 0.6) ** 2)
    with pytest.raises(BadParameter):
        flat_block(0.0, 1.0)


def test_flat_block_identity_member_is_degenerate():
    # (m, s) = (1, 1): ghat11 = 1 but ghat22 = 0, so ghat is singular, not g
    _, _, ms = flat_block_closed_form(1.0, 1.0)
    assert ms.ghat11(0, 0) == 1.0 and ms.ghat12(0, 0) == 0.0 and ms.ghat22(0, 0) == 0.0


@pytest.mark.parametrize("name", PRESETS)
def test_presets_pass_residual_suite(name):
    p = get_preset(name)
    sys = p.system(p.system().chart.with_counts(61, 61))
    ms = synthesize(sys, p.design())
    d = ms.diagnostics
    tol = 1e-9 if name == "flat_block" else 1e-2
    assert max(d["transport"].values()) <= tol
    assert d["reconstruction"] <= 1e-8
    assert d["matching_residual"] <= tol


def test_get_preset_errors():
    with pytest.raises(BadParameter):
        get_preset("rotor_arm")
    with pytest.raises(BadParameter):
        get_preset("pendulum_cart", mass=2)
