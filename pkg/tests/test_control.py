import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from underact.control import ControlLaw, energy_rate, matched_energy
from underact.diagnostics import sample_states
from underact.errors import OutOfRegion
from underact.geometry import open_loop_accelerations

state = st.tuples(st.floats(-0.5, 0.5), st.floats(-4, 4), st.floats(-2, 2), st.floats(-2, 2))


def test_flat_block_matching_identity(flat, rng):
    sys, _, ms = flat
    law = ControlLaw(sys, ms)
    S = np.column_stack([rng.uniform(-2, 2, (1000, 2)), rng.uniform(-3, 3, (1000, 2))])
    _, _, _, rg, rV, rc = law.batch_terms(*S.T)
    assert np.max(np.abs(rg + rV + rc)) <= 1e-10


@settings(max_examples=40, deadline=None)
@given(state)
def test_closed_loop_equals_matched_system(analytic_law, s):
    a_cl = analytic_law.closed_loop_accelerations(s)[:2]  # (a1, a2, u)
    a_m = analytic_law.matched_accelerations(s)
    np.testing.assert_allclose(a_cl, a_m, atol=1e-9)


@settings(max_examples=40, deadline=None)
@given(state)
def test_control_splits_into_three_terms(analytic_law, s):
    t = analytic_law.terms(s)
    assert t.u == pytest.approx(t.u_g + t.u_V + t.u_c, abs=1e-15)
    assert abs(t.residual) <= 1e-9


@settings(max_examples=40, deadline=None)
@given(state)
def test_energy_decays_at_dissipation_rate(analytic_law, s):
    a = analytic_law.closed_loop_accelerations(s)
    rate = analytic_law.Hhat_rate(s, a)
    assert rate == pytest.approx(-analytic_law.dissipation_rate(s), abs=1e-9)
    assert rate <= 1e-10  # damping injection: rate = -k zeta^2


def test_zero_velocity_has_no_velocity_terms(analytic_law):
    t = analytic_law.terms((0.2, 0.5, 0.0, 0.0))
    assert t.u_g == 0.0 and t.u_c == 0.0


def test_equilibrium_needs_no_force(analytic_law, gridded_law):
    assert analytic_law.control_input((0, 0, 0, 0)) == pytest.approx(0.0, abs=1e-12)
    assert gridded_law.control_input((0, 0, 0, 0)) == pytest.approx(0.0, abs=1e-6)


def test_out_of_region(gridded_law):
    with pytest.raises(OutOfRegion):
        gridded_law.control_input((1.49, 4.99, 0, 0))


def test_verify_matching_report(gridded_law, gridded):
    rep = gridded_law.verify_matching(sample_states(gridded, 100, seed=3))
    assert rep.max_residual <= 1e-4
    assert rep.max_u_gap <= 1e-10
    assert rep.n_samples == 100


def test_vectorised_energy_helpers(analytic, analytic_law, rng):
    S = sample_states(analytic, 20, seed=1)
    H = matched_energy(analytic, *S.T)
    for s, h in zip(S, H):
        assert analytic_law.Hhat(s) == pytest.approx(h, rel=1e-14)
    a = np.array([analytic_law.closed_loop_accelerations(s) for s in S])
    r = energy_rate(analytic, *S.T, a[:, 0], a[:, 1])
    assert np.allclose(r, [analytic_law.Hhat_rate(s, ai) for s, ai in zip(S, a)])


def test_open_loop_force_is_u(pendulum, analytic_law):
    s = (0.1, 0.2, 0.3, -0.4)
    u = analytic_law.control_input(s)
    a = np.array(open_loop_accelerations(pendulum, *s, u), dtype=float)
    G = pendulum.metric_matrix(0.1, 0.2)
    a0 = np.array(open_loop_accelerations(pendulum, *s, 0.0), dtype=float)
    np.testing.assert_allclose(G @ (a - a0), [0.0, u], atol=1e-12)
