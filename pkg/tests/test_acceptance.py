"""Acceptance criteria 1-12, one PASS/FAIL line each.

The lines are printed in the terminal summary of the pytest run (see
conftest.py) and also when the file is executed directly.
"""
import os

import numpy as np
import pytest
import sympy as sp
from scipy.integrate import quad_vec
from scipy.linalg import expm
from scipy.optimize import linear_sum_assignment
from scipy.stats import qmc

from underact.analysis import (ClosedLoopFlow, FunctionFlow, Region, estimate_normal_range,
                               settling_time)
from underact.cli import run, synthesize_from_config
from underact.config import load_config
from underact.control import ControlLaw
from underact.diagnostics import (matching_residual, reconstruction_residual,
                                  synthesis_report, transport_residuals)
from underact.fields import Chart
from underact.linearize import (char_poly, discrepancy_report, linearize_open_loop,
                                lyapunov_residual, pendulum_cart_linearization,
                                pole_place_pendulum, solve_lyapunov, stabilizability_test,
                                two_oscillator_example)
from underact.matching import _probe_rectangles, loop_integral, synthesize
from underact.presets import get_preset, pendulum_cart
from underact.simulate import (SimSettings, closed_loop, energy_decay_check, integrate,
                               matched, max_state_gap, open_loop)
from underact.snapshot import read_json

RESULTS = {}
S0 = (0.2, 0.0, 0.1, -0.1)


def report(n, title, ok, detail):
    RESULTS[n] = f"criterion {n:2d} {'PASS' if ok else 'FAIL'}  {title}: {detail}"
    assert ok, RESULTS[n]


@pytest.fixture(scope="module")
def gridded_fine(pendulum, design):
    return synthesize(pendulum, design, chart=pendulum.chart.with_counts(481, 481))


def test_criterion_01_matching_residual(flat, pendulum, gridded, gridded_fine):
    sys, _, ms = flat
    r_flat = matching_residual(sys, ms, n=1000)["matching_residual"]
    r241 = matching_residual(pendulum, gridded, n=1000)["matching_residual"]
    r481 = matching_residual(pendulum, gridded_fine, n=1000)["matching_residual"]
    ok = r_flat <= 1e-10 and r241 <= 1e-4 and r481 <= 0.5 * r241
    report(1, "matching residual", ok,
           f"flat {r_flat:.2e} (<=1e-10), pendulum 241 {r241:.2e} (<=1e-4), "
           f"481 {r481:.2e} (ratio {r481 / r241:.3f} <= 0.5)")


def _runs(law, ms, sys, settings=None):
    t = np.linspace(0, 10, 1001)
    cl = integrate(closed_loop(law), S0, 10.0, settings, t_eval=t)
    mt = integrate(matched(sys, ms), S0, 10.0, settings, t_eval=t)
    return cl, mt


def test_criterion_02_trajectory_equivalence(pendulum, analytic, gridded, analytic_law,
                                             gridded_law):
    cla, mta = _runs(analytic_law, analytic, pendulum)
    clg, mtg = _runs(gridded_law, gridded, pendulum)
    ga, gg = max_state_gap(cla, mta), max_state_gap(clg, mtg)
    done = all(tr.termination == "completed" for tr in (cla, mta, clg, mtg))
    report(2, "trajectory equivalence", done and ga <= 1e-6 and gg <= 1e-3,
           f"analytic {ga:.2e} (<=1e-6), gridded {gg:.2e} (<=1e-3)")


def test_criterion_03_energy_law(pendulum, analytic, gridded, gridded_fine, analytic_law,
                                 gridded_law):
    # on a grid the closed-loop and matched accelerations differ by the matching
    # residual, so the mismatch scales with speed times grid error; the faster
    # states are gated on the refined grid
    t = np.linspace(0, 10, 1001)
    states = [S0, (-0.3, 1.0, 0.2, 0.5), (0.1, -2.0, -0.4, 0.0)]
    fine_law = ControlLaw(pendulum, gridded_fine)
    cases = [("analytic", analytic_law, analytic, states),
             ("grid 241", gridded_law, gridded, states[:1]),
             ("grid 481", fine_law, gridded_fine, states)]
    parts, ok = [], True
    for name, law, ms, ss in cases:
        mis, rate = 0.0, -np.inf
        for s0 in ss:
            tr = integrate(closed_loop(law), s0, 10.0, t_eval=t)
            rep = energy_decay_check(tr, ms)
            ok &= tr.termination == "completed"
            mis, rate = max(mis, rep.max_mismatch), max(rate, rep.max_rate)
        ok &= mis <= 1e-6 and rate <= 1e-8
        parts.append(f"{name} ({len(ss)} runs) mismatch {mis:.1e} rate {rate:.1e}")
    report(3, "energy law", ok, "; ".join(parts) + " (mismatch <=1e-6, rate <=1e-8)")


def test_criterion_04_sigma_path_independence(pendulum, gridded):
    rects = _probe_rectangles(pendulum.chart, gridded.lam.mu, 100, seed=7)
    worst = max(abs(loop_integral(pendulum, gridded.lam.mu, r)) for r in rects)
    report(4, "sigma path independence", len(rects) == 100 and worst <= 1e-8,
           f"{len(rects)} rectangles, max loop integral {worst:.2e} (<=1e-8)")


def test_criterion_05_transport_residuals(pendulum, gridded, gridded_fine):
    base = transport_residuals(pendulum, gridded)
    fine = transport_residuals(pendulum, gridded_fine)
    small = all(v <= 1e-5 for v in base.values())
    down = all(fine[k] < base[k] or base[k] == fine[k] == 0.0 for k in base)
    report(5, "transport residuals", small and down,
           ", ".join(f"{k} {base[k]:.1e}->{fine[k]:.1e}" for k in base) + " (<=1e-5, decreasing)")


def test_criterion_06_reconstruction(pendulum, gridded, analytic):
    rg = reconstruction_residual(pendulum, gridded)
    ra = reconstruction_residual(pendulum, analytic)
    report(6, "reconstruction", max(rg, ra) <= 1e-8,
           f"gridded {rg:.2e}, analytic {ra:.2e} (<=1e-8)")


def _random_targets(rng):
    # conjugate-closed, stable, well separated quadruples
    kind = rng.integers(3)
    if kind == 0:
        re = -rng.uniform(0.5, 3.0, 4)
        while np.min(np.diff(np.sort(re))) < 0.1:
            re = -rng.uniform(0.5, 3.0, 4)
        return re.astype(complex)
    if kind == 1:
        z = complex(-rng.uniform(0.5, 3), rng.uniform(0.3, 2))
        return np.array([z, z.conjugate(), -rng.uniform(0.5, 1.5), -rng.uniform(1.7, 3.0)])
    z = complex(-rng.uniform(0.5, 1.5), rng.uniform(0.3, 2))
    w = complex(-rng.uniform(1.7, 3.0), rng.uniform(0.3, 2))
    return np.array([z, z.conjugate(), w, w.conjugate()])


def test_criterion_07_pole_placement():
    rng = np.random.default_rng(2024)
    worst = 0.0
    for b in (0.2, 0.5, 0.8):
        for _ in range(50):
            target = _random_targets(rng)
            k = pole_place_pendulum(b, target)
            ev = np.linalg.eigvals(pendulum_cart_linearization(b, k))
            cost = np.abs(ev[:, None] - target[None, :])
            i, j = linear_sum_assignment(cost)
            worst = max(worst, float(cost[i, j].max()))
    b, a1, a2, a3, a4, lam = sp.symbols("b a1 a2 a3 a4 lambda")
    M = sp.Matrix([[1, b], [b, 1]]).inv()
    A = sp.zeros(4, 4)
    A[0, 2] = A[1, 3] = 1
    A[2:, :2] = M * sp.Matrix([[1, 0], [0, 0]])
    Bc = sp.zeros(4, 1)
    Bc[2:, 0] = M * sp.Matrix([0, 1])
    p = sp.Poly((lam * sp.eye(4) - (A + Bc * sp.Matrix([[a1, a2, a3, a4]]))).det(), lam)
    lam3 = sp.simplify(p.all_coeffs()[1] - (a3 * b - a4) / (1 - b ** 2)) == 0
    rep = discrepancy_report(0.5)
    flagged = [c["term"] for c in rep["char_poly"] if not c["agree"]]
    report(7, "pole placement", worst <= 1e-7 and lam3 and bool(flagged),
           f"max spectrum error {worst:.2e} over 150 targets (<=1e-7), lambda^3 symbolic "
           f"{'equal' if lam3 else 'differs'}, discrepancies reported for {', '.join(flagged)}")


def test_criterion_08_stabilizability():
    two = stabilizability_test(two_oscillator_example())
    pend = stabilizability_test(linearize_open_loop(pendulum_cart(0.5)))
    ok = (not two.stabilizable) and abs(two.certificate - 1.0) < 1e-12 and pend.stabilizable
    report(8, "stabilizability", ok,
           f"two oscillators stabilizable={two.stabilizable} s={two.certificate:g}, "
           f"pendulum cart stabilizable={pend.stabilizable}")


def test_criterion_09_lyapunov():
    rng = np.random.default_rng(99)
    worst4 = 0.0
    for _ in range(50):
        A = rng.normal(size=(4, 4))
        A -= (np.max(np.linalg.eigvals(A).real) + rng.uniform(0.1, 1.0)) * np.eye(4)
        Q = rng.normal(size=(4, 4))
        D = -(Q @ Q.T + 0.1 * np.eye(4))
        worst4 = max(worst4, lyapunov_residual(A, solve_lyapunov(A, D), D))
    worst2 = 0.0
    for _ in range(10):
        A = rng.normal(size=(2, 2))
        A -= (np.max(np.linalg.eigvals(A).real) + rng.uniform(0.3, 1.0)) * np.eye(2)
        D = -np.diag(rng.uniform(0.5, 2.0, 2))
        Q, _ = quad_vec(lambda t: expm(A.T * t) @ D @ expm(A * t), 0, np.inf, epsabs=1e-12)
        worst2 = max(worst2, float(np.max(np.abs(solve_lyapunov(A, D) + Q))))
    report(9, "Lyapunov solve", worst4 <= 1e-10 and worst2 <= 1e-6,
           f"4x4 residual {worst4:.2e} (<=1e-10), 2x2 vs quadrature {worst2:.2e} (<=1e-6)")


def test_criterion_10_settling_time(analytic_law):
    flow = FunctionFlow(lambda x: -x, 1)
    Tc = settling_time(flow, Region.box([0], [1]).grid([41]), Region.box([0], [0.02]), 10.0).T
    p = get_preset("pendulum_cart")
    pf = ClosedLoopFlow(analytic_law, p.analysis_settings)
    O, D, N0 = p.regions["O"], p.regions["D"], p.regions["N0"]
    base = np.vstack([np.zeros(4), N0.grid([2, 2, 2, 2])])
    extra = qmc.scale(qmc.Sobol(4, seed=3).random(16), np.subtract(N0.center, N0.extents),
                      np.add(N0.center, N0.extents))
    Ts = []
    for S in (base, np.vstack([base, extra])):
        nr = estimate_normal_range(pf, O, S, p.t_horizon, D, threads=4, keep_paths=True)
        Ts.append(settling_time(pf, S[nr.member], D, p.t_horizon,
                                paths=[q for q, m in zip(nr.paths, nr.member) if m]).T)
    rel = abs(Ts[1] - Ts[0]) / Ts[0]
    okc = abs(Tc - np.log(50)) <= 0.01 * np.log(50)
    report(10, "settling time", okc and np.isfinite(Ts).all() and rel <= 0.1,
           f"contraction {Tc:.4f} vs ln 50 = {np.log(50):.4f}; pendulum {Ts[0]:.3f} s "
           f"({len(base)} samples) vs {Ts[1]:.3f} s ({len(base) + 16}), change {100 * rel:.1f}% (<=10%)")


def test_criterion_11_conservation():
    sys = pendulum_cart(0.5, Chart(-7, 7, -60, 60, 11, 11))
    tr = integrate(open_loop(sys), (0.3, 0.0, 0.0, 0.0), 10.0, SimSettings(rtol=1e-12, atol=1e-12))
    E = np.array([sys.total_energy(s) for s in tr.states])
    drift = float(np.max(np.abs(E - E[0])))
    report(11, "conservation", tr.termination == "completed" and drift <= 1e-8,
           f"open-loop energy drift {drift:.2e} over 10 s (<=1e-8)")


CLI_CONFIG = """
[system]
preset = pendulum_cart
b = 0.5
[grid]
n1 = 121
n2 = 121
[matching]
route = grid
w = 0.15*y^2
[simulate]
t_final = 2
dt = 0.02
initial_states = 0.2, 0, 0.1, -0.1
"""


def test_criterion_12_cli_round_trip(tmp_path):
    path = tmp_path / "c.ini"
    path.write_text(CLI_CONFIG)
    out = str(tmp_path / "out")
    codes = run("design", str(path), out), run("verify", str(path), out)
    rep = read_json(os.path.join(out, "verify.json"))
    cfg = load_config(str(path))
    sys, _, ms = synthesize_from_config(cfg)
    want = synthesis_report(sys, ms, cfg.matching.samples, 0)
    got = rep["residuals"]
    flat_want = _flatten(want)
    flat_got = _flatten(got)
    gap = max(abs(flat_got[k] - flat_want[k]) for k in flat_want)
    ok = codes == (0, 0) and rep["matched_source"] == "snapshot" and gap <= 1e-12
    report(12, "CLI round trip", ok,
           f"exit codes {codes}, source {rep['matched_source']}, "
           f"max residual difference {gap:.1e} over {len(flat_want)} entries (<=1e-12)")


def _flatten(d, prefix=""):
    out = {}
    for k, v in d.items():
        if isinstance(v, dict):
            out.update(_flatten(v, f"{prefix}{k}."))
        elif isinstance(v, (bool, np.bool_)):
            out[prefix + k] = float(v)
        elif isinstance(v, (int, float, np.floating)):
            out[prefix + k] = float(v)
    return out


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-q"]))
