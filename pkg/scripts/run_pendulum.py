"""Synthesize the pendulum-cart matched system and simulate one closed-loop run.

    python3 scripts/run_pendulum.py [--route grid|analytic] [--n 241]
"""
import argparse
import time

import numpy as np

from underact.control import ControlLaw
from underact.linearize import linearize_closed_loop
from underact.matching import synthesize, synthesize_analytic
from underact.presets import pendulum_cart, pendulum_design
from underact.simulate import closed_loop, energy_decay_check, integrate, matched, max_state_gap


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--route", choices=("grid", "analytic"), default="grid")
    ap.add_argument("--n", type=int, default=241)
    ap.add_argument("--b", type=float, default=0.5)
    ap.add_argument("--t", type=float, default=10.0)
    args = ap.parse_args()

    sys = pendulum_cart(args.b)
    d = pendulum_design(args.b)
    t0 = time.perf_counter()
    if args.route == "grid":
        ms = synthesize(sys, d, chart=sys.chart.with_counts(args.n, args.n))
    else:
        ms = synthesize_analytic(sys, d)
    print(f"synthesis ({args.route}) {time.perf_counter() - t0:.1f} s")
    for k, v in ms.diagnostics.items():
        print(f"  {k}: {v}")

    law = ControlLaw(sys, ms)
    germ = linearize_closed_loop(law)
    print("germ gains", np.round(germ.gains.as_array(), 4), "stable", germ.stable)

    s0 = (0.2, 0.0, 0.1, -0.1)
    t = np.linspace(0, args.t, int(100 * args.t) + 1)
    cl = integrate(closed_loop(law), s0, args.t, t_eval=t)
    mt = integrate(matched(sys, ms), s0, args.t, t_eval=t)
    rep = energy_decay_check(cl, ms)
    print(f"closed loop: {cl.termination}, final state {np.round(cl.states[-1], 5)}")
    print(f"gap to matched system {max_state_gap(cl, mt):.2e}")
    print(f"energy law mismatch {rep.max_mismatch:.2e}, max dHhat/dt {rep.max_rate:.2e}")


if __name__ == "__main__":
    main()
