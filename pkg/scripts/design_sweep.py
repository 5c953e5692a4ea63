"""Sweep the design parameter sigma0 and report the linearized germ and settling time.

Designs with sigma vanishing on the reference line (sigma0 = b) are reported
as failures.
"""
import argparse

import numpy as np

from underact.analysis import ClosedLoopFlow, estimate_normal_range, settling_time
from underact.control import ControlLaw
from underact.errors import UnderactError
from underact.linearize import linearize_closed_loop
from underact.matching import synthesize_analytic
from underact.presets import get_preset, pendulum_cart, pendulum_design


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--sigma0", default="0.1,0.25,0.4")
    ap.add_argument("--threads", type=int, default=4)
    args = ap.parse_args()
    p = get_preset("pendulum_cart")
    sys = pendulum_cart(0.5)
    S = np.vstack([np.zeros(4), p.regions["N0"].grid([2, 2, 2, 2])])
    for s0 in map(float, args.sigma0.split(",")):
        try:
            ms = synthesize_analytic(sys, pendulum_design(0.5, sigma0=s0))
            law = ControlLaw(sys, ms)
            germ = linearize_closed_loop(law)
            flow = ClosedLoopFlow(law, p.analysis_settings)
            nr = estimate_normal_range(flow, p.regions["O"], S, p.t_horizon, p.regions["D"],
                                       threads=args.threads)
            T = settling_time(flow, S[nr.member], p.regions["D"], p.t_horizon,
                              threads=args.threads).T if nr.member.any() else float("nan")
            print(f"sigma0={s0:5.2f} gains={np.round(germ.gains.as_array(), 3)} "
                  f"max Re={germ.eigenvalues.real.max():.3f} members={nr.counts['members']}/{len(S)} T={T:.2f}")
        except UnderactError as exc:
            print(f"sigma0={s0:5.2f} failed: {exc}")


if __name__ == "__main__":
    main()
