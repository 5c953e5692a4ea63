"""Grid refinement study of the gridded pendulum-cart synthesis.

Prints the matching residual, transport residuals and the trajectory gap to
the analytic route for a sequence of grid sizes.
"""
import argparse

import numpy as np

from underact.control import ControlLaw
from underact.diagnostics import matching_residual, transport_residuals
from underact.matching import synthesize, synthesize_analytic
from underact.presets import pendulum_cart, pendulum_design
from underact.simulate import closed_loop, integrate, max_state_gap


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--sizes", default="61,121,241,481")
    args = ap.parse_args()
    sys, d = pendulum_cart(0.5), pendulum_design(0.5)
    ref = integrate(closed_loop(ControlLaw(sys, synthesize_analytic(sys, d))),
                    (0.2, 0, 0.1, -0.1), 10.0, t_eval=np.linspace(0, 10, 1001))
    print(f"{'n':>5} {'matching':>10} {'character.':>10} {'ghat11':>10} {'Vhat':>10} {'gap':>10}")
    for n in map(int, args.sizes.split(",")):
        ms = synthesize(sys, d, chart=sys.chart.with_counts(n, n))
        tr = transport_residuals(sys, ms)
        mr = matching_residual(sys, ms)["matching_residual"]
        cl = integrate(closed_loop(ControlLaw(sys, ms)), (0.2, 0, 0.1, -0.1), 10.0,
                       t_eval=np.linspace(0, 10, 1001))
        print(f"{n:5d} {mr:10.2e} {tr['characteristic']:10.2e} {tr['ghat11_pde']:10.2e} "
              f"{tr['Vhat_equation']:10.2e} {max_state_gap(cl, ref):10.2e}")


if __name__ == "__main__":
    main()
