"""Quadratic decay of the constraint violation inside phase two.

The constraint step is started off the circle at several distances. The
ratio |h(k+1)| / |h(k)|^2 stays bounded, so the order fitted over the
resolved values is close to two.
"""

import numpy as np

from npasa import SolverConfig, constraint_step, corpus, fit_convergence_order


def main():
    p = corpus()["circle-interior"].problem
    for h0 in (0.05, 0.1, 0.2):
        w0 = np.sqrt(2.0 + h0) * np.array([np.cos(0.6), np.sin(0.6)])
        trace = constraint_step(p, w0, np.zeros(1), np.zeros(p.m), SolverConfig(), target=1e-24)
        h = np.array(trace.h_norms)
        fit = fit_convergence_order(h[h > 1e-12])
        print(f"|h0| = {h0}: " + " ".join(f"{v:.2e}" for v in h) + f"  order {fit.order:.2f}")


if __name__ == "__main__":
    main()
