"""Solve the four built-in problems and show how the phases alternate.

Each problem starts from its listed starting point. The log shows phase one
(augmented Lagrangian) handing over to phase two (local Newton-type steps)
once the estimators agree that the iterate is close to a solution.
"""

import numpy as np

from npasa import SolverConfig, corpus, npasa_solve


def main():
    for name, entry in corpus().items():
        out = npasa_solve(entry.problem, entry.x0, entry.lam0, config=SolverConfig())
        print(f"{name}: {out.status}, x = {np.round(out.iterate.x, 8)}")
        for rec in out.log:
            mark = "" if rec.accepted else " (rejected)"
            print(f"  k={rec.k} phase={rec.phase} q={rec.q:.3g} E1={rec.E1:.2e}{mark}")
        print(f"  distance to solution {entry.distance_to_solution(out.iterate.x):.1e}")


if __name__ == "__main__":
    main()
