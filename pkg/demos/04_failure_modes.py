"""What happens when a local step cannot be trusted.

A constraint with a vanishing Jacobian makes the step-length test fail, and
a decrease factor near zero makes the multiplier test fail. In both cases
the local step returns its input unchanged and the driver falls back to
phase one with a larger penalty.
"""

import numpy as np

from npasa import Iterate, NlpProblem, Polyhedron, SolverConfig, local_step, npasa_solve


def flat_constraint():
    return NlpProblem(
        n=2, ell=1,
        f_eval=lambda x: 0.5 * x @ x, grad_f=lambda x: x.copy(),
        h_eval=lambda x: np.array([x[0] ** 2 - 0.01]),
        jac_h=lambda x: np.array([[2.0 * x[0], 0.0]]),
        omega=Polyhedron.box([-1.0, -1.0], [1.0, 1.0]))


def anisotropic_circle():
    return NlpProblem(
        n=2, ell=1,
        f_eval=lambda x: 0.5 * (x[0] - 2.0) ** 2 + (x[1] - 0.5) ** 2,
        grad_f=lambda x: np.array([x[0] - 2.0, 2.0 * x[1] - 1.0]),
        h_eval=lambda x: np.array([x @ x - 2.0]),
        jac_h=lambda x: 2.0 * x[None, :],
        omega=Polyhedron.box([0.0, 0.0], [np.inf, np.inf]))


def main():
    it = Iterate([0.0, 0.0], [0.0], np.zeros(4))
    out, info = local_step(flat_constraint(), it, SolverConfig())
    print(f"flat constraint: {info.status}, input returned: {out is it}")

    res = npasa_solve(anisotropic_circle(), [1.0, 1.0], config=SolverConfig(delta=1e-300, max_outer=8))
    print(f"driver with delta = 1e-300: {res.status}")
    for rec in res.log[1:]:
        print(f"  phase={rec.phase} q={rec.q:.3g} E1={rec.E1:.2e} {rec.status}")


if __name__ == "__main__":
    main()
