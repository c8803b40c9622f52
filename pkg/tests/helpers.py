"""Shared generators for the test suite."""

import numpy as np

from npasa import NlpProblem, Polyhedron


def random_polyhedron(rng, n, m_rows, p_inf=0.3, p_eq=0.15):
    """Nonempty polyhedron with mixed finite, infinite and equality bounds.

    Bounds are placed around a random point, which is returned as a witness.
    """
    x = rng.normal(size=n)
    A = rng.normal(size=(m_rows, n))
    Ax = A @ x

    def bounds(centre):
        lo = centre - rng.uniform(0.1, 1.5, size=centre.size)
        hi = centre + rng.uniform(0.1, 1.5, size=centre.size)
        lo[rng.random(centre.size) < p_inf] = -np.inf
        hi[rng.random(centre.size) < p_inf] = np.inf
        eq = rng.random(centre.size) < p_eq
        lo[eq] = hi[eq] = centre[eq]
        return lo, hi

    row_lo, row_hi = bounds(Ax)
    box_lo, box_hi = bounds(x)
    return Polyhedron(A, row_lo, row_hi, box_lo, box_hi), x


def quadratic_problem(poly, H, g, ell=0, rng=None):
    """``1/2 x'Hx + g'x`` with optional random linear equality constraints."""
    n = poly.n
    if ell:
        G = rng.normal(size=(ell, n))
        b = rng.normal(size=ell)
    else:
        G = np.zeros((0, n))
        b = np.zeros(0)
    return NlpProblem(
        n=n, ell=ell,
        f_eval=lambda x: 0.5 * x @ H @ x + g @ x,
        grad_f=lambda x: H @ x + g,
        h_eval=lambda x: G @ x - b,
        jac_h=lambda x: G,
        omega=poly,
        hess_f=lambda x: H,
        hess_h=lambda x: np.zeros((ell, n, n)),
    )


def scalar_problem(grad, hgrad=None, omega=None, rng_row=None):
    """One-variable problem with ``f = grad * x`` and optional ``h = hgrad * x``."""
    omega = omega if omega is not None else Polyhedron.free(1)
    ell = 0 if hgrad is None else 1
    return NlpProblem(
        n=1, ell=ell,
        f_eval=lambda x: grad * x[0],
        grad_f=lambda x: np.array([grad]),
        h_eval=lambda x: np.array([hgrad * x[0]]) if ell else np.zeros(0),
        jac_h=lambda x: np.array([[hgrad]]) if ell else np.zeros((0, 1)),
        omega=omega,
    )


def anisotropic_circle():
    """``1/2 (x1 - 2)^2 + (x2 - 1/2)^2`` on the circle ``|x|^2 = 2`` with ``x >= 0``.

    The objective gradient turns under radial scaling, so multipliers fitted
    after a restoration step are inexact and the multiplier loop must iterate.
    """
    return NlpProblem(
        n=2, ell=1,
        f_eval=lambda x: 0.5 * (x[0] - 2.0) ** 2 + (x[1] - 0.5) ** 2,
        grad_f=lambda x: np.array([x[0] - 2.0, 2.0 * x[1] - 1.0]),
        h_eval=lambda x: np.array([x @ x - 2.0]),
        jac_h=lambda x: 2.0 * x[None, :],
        omega=Polyhedron.box([0.0, 0.0], [np.inf, np.inf]),
        hess_f=lambda x: np.diag([1.0, 2.0]),
        hess_h=lambda x: np.array([2.0 * np.eye(2)]),
        name="anisotropic-circle",
    )
