"""Euclidean projection onto a polyhedron with dual recovery.

The projection of ``c`` solves ``min 1/2 |c - y|^2`` over omega. Its row
duals ``pi`` determine the primal point through the clamp relation

    y_i = clamp(c_i + a_i' pi, box_lo_i, box_hi_i)

(``a_i`` the i-th column of ``A``), with ``pi_j > 0`` only where row j sits at
its lower bound and ``pi_j < 0`` only where it sits at its upper bound. The
stacked inequality multipliers are rebuilt from ``pi`` alone: the row parts
are the positive and negative parts of ``pi`` and the bound parts are the
amounts by which ``c + A' pi`` overshoots the box.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._activeset import find_feasible_point, solve_qp
from .exceptions import InternalError
from .model import NlpProblem, Polyhedron, is_feasible

__all__ = ["ProjectionResult", "project", "recover_multipliers", "projection_kkt_residual", "mu_of_x"]

NEG_TOL = 1e-9


@dataclass(frozen=True)
class ProjectionResult:
    y_star: np.ndarray
    pi_star: np.ndarray
    gamma1: np.ndarray
    gamma2: np.ndarray
    upsilon1: np.ndarray
    upsilon2: np.ndarray
    mu_stacked: np.ndarray
    kkt_residual: float
    iterations: int = 0


def recover_multipliers(poly: Polyhedron, c, pi_star, y_star):
    """Rebuild ``(gamma1, gamma2, upsilon1, upsilon2, mu_stacked)`` from ``pi``.

    A coordinate whose shifted value ``c_i + a_i' pi`` lies exactly on a bound
    is treated as free, so both of its bound multipliers are zero. For fixed
    coordinates (``box_lo == box_hi``) the overshoot is assigned to whichever
    side makes it nonnegative.
    """
    c = np.asarray(c, dtype=float)
    pi = np.asarray(pi_star, dtype=float).reshape(-1)
    gamma1 = np.maximum(pi, 0.0)
    gamma2 = np.maximum(-pi, 0.0)
    t = c + poly.A.T @ pi
    lo, hi = poly.box_lo, poly.box_hi
    below = t < lo
    above = t > hi
    upsilon1 = np.where(below, lo - t, 0.0)
    upsilon2 = np.where(above, t - hi, 0.0)
    upsilon1[~np.isfinite(upsilon1)] = 0.0
    upsilon2[~np.isfinite(upsilon2)] = 0.0
    if min(upsilon1.min(initial=0.0), upsilon2.min(initial=0.0)) < -NEG_TOL:
        raise InternalError("reconstructed bound multiplier is negative")
    # rows with infinite bounds never carry multipliers
    gamma1[~np.isfinite(poly.row_lo)] = 0.0
    gamma2[~np.isfinite(poly.row_hi)] = 0.0
    mu = np.concatenate([gamma1, gamma2, upsilon1, upsilon2])
    return gamma1, gamma2, upsilon1, upsilon2, mu


def projection_kkt_residual(poly: Polyhedron, c, y, gamma1, gamma2, upsilon1, upsilon2) -> float:
    """Largest violation among the four optimality conditions of the projection."""
    A = poly.A
    grad = (y - c) - A.T @ gamma1 + A.T @ gamma2 - upsilon1 + upsilon2
    Ay = A @ y
    parts = [np.max(np.abs(grad), initial=0.0)]
    viol = np.concatenate([poly.row_lo - Ay, Ay - poly.row_hi, poly.box_lo - y, y - poly.box_hi])
    parts.append(max(np.max(viol, initial=0.0), 0.0))
    parts.append(max(-min(v.min(initial=0.0) for v in (gamma1, gamma2, upsilon1, upsilon2)), 0.0))

    def slack(lo_side, values):
        mask = values != 0
        return np.max(np.abs(lo_side[mask] * values[mask]), initial=0.0)

    parts.append(slack(poly.row_lo - Ay, gamma1))
    parts.append(slack(Ay - poly.row_hi, gamma2))
    parts.append(slack(poly.box_lo - y, upsilon1))
    parts.append(slack(y - poly.box_hi, upsilon2))
    return float(max(parts))


def project(poly: Polyhedron, c, x_feasible=None, tol=1e-12) -> ProjectionResult:
    """Project ``c`` onto ``poly`` and recover all multipliers.

    ``x_feasible`` is an optional point of ``poly`` used to start the
    active-set iteration; without one a feasibility LP supplies it. Raises
    :class:`~npasa.exceptions.InfeasibleError` for an empty polyhedron.

    Examples
    --------
    >>> poly = Polyhedron([[1.0, 1.0]], [1.0], [1.0], [-np.inf] * 2, [np.inf] * 2)
    >>> res = project(poly, [2.0, 2.0])
    >>> res.y_star.round(12).tolist(), res.pi_star.round(12).tolist()
    ([0.5, 0.5], [-1.5])
    """
    c = np.asarray(c, dtype=float).reshape(-1)
    n = poly.n
    if x_feasible is None or not is_feasible(poly, x_feasible, 1e-9):
        # cheap start when the polyhedron is a box
        if poly.m_rows == 0:
            x_feasible = np.clip(c, poly.box_lo, poly.box_hi)
        else:
            x_feasible = find_feasible_point(poly)
    res = solve_qp(np.eye(n), c, poly, x0=x_feasible, tol=tol)
    y = res.x
    pi = res.row_mult.copy()
    # finite-precision cleanup of the row-sign condition
    pi[~np.isfinite(poly.row_lo) & (pi > 0)] = 0.0
    pi[~np.isfinite(poly.row_hi) & (pi < 0)] = 0.0
    gamma1, gamma2, upsilon1, upsilon2, mu = recover_multipliers(poly, c, pi, y)
    kkt = projection_kkt_residual(poly, c, y, gamma1, gamma2, upsilon1, upsilon2)
    return ProjectionResult(y, pi, gamma1, gamma2, upsilon1, upsilon2, mu, kkt, res.iterations)


def mu_of_x(p: NlpProblem, x, nu, q=0.0):
    """Stacked inequality multipliers from projecting ``x - grad_x L_q(x, nu)``.

    ``L_q = f + nu'h + q |h|^2``. Returns ``(mu, ProjectionResult)``.
    """
    x = np.asarray(x, dtype=float)
    nu = np.asarray(nu, dtype=float).reshape(-1)
    g = p.grad(x)
    if p.ell:
        g = g + p.jac(x).T @ (nu + 2.0 * q * p.h(x))
    res = project(p.omega, x - g, x_feasible=x)
    return res.mu_stacked, res
