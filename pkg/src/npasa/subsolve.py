"""Inner minimization engines.

* :func:`minimize_over_polyhedron` -- smooth objective over a polyhedron by
  projected Newton steps (each step is a convex QP over the polyhedron solved
  by the active-set engine) with an Armijo backtracking safeguard.
* :func:`minimize_em0_regularized` -- the strictly convex multiplier fit.
* :func:`minimize_em1_over_eta` -- the piecewise-quadratic refinement of the
  inequality multipliers.
* :func:`least_distance_linearized` -- the slack-penalized linearized
  feasibility problem.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy.optimize import nnls

from ._activeset import solve_qp
from .exceptions import DomainError, EvaluationError
from .model import NlpProblem, Polyhedron, is_feasible, stacked_residual
from .projection import project

__all__ = [
    "SmoothObjective",
    "SubsolveReport",
    "minimize_over_polyhedron",
    "minimize_em0_regularized",
    "minimize_em1_over_eta",
    "least_distance_linearized",
    "fd_hessian",
]

EPS = np.finfo(float).eps
ENUM_PIECES_MAX = 6


@dataclass(frozen=True)
class SmoothObjective:
    """Objective with exact gradient and optional Hessian."""

    value: Callable
    gradient: Callable
    hessian: Optional[Callable] = None


@dataclass(frozen=True)
class SubsolveReport:
    minimizer: np.ndarray
    pg_norm: float
    iterations: int
    status: str   # "Stationary" | "MaxIters" | "Stalled"
    values: tuple = ()


def fd_hessian(gradient, x, rel_step=1e-5):
    """Symmetrized central-difference Hessian from a gradient callable."""
    x = np.asarray(x, dtype=float)
    n = x.size
    H = np.empty((n, n))
    for i in range(n):
        h = rel_step * max(1.0, abs(x[i]))
        e = np.zeros(n)
        e[i] = h
        H[:, i] = (gradient(x + e) - gradient(x - e)) / (2 * h)
    return 0.5 * (H + H.T)


def _pd_factor(H):
    """Upper factor ``R`` with ``R'R`` a positive definite modification of ``H``."""
    H = 0.5 * (H + H.T)
    w, V = np.linalg.eigh(H)
    top = max(np.max(np.abs(w)), 1.0)
    w = np.maximum(np.abs(w), 1e-10 * top)
    return (V * np.sqrt(w)).T


def _value(obj, x):
    v = float(obj.value(x))
    if np.isnan(v):
        raise EvaluationError("objective returned NaN")
    return v


def _grad(obj, x):
    g = np.asarray(obj.gradient(x), dtype=float).reshape(-1)
    if np.isnan(g).any():
        raise EvaluationError("gradient returned NaN")
    return g


def pg_measure(poly, x, g):
    """``|x - P(x - g)|`` together with the projection of ``x - g``."""
    y = project(poly, x - g, x_feasible=x).y_star
    return float(np.linalg.norm(x - y)), y


def minimize_over_polyhedron(obj: SmoothObjective, poly: Polyhedron, x0, inner_tol=1e-10,
                             max_iters=500) -> SubsolveReport:
    """Minimize a smooth function over ``poly`` starting from ``x0``.

    Each iteration solves the QP ``min g'd + 1/2 d'Hd, x + d in poly`` with
    ``H`` the (positive definite modification of the) Hessian, then
    backtracks on the objective. The projected-gradient norm
    ``|x - P(x - grad)|`` is the stopping measure.

    Examples
    --------
    >>> poly = Polyhedron([[1.0, 1.0]], [2.0], [2.0], [0.0, 0.0], [np.inf, np.inf])
    >>> obj = SmoothObjective(lambda x: 0.5 * x @ x, lambda x: x, lambda x: np.eye(2))
    >>> minimize_over_polyhedron(obj, poly, [2.0, 0.0]).minimizer.round(10).tolist()
    [1.0, 1.0]
    """
    if inner_tol <= 0 or max_iters <= 0:
        raise DomainError("tolerances must be positive")
    x = np.asarray(x0, dtype=float).reshape(-1).copy()
    if not is_feasible(poly, x, 1e-9):
        x = project(poly, x).y_star
    f = _value(obj, x)
    values = [f]
    g = _grad(obj, x)
    meas, y_pg = pg_measure(poly, x, g)
    for it in range(max_iters):
        if meas <= inner_tol:
            return SubsolveReport(x, meas, it, "Stationary", tuple(values))
        H = obj.hessian(x) if obj.hessian is not None else fd_hessian(obj.gradient, x)
        R = _pd_factor(np.asarray(H, dtype=float))
        try:
            y = solve_qp(R, R @ x, poly, x0=x, d=g).x
            d = y - x
        except Exception:
            d = y_pg - x
        slope = float(g @ d)
        if not slope < 0:
            d = y_pg - x
            slope = float(g @ d)
        s, accepted = 1.0, False
        roundoff = 10 * EPS * (1.0 + abs(f))
        while s >= 1e-14:
            xn = x + s * d
            fn = _value(obj, xn)
            if fn <= f + 1e-4 * s * slope:
                accepted = True
                break
            if -slope * s <= roundoff and fn <= f + roundoff:
                # decrease is below rounding; accept if stationarity improves
                gn = _grad(obj, xn)
                mn, _ = pg_measure(poly, xn, gn)
                if mn < meas:
                    accepted = True
                break
            s *= 0.5
        if not accepted:
            return SubsolveReport(x, meas, it, "Stalled", tuple(values))
        x, f = xn, min(fn, f)
        values.append(fn)
        g = _grad(obj, x)
        meas, y_pg = pg_measure(poly, x, g)
    status = "Stationary" if meas <= inner_tol else "MaxIters"
    return SubsolveReport(x, meas, max_iters, status, tuple(values))


def _multiplier_blocks(p: NlpProblem, z):
    z = np.asarray(z, dtype=float)
    fin = p.omega.finite_mask
    B = p.omega.jacobian.T[:, fin]
    r = stacked_residual(p.omega, z)[fin]
    return B, r, fin


def minimize_em0_regularized(p: NlpProblem, z, gamma):
    """Minimize ``E_{m,0}(z, nu, eta) + gamma |[nu, eta]|^2`` over ``eta >= 0``.

    The objective is a strictly convex quadratic in ``(nu, eta)``; the
    multipliers of rows with infinite bounds stay zero.

    Returns
    -------
    nu : ndarray, shape (ell,)
    eta : ndarray, shape (m,)
    value : float
    """
    if gamma <= 0:
        raise DomainError("gamma must be positive")
    z = np.asarray(z, dtype=float).reshape(-1)
    if z.size != p.n:
        raise DomainError(f"z must have length {p.n}")
    g0 = p.grad(z)
    J = p.jac(z)
    B, r, fin = _multiplier_blocks(p, z)
    ell, mf = p.ell, B.shape[1]
    C = np.hstack([J.T, B])
    k = ell + mf
    if k == 0:
        return np.zeros(0), np.zeros(p.m), float(g0 @ g0)
    M = np.vstack([C, np.sqrt(gamma) * np.eye(k)]) * np.sqrt(2.0)
    b = np.concatenate([-g0, np.zeros(k)]) * np.sqrt(2.0)
    d = np.concatenate([np.zeros(ell), -r])
    box = Polyhedron.box(np.concatenate([np.full(ell, -np.inf), np.zeros(mf)]), np.full(k, np.inf))
    v = solve_qp(M, b, box, x0=np.zeros(k), d=d, tol=1e-14).x
    nu = v[:ell]
    eta = np.zeros(p.m)
    eta[fin] = np.maximum(v[ell:], 0.0)
    res = g0 + C @ np.concatenate([nu, eta[fin]])
    value = float(res @ res - eta[fin] @ r + gamma * (v @ v))
    return nu, eta, value


def _em1_eta_value(g, B, s, eta_f):
    res = g + B @ eta_f
    comp = np.minimum(s, eta_f)
    return float(res @ res + comp @ comp)


def _solve_piece(g, B, penal):
    """Minimize ``|g + B eta|^2 + sum_{j in penal} eta_j^2`` over ``eta >= 0``."""
    mf = B.shape[1]
    rows = np.zeros((penal.size, mf))
    rows[np.arange(penal.size), penal] = 1.0
    M = np.vstack([B, rows])
    rhs = np.concatenate([-g, np.zeros(penal.size)])
    eta_f, _ = nnls(M, rhs, maxiter=50 * max(mf, 1))
    return eta_f


def _descend_pieces(g, B, s, eta_f, max_rounds=100):
    """Alternate between choosing the active smooth piece and minimizing it.

    On ``eta >= 0`` the term ``min(s_j, eta_j)^2`` equals
    ``min(eta_j^2, s_j^2)`` when ``s_j >= 0``. At the current point pick the
    smaller branch for every j, minimize the resulting convex quadratic over
    ``eta >= 0`` and repeat; the objective never increases.
    """
    val = _em1_eta_value(g, B, s, eta_f)
    for _ in range(max_rounds):
        cand = _solve_piece(g, B, np.flatnonzero((s > 0) & (eta_f < s)))
        cval = _em1_eta_value(g, B, s, cand)
        if not cval < val - 1e-15 * (1.0 + val):
            break
        eta_f, val = cand, cval
    return eta_f, val


def _flip_search(g, B, s, eta_f, val, max_rounds=100):
    """Improve a piece-descent result by switching one branch at a time.

    For every j with ``s_j > 0`` the branch of ``min(eta_j^2, s_j^2)`` is
    toggled, the toggled piece is minimized and descended from; the first
    improvement is kept and the scan restarts.
    """
    free = np.flatnonzero(s > 0)
    for _ in range(max_rounds):
        penal = (s > 0) & (eta_f < s)
        improved = False
        for j in free:
            trial = penal.copy()
            trial[j] = not trial[j]
            cand, cval = _descend_pieces(g, B, s, _solve_piece(g, B, np.flatnonzero(trial)))
            if cval < val - 1e-15 * (1.0 + val):
                eta_f, val, improved = cand, cval, True
                break
        if not improved:
            break
    return eta_f, val


def _enumerate_pieces(g, B, s):
    """Best of all ``2^k`` pieces, ``k`` the number of rows with ``s_j > 0``."""
    free = np.flatnonzero(s > 0)
    best_eta, best_val = None, np.inf
    for mask in itertools.product((False, True), repeat=free.size):
        cand = _solve_piece(g, B, free[np.array(mask, dtype=bool)])
        val = _em1_eta_value(g, B, s, cand)
        if val < best_val:
            best_eta, best_val = cand, val
    return best_eta, best_val


def minimize_em1_over_eta(p: NlpProblem, z, nu, eta_start=None, exact=False):
    """Minimize ``E_{m,1}(z, nu, eta)`` over ``eta >= 0``.

    With at most ``ENUM_PIECES_MAX`` rows of positive slack every smooth
    piece is minimized and the best is returned. Otherwise the piece-descent
    runs from ``eta = 0`` and from ``eta_start``, each result is improved by
    single-branch switches and the better one is kept, so the value never
    exceeds either starting value. ``exact=True`` defers to the reference
    enumeration in :mod:`npasa.oracle`.

    Returns ``(eta, value)`` with ``eta`` of length ``m``.
    """
    z = np.asarray(z, dtype=float).reshape(-1)
    nu = np.asarray(nu, dtype=float).reshape(-1)
    if z.size != p.n or nu.size != p.ell:
        raise DomainError("shape mismatch")
    if exact:
        from .oracle import enumerate_em1_eta
        return enumerate_em1_eta(p, z, nu)
    g = p.grad(z)
    if p.ell:
        g = g + p.jac(z).T @ nu
    B, r, fin = _multiplier_blocks(p, z)
    s = -r
    starts = [np.zeros(B.shape[1])]
    if eta_start is not None:
        starts.append(np.maximum(np.asarray(eta_start, dtype=float)[fin], 0.0))
    best_eta, best_val = None, np.inf
    if np.count_nonzero(s > 0) <= ENUM_PIECES_MAX:
        best_eta, best_val = _enumerate_pieces(g, B, s)
        starts = [st for st in starts if _em1_eta_value(g, B, s, st) < best_val]
    for start in starts:
        eta_f, val = _descend_pieces(g, B, s, start)
        eta_f, val = _flip_search(g, B, s, eta_f, val)
        if val < best_val:
            best_eta, best_val = eta_f, val
    eta = np.zeros(p.m)
    eta[fin] = best_eta
    return eta, best_val


def least_distance_linearized(poly: Polyhedron, w_i, h_i, J_i, p_i):
    """Solve ``min |w - w_i|^2 + p |y|^2 s.t. J(w - w_i) + y = -h, w in poly``.

    The slack is eliminated, ``y = -h - J(w - w_i)``, and the remaining
    strictly convex QP is solved in the displacement ``w - w_i`` over the
    shifted polyhedron.

    Returns ``(w_bar, y)``.
    """
    w_i = np.asarray(w_i, dtype=float).reshape(-1)
    h_i = np.asarray(h_i, dtype=float).reshape(-1)
    J_i = np.asarray(J_i, dtype=float).reshape(h_i.size, w_i.size)
    if p_i < 1:
        raise DomainError("penalty must be at least 1")
    n = w_i.size
    shifted = Polyhedron(poly.A, poly.row_lo - poly.A @ w_i, poly.row_hi - poly.A @ w_i,
                         poly.box_lo - w_i, poly.box_hi - w_i)
    sp = np.sqrt(p_i)
    M = np.vstack([np.eye(n), sp * J_i])
    b = np.concatenate([np.zeros(n), -sp * h_i])
    d0 = np.clip(np.zeros(n), shifted.box_lo, shifted.box_hi)
    d = solve_qp(M, b, shifted, x0=d0, tol=1e-13).x
    w_bar = w_i + d
    # keep exact bound values where the step landed on one
    w_bar = np.clip(w_bar, poly.box_lo, poly.box_hi)
    y = -h_i - J_i @ d
    return w_bar, y
