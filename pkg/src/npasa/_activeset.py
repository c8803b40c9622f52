"""Primal active-set method for convex least-squares QPs over a polyhedron.

Solves

    min  1/2 |M x - b|^2 + d'x
    s.t. row_lo <= A x <= row_hi,  box_lo <= x <= box_hi

with ``M`` of full column rank, starting from a feasible point. Working-set
subproblems are solved in a null-space basis obtained from a dense QR
factorization; when ``d`` is absent the reduced problem is solved as a
least-squares problem in ``M Z`` so that large penalty rows in ``M`` do not
square the condition number.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
from scipy.optimize import linprog

from .exceptions import InfeasibleError, SubsolverFailure
from .model import Polyhedron

LOWER, UPPER, EQUAL = 1, -1, 0


@dataclass
class ActiveSetResult:
    x: np.ndarray
    row_mult: np.ndarray   # > 0: lower side active, < 0: upper side active
    box_mult: np.ndarray
    iterations: int
    working: dict


def find_feasible_point(poly: Polyhedron, tol=1e-9) -> np.ndarray:
    """Some point of ``poly``; raises :class:`InfeasibleError` if it is empty."""
    n = poly.n
    bounds = [(lo if np.isfinite(lo) else None, hi if np.isfinite(hi) else None)
              for lo, hi in zip(poly.box_lo, poly.box_hi)]
    A_ub, b_ub, A_eq, b_eq = [], [], [], []
    for a, lo, hi in zip(poly.A, poly.row_lo, poly.row_hi):
        if lo == hi:
            A_eq.append(a)
            b_eq.append(lo)
            continue
        if np.isfinite(hi):
            A_ub.append(a)
            b_ub.append(hi)
        if np.isfinite(lo):
            A_ub.append(-a)
            b_ub.append(-lo)
    res = linprog(
        np.zeros(n),
        A_ub=np.array(A_ub).reshape(-1, n) if A_ub else None,
        b_ub=np.array(b_ub) if b_ub else None,
        A_eq=np.array(A_eq).reshape(-1, n) if A_eq else None,
        b_eq=np.array(b_eq) if b_eq else None,
        bounds=bounds, method="highs",
    )
    if res.status == 2:
        raise InfeasibleError("polyhedron is empty")
    if res.status != 0:
        raise SubsolverFailure(f"feasibility LP failed: {res.message}")
    x = np.clip(res.x, poly.box_lo, poly.box_hi)
    return x


class _Constraints:
    """Rows of ``A`` followed by the coordinate bounds, as two-sided constraints."""

    def __init__(self, poly: Polyhedron):
        n = poly.n
        self.N = np.vstack([poly.A, np.eye(n)])
        self.lo = np.concatenate([poly.row_lo, poly.box_lo])
        self.hi = np.concatenate([poly.row_hi, poly.box_hi])
        self.m_rows = poly.m_rows
        self.count = self.N.shape[0]
        self.scale = 1.0 + np.linalg.norm(self.N, axis=1)

    def bound(self, k, side):
        return self.lo[k] if side >= 0 else self.hi[k]


def _independent(rows, candidate, tol=1e-10):
    if not rows:
        return np.linalg.norm(candidate) > 0
    B = np.array(rows).T
    coef, *_ = np.linalg.lstsq(B, candidate, rcond=None)
    resid = candidate - B @ coef
    return np.linalg.norm(resid) > tol * max(1.0, np.linalg.norm(candidate))


def solve_qp(M, b, poly: Polyhedron, x0=None, d=None, tol=1e-11, max_iter=None):
    """Minimize ``1/2 |Mx - b|^2 + d'x`` over ``poly`` from feasible ``x0``.

    Returns an :class:`ActiveSetResult`. The multipliers satisfy
    ``M'(Mx - b) + d = A' row_mult + box_mult`` with nonnegative entries on
    lower-active constraints and nonpositive entries on upper-active ones.
    """
    M = np.atleast_2d(np.asarray(M, dtype=float))
    b = np.asarray(b, dtype=float).reshape(-1)
    n = poly.n
    if d is not None:
        d = np.asarray(d, dtype=float).reshape(-1)
    cons = _Constraints(poly)
    if x0 is None:
        x0 = find_feasible_point(poly)
    x = np.array(x0, dtype=float).reshape(-1)
    if max_iter is None:
        max_iter = 20 * (n + cons.count) + 50

    act_tol = 1e-10
    working = {}
    rows = []

    def add(k, side):
        working[k] = side
        rows.append(cons.N[k])

    # Equalities first, then inequalities active at x0.
    for k in range(cons.count):
        if cons.lo[k] == cons.hi[k] and np.isfinite(cons.lo[k]):
            if _independent(rows, cons.N[k]):
                add(k, EQUAL)
    Nx = cons.N @ x
    for k in range(cons.count):
        if k in working:
            continue
        for side, bnd in ((LOWER, cons.lo[k]), (UPPER, cons.hi[k])):
            if np.isfinite(bnd) and abs(Nx[k] - bnd) <= act_tol * (1 + abs(bnd)):
                if _independent(rows, cons.N[k]):
                    add(k, side)
                break

    def gradient(x):
        g = M.T @ (M @ x - b)
        return g if d is None else g + d

    def reduced_step(x):
        keys = list(working)
        if keys:
            NW = cons.N[keys]
            Q, _ = np.linalg.qr(NW.T, mode="complete")
            Z = Q[:, len(keys):]
        else:
            Z = np.eye(n)
        if Z.shape[1] == 0:
            return np.zeros(n)
        MZ = M @ Z
        if d is None:
            u, *_ = np.linalg.lstsq(MZ, b - M @ x, rcond=None)
        else:
            R = np.linalg.qr(MZ, mode="r")
            rhs = -(Z.T @ gradient(x))
            u = sla.solve_triangular(R, sla.solve_triangular(R, rhs, trans="T"))
        return Z @ u

    def multipliers(x):
        keys = list(working)
        sigma = np.zeros(cons.count)
        if keys:
            coef, *_ = np.linalg.lstsq(cons.N[keys].T, gradient(x), rcond=None)
            sigma[keys] = coef
        return sigma

    at_face_min = False
    for it in range(max_iter):
        if not at_face_min:
            p = reduced_step(x)
            pnorm = np.linalg.norm(p)
        if at_face_min or pnorm <= 1e-15 * (1 + np.linalg.norm(x)):
            sigma = multipliers(x)
            gscale = 1.0 + np.linalg.norm(gradient(x))
            worst, worst_k = -tol * gscale, None
            for k, side in working.items():
                if side == EQUAL:
                    continue
                signed = sigma[k] * side
                if signed < worst:
                    worst, worst_k = signed, k
            if worst_k is None:
                return ActiveSetResult(x, sigma[:cons.m_rows], sigma[cons.m_rows:], it, dict(working))
            del working[worst_k]
            rows[:] = [cons.N[k] for k in working]
            at_face_min = False
            continue

        # Ratio test along p for constraints outside the working set.
        Np = cons.N @ p
        Nx = cons.N @ x
        step, block = 1.0, None
        tiny = 1e-14 * pnorm * cons.scale
        for k in range(cons.count):
            if k in working:
                continue
            if Np[k] < -tiny[k] and np.isfinite(cons.lo[k]):
                t = (cons.lo[k] - Nx[k]) / Np[k]
                side = LOWER
            elif Np[k] > tiny[k] and np.isfinite(cons.hi[k]):
                t = (cons.hi[k] - Nx[k]) / Np[k]
                side = UPPER
            else:
                continue
            t = max(t, 0.0)
            if t < step:
                step, block = t, (k, side)
        x = x + step * p
        if block is None:
            at_face_min = True
        else:
            k, side = block
            if k >= cons.m_rows:
                x[k - cons.m_rows] = cons.bound(k, side)
            add(k, side)
            at_face_min = False
    raise SubsolverFailure("active-set iteration limit reached",
                           residual=float(np.linalg.norm(reduced_step(x))))
