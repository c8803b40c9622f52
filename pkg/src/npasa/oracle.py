"""Brute-force reference solvers used to cross-check the main algorithms.

Everything here favours transparency over speed and is bounded to small
instances: QPs are solved by enumerating active sets, the E_{m,1}
subproblem by enumerating its smooth pieces, and derivatives by central
differences.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np
from scipy.optimize import lsq_linear

from .exceptions import DomainError, EvaluationError, InfeasibleError
from .model import NlpProblem, Polyhedron, SYMMETRY_TOL, stacked_residual

__all__ = [
    "DenseQp",
    "brute_force_qp",
    "enumerate_em1_eta",
    "em1_in_eta",
    "finite_diff_gradient",
    "finite_diff_jacobian",
    "MAX_QP_N",
    "MAX_QP_STACKED",
    "MAX_EM1_M",
]

MAX_QP_N = 10
MAX_QP_STACKED = 24
MAX_EM1_M = 12


@dataclass(frozen=True, eq=False)
class DenseQp:
    """``min 1/2 x'Hx + g'x`` over a polyhedron."""

    H: np.ndarray
    g: np.ndarray
    omega: Polyhedron

    def __post_init__(self):
        n = self.omega.n
        H = np.asarray(self.H, dtype=float).reshape(n, n)
        if not np.allclose(H, H.T, rtol=0, atol=SYMMETRY_TOL):
            raise DomainError("H is not symmetric")
        object.__setattr__(self, "H", H)
        object.__setattr__(self, "g", np.asarray(self.g, dtype=float).reshape(n))

    @classmethod
    def projection(cls, omega, c):
        """QP whose solution is the projection of ``c`` onto ``omega``."""
        return cls(np.eye(omega.n), -np.asarray(c, dtype=float), omega)


def brute_force_qp(qp: DenseQp, tol=1e-9):
    """Solve ``qp`` by enumerating active sets.

    Candidate working sets are visited in order of increasing size and the
    first one whose equality-constrained solution is primal feasible with
    correctly signed multipliers is returned. For a convex QP any such point
    is a global minimizer.

    Returns
    -------
    x : ndarray
    mu : ndarray
        Multipliers in the stacked order ``[row_lo; row_hi; box_lo; box_hi]``.
    """
    poly = qp.omega
    n, mr = poly.n, poly.m_rows
    if n > MAX_QP_N:
        raise DomainError(f"brute_force_qp supports n <= {MAX_QP_N}")
    if int(poly.finite_mask.sum()) > MAX_QP_STACKED:
        raise DomainError(f"brute_force_qp supports at most {MAX_QP_STACKED} finite inequalities")
    N = np.vstack([poly.A, np.eye(n)])
    lo = np.concatenate([poly.row_lo, poly.box_lo])
    hi = np.concatenate([poly.row_hi, poly.box_hi])
    count = N.shape[0]
    eq = []
    for k in range(count):
        # keep a maximal independent set of equalities; the rest are implied
        if lo[k] == hi[k] and np.linalg.matrix_rank(N[eq + [k]]) == len(eq) + 1:
            eq.append(k)
    ineq = [k for k in range(count) if lo[k] != hi[k] and (np.isfinite(lo[k]) or np.isfinite(hi[k]))]

    def sides(k):
        return [s for s, b in ((1, lo[k]), (-1, hi[k])) if np.isfinite(b)]

    for size in range(0, n - len(eq) + 1 if len(eq) <= n else 0):
        for subset in itertools.combinations(ineq, size):
            for choice in itertools.product(*(sides(k) for k in subset)):
                keys = eq + list(subset)
                signs = [0] * len(eq) + list(choice)
                rhs_b = np.array([lo[k] if s >= 0 else hi[k] for k, s in zip(keys, signs)])
                W = N[keys]
                if W.shape[0] and np.linalg.matrix_rank(W) < W.shape[0]:
                    continue
                K = np.block([[qp.H, -W.T], [W, np.zeros((len(keys), len(keys)))]])
                rhs = np.concatenate([-qp.g, rhs_b])
                try:
                    sol = np.linalg.solve(K, rhs)
                except np.linalg.LinAlgError:
                    continue
                x, sigma = sol[:n], sol[n:]
                Nx = N @ x
                scale = 1.0 + np.abs(Nx)
                if np.any(lo - Nx > tol * scale) or np.any(Nx - hi > tol * scale):
                    continue
                gscale = 1.0 + np.linalg.norm(qp.H @ x + qp.g)
                if any(s * sg < -tol * gscale for s, sg in zip(signs, sigma) if s != 0):
                    continue
                full = np.zeros(count)
                full[keys] = sigma
                mu = np.concatenate([
                    np.maximum(full[:mr], 0), np.maximum(-full[:mr], 0),
                    np.maximum(full[mr:], 0), np.maximum(-full[mr:], 0),
                ])
                return x, mu
    raise InfeasibleError("no feasible active set found")


def _eta_problem(p: NlpProblem, z, nu):
    z = np.asarray(z, dtype=float)
    nu = np.asarray(nu, dtype=float).reshape(-1)
    g = p.grad(z)
    if p.ell:
        g = g + p.jac(z).T @ nu
    fin = p.omega.finite_mask
    B = p.omega.jacobian.T[:, fin]
    s = -stacked_residual(p.omega, z)[fin]
    return g, B, s, fin


def em1_in_eta(p: NlpProblem, z, nu, eta) -> float:
    """``E_{m,1}(z, nu, eta)`` as a function of the stacked ``eta``."""
    g, B, s, fin = _eta_problem(p, z, nu)
    eta = np.asarray(eta, dtype=float)
    res = g + B @ eta[fin]
    comp = np.minimum(s, eta[fin])
    return float(res @ res + comp @ comp)


def enumerate_em1_eta(p: NlpProblem, z, nu, max_m=MAX_EM1_M):
    """Global minimizer over ``eta >= 0`` of ``E_{m,1}(z, nu, eta)``.

    For ``s_j = -r_j(z) >= 0`` and ``eta_j >= 0`` the complementarity term
    ``min(s_j, eta_j)^2`` equals ``min(eta_j^2, s_j^2)``, so the objective is
    the pointwise minimum of ``2^m`` convex quadratics, one per choice of
    term. Each is minimized over ``eta >= 0`` by bounded least squares.

    Returns ``(eta, value)`` with ``eta`` zero on rows with infinite bounds.
    """
    g, B, s, fin = _eta_problem(p, z, nu)
    mf = B.shape[1]
    if mf > max_m:
        raise DomainError(f"enumerate_em1_eta supports at most {max_m} finite inequalities")
    free = [j for j in range(mf) if s[j] > 0]
    const_fixed = float(np.sum(np.minimum(s, 0.0) ** 2))
    best_val, best_eta = np.inf, None
    n = B.shape[0]
    for mask in itertools.product((False, True), repeat=len(free)):
        penal = [j for j, on in zip(free, mask) if on]
        const = const_fixed + float(sum(s[j] ** 2 for j, on in zip(free, mask) if not on))
        rows = np.zeros((len(penal), mf))
        rows[np.arange(len(penal)), penal] = 1.0
        M = np.vstack([B, rows])
        rhs = np.concatenate([-g, np.zeros(len(penal))])
        if mf == 0:
            eta_f = np.zeros(0)
        else:
            eta_f = lsq_linear(M, rhs, bounds=(0.0, np.inf), method="bvls", tol=1e-14).x
            eta_f = np.maximum(eta_f, 0.0)
        val = float(np.sum((M @ eta_f - rhs) ** 2)) + const
        if val < best_val:
            best_val, best_eta = val, eta_f
    eta = np.zeros(p.m)
    eta[fin] = best_eta
    # report the true objective at the minimizer (piece values are upper bounds)
    return eta, em1_in_eta(p, z, nu, eta)


def _check_step(h_step):
    if not 1e-8 <= h_step <= 1e-4:
        raise DomainError("h_step must lie in [1e-8, 1e-4]")


def finite_diff_gradient(fun, x, h_step=1e-6) -> np.ndarray:
    """Central-difference gradient of a scalar function."""
    _check_step(h_step)
    x = np.asarray(x, dtype=float)
    g = np.empty_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h_step
        g[i] = (float(fun(x + e)) - float(fun(x - e))) / (2 * h_step)
    if np.isnan(g).any():
        raise EvaluationError("finite difference produced NaN")
    return g


def finite_diff_jacobian(fun, x, h_step=1e-6) -> np.ndarray:
    """Central-difference Jacobian of a vector function, shape ``(len(fun(x)), n)``."""
    _check_step(h_step)
    x = np.asarray(x, dtype=float)
    cols = []
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h_step
        cols.append((np.atleast_1d(fun(x + e)) - np.atleast_1d(fun(x - e))) / (2 * h_step))
    J = np.column_stack(cols) if cols else np.zeros((0, 0))
    if np.isnan(J).any():
        raise EvaluationError("finite difference produced NaN")
    return J
