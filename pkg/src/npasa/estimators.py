"""KKT error estimators and optimality diagnostics.

For the triple ``(x, lam, mu)`` with Lagrangian gradient
``g = grad f(x) + jac_h(x)' lam + J_r' mu``::

    E1^2 = |g|^2 + |h(x)|^2 + |min(-r(x), mu)|^2
    E0^2 = |g|^2 + |h(x)|^2 - mu' r(x)          (x in omega, mu >= 0)

The multiplier parts ``em1``/``em0`` drop the ``|h|^2`` term, which is
``ec``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .exceptions import DomainError
from .model import NlpProblem, is_feasible, stacked_residual

__all__ = [
    "EstimatorReport",
    "lagrangian_gradient",
    "phi_min",
    "e1",
    "e0",
    "e_c",
    "em1",
    "em0",
    "estimator_report",
    "kkt_residuals",
    "licq_holds",
    "strict_complementarity",
]

DEFAULT_D0_TOL = 1e-10


@dataclass(frozen=True)
class EstimatorReport:
    e0: Optional[float]
    e1: float
    em0: Optional[float]
    em1: float
    ec: float
    grad_lagrangian_norm_sq: float


def _shapes(p: NlpProblem, x, lam, mu):
    x = np.asarray(x, dtype=float).reshape(-1)
    lam = np.asarray(lam, dtype=float).reshape(-1)
    mu = np.asarray(mu, dtype=float).reshape(-1)
    if x.size != p.n or lam.size != p.ell or mu.size != p.m:
        raise DomainError(
            f"expected shapes ({p.n}, {p.ell}, {p.m}), got ({x.size}, {lam.size}, {mu.size})")
    return x, lam, mu


def lagrangian_gradient(p: NlpProblem, x, lam, mu) -> np.ndarray:
    """Gradient in ``x`` of ``f + lam'h + mu'r``."""
    x, lam, mu = _shapes(p, x, lam, mu)
    g = p.grad(x)
    if p.ell:
        g = g + p.jac(x).T @ lam
    # J_r' mu = -A'mu_rlo + A'mu_rhi - mu_blo + mu_bhi
    mu_rlo, mu_rhi, mu_blo, mu_bhi = p.omega.split_stacked(mu)
    return g + p.omega.A.T @ (mu_rhi - mu_rlo) + (mu_bhi - mu_blo)


def phi_min(a, b) -> np.ndarray:
    """Componentwise minimum; an infinite ``a_i`` yields ``b_i``."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise DomainError(f"length mismatch {a.shape} vs {b.shape}")
    return np.minimum(a, b)


def e_c(p: NlpProblem, x) -> float:
    """Constraint part ``|h(x)|^2``."""
    h = p.h(np.asarray(x, dtype=float).reshape(-1))
    return float(h @ h)


def _em1_parts(p, x, lam, mu):
    g = lagrangian_gradient(p, x, lam, mu)
    comp = phi_min(-stacked_residual(p.omega, x), mu)
    return g, comp


def em1(p: NlpProblem, x, lam, mu) -> float:
    """Multiplier part ``|grad L|^2 + |min(-r, mu)|^2`` of ``E1``."""
    g, comp = _em1_parts(p, x, lam, mu)
    return float(g @ g + comp @ comp)


def e1(p: NlpProblem, x, lam, mu, full=False):
    """Error estimator ``E1``; defined for multipliers of either sign.

    With ``full=True`` return ``(E1, em1, ec)``.
    """
    x, lam, mu = _shapes(p, x, lam, mu)
    m1 = em1(p, x, lam, mu)
    c = e_c(p, x)
    value = float(np.sqrt(m1 + c))
    return (value, m1, c) if full else value


def _check_d0(p, x, mu, tol):
    if np.any(mu < 0):
        raise DomainError(f"E0 requires mu >= 0 (min entry {mu.min():.3e})")
    if np.any(mu[~p.omega.finite_mask] != 0):
        raise DomainError("E0 requires zero multipliers on rows with infinite bounds")
    if not is_feasible(p.omega, x, tol):
        raise DomainError("E0 requires x in omega")


def em0(p: NlpProblem, x, lam, mu, tol=DEFAULT_D0_TOL) -> float:
    """Multiplier part ``|grad L|^2 - mu'r`` of ``E0``."""
    x, lam, mu = _shapes(p, x, lam, mu)
    _check_d0(p, x, mu, tol)
    g = lagrangian_gradient(p, x, lam, mu)
    fin = p.omega.finite_mask
    r = stacked_residual(p.omega, x)
    return float(g @ g - mu[fin] @ r[fin])


def e0(p: NlpProblem, x, lam, mu, tol=DEFAULT_D0_TOL, full=False):
    """Error estimator ``E0`` on ``{x in omega, mu >= 0}``.

    Raises :class:`DomainError` outside that set. Points within ``tol`` of
    omega are accepted; their radicand is clamped at zero.
    """
    m0 = em0(p, x, lam, mu, tol)
    c = e_c(p, x)
    value = float(np.sqrt(max(m0 + c, 0.0)))
    return (value, m0, c) if full else value


def estimator_report(p: NlpProblem, x, lam, mu, tol=DEFAULT_D0_TOL) -> EstimatorReport:
    """Evaluate every estimator; ``e0``/``em0`` are ``None`` off their domain."""
    x, lam, mu = _shapes(p, x, lam, mu)
    g, comp = _em1_parts(p, x, lam, mu)
    gsq = float(g @ g)
    m1 = gsq + float(comp @ comp)
    c = e_c(p, x)
    try:
        m0 = em0(p, x, lam, mu, tol)
        v0 = float(np.sqrt(max(m0 + c, 0.0)))
    except DomainError:
        m0 = v0 = None
    return EstimatorReport(e0=v0, e1=float(np.sqrt(m1 + c)), em0=m0, em1=m1, ec=c,
                           grad_lagrangian_norm_sq=gsq)


def kkt_residuals(p: NlpProblem, x, lam, mu) -> dict:
    """Residual of each first-order condition at ``(x, lam, mu)``.

    Keys: ``stationarity`` (``|grad L|``), ``equality`` (``|h|``),
    ``inequality`` (``max(r, 0)``), ``sign`` (``max(-mu, 0)``) and
    ``complementarity`` (``max |r_i mu_i|`` over finite rows).
    """
    x, lam, mu = _shapes(p, x, lam, mu)
    r = stacked_residual(p.omega, x)
    fin = p.omega.finite_mask
    g = lagrangian_gradient(p, x, lam, mu)
    out = {
        "stationarity": float(np.linalg.norm(g)),
        "equality": float(np.linalg.norm(p.h(x))),
        "inequality": float(max(np.max(r[fin], initial=0.0), 0.0)),
        "sign": float(max(np.max(-mu, initial=0.0), 0.0)),
        "complementarity": float(np.max(np.abs(r[fin] * mu[fin]), initial=0.0)),
    }
    # multipliers on never-active rows must vanish
    out["complementarity"] = max(out["complementarity"], float(np.max(np.abs(mu[~fin]), initial=0.0)))
    return out


def active_rows(p: NlpProblem, x, tol=1e-9) -> np.ndarray:
    """Indices of stacked inequalities with ``|r_i(x)| <= tol``."""
    r = stacked_residual(p.omega, x)
    return np.flatnonzero(np.abs(r) <= tol)


def licq_holds(p: NlpProblem, x, tol=1e-9, rank_tol=1e-10) -> bool:
    """Full row rank of ``[jac_h(x); A_active]`` with stacked active rows.

    Two-sided rows that are active at both sides (equalities) contribute a
    single gradient; the stacked duplicate is the same constraint.
    """
    x = np.asarray(x, dtype=float)
    J = p.omega.jacobian
    act = active_rows(p, x, tol)
    rows = [p.jac(x)]
    seen = set()
    mr, n = p.omega.m_rows, p.n
    for i in act:
        # map stacked index back to its underlying constraint
        if i < 2 * mr:
            key = ("row", i % mr)
        else:
            key = ("box", (i - 2 * mr) % n)
        if key in seen:
            continue
        seen.add(key)
        rows.append(J[i:i + 1])
    M = np.vstack(rows)
    if M.shape[0] == 0:
        return True
    if M.shape[0] > n:
        return False
    s = np.linalg.svd(M, compute_uv=False)
    return bool(s[-1] > rank_tol * max(1.0, s[0]))


def strict_complementarity(p: NlpProblem, x, lam, mu, tol=1e-9) -> bool:
    """Every stacked pair ``(r_i, mu_i)`` has exactly one zero entry.

    Also requires the KKT residuals to vanish to ``tol``.
    """
    res = kkt_residuals(p, x, lam, mu)
    if max(res.values()) > tol:
        return False
    r = stacked_residual(p.omega, x)
    mu = np.asarray(mu, dtype=float)
    r_zero = np.abs(r) <= tol
    mu_zero = np.abs(mu) <= tol
    return bool(np.all(r_zero ^ mu_zero))
