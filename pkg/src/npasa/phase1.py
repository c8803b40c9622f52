"""Global step: augmented-Lagrangian minimization over the polyhedron."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import Iterate, NlpProblem, SolverConfig
from .projection import mu_of_x
from .subsolve import SmoothObjective, minimize_over_polyhedron

__all__ = ["AugmentedLagrangian", "safeguard_lambda", "global_step", "GlobalStepInfo"]


class AugmentedLagrangian:
    """``L_q(x, nu) = f(x) + nu'h(x) + q |h(x)|^2`` for fixed ``q`` and ``nu``."""

    def __init__(self, problem: NlpProblem, q: float, nu):
        self.problem = problem
        self.q = float(q)
        self.nu = np.asarray(nu, dtype=float).reshape(-1)

    def value(self, x):
        p = self.problem
        val = p.f(x)
        if p.ell:
            h = p.h(x)
            val += self.nu @ h + self.q * (h @ h)
        return val

    def gradient(self, x):
        p = self.problem
        g = p.grad(x)
        if p.ell:
            g = g + p.jac(x).T @ (self.nu + 2.0 * self.q * p.h(x))
        return g

    def hessian(self, x):
        p = self.problem
        hs = p.hessians(x)
        if hs is None:
            return None
        Hf, Hh = hs
        if not p.ell:
            return Hf
        J = p.jac(x)
        weights = self.nu + 2.0 * self.q * p.h(x)
        return Hf + np.einsum("j,jik->ik", weights, Hh) + 2.0 * self.q * J.T @ J

    def objective(self) -> SmoothObjective:
        p = self.problem
        exact = p.hess_f is not None and (p.ell == 0 or p.hess_h is not None)
        return SmoothObjective(self.value, self.gradient, self.hessian if exact else None)


def safeguard_lambda(lam, lambda_bar):
    """Clamp every component of ``lam`` into ``[-lambda_bar, lambda_bar]``."""
    if lambda_bar <= 0:
        raise ValueError("lambda_bar must be positive")
    return np.clip(np.asarray(lam, dtype=float), -lambda_bar, lambda_bar)


@dataclass
class GlobalStepInfo:
    inner_iterations: int
    inner_status: str
    pg_norm: float
    projection_kkt: float


def global_step(p: NlpProblem, it: Iterate, q: float, config: SolverConfig, info=False):
    """One global step from ``it`` with penalty ``q``.

    Minimizes ``L_q(., lam_bar)`` over omega warm-started at ``it.x``,
    updates ``lam' = lam_bar + 2 q h(x')`` and rebuilds the inequality
    multipliers from the projection of ``x' - grad L_q(x', lam_bar)``.
    """
    lam_bar = safeguard_lambda(it.lam, config.lambda_bar)
    al = AugmentedLagrangian(p, q, lam_bar)
    rep = minimize_over_polyhedron(al.objective(), p.omega, it.x, config.inner_tol,
                                   config.max_inner_iters)
    x_new = rep.minimizer
    lam_new = lam_bar + 2.0 * q * p.h(x_new) if p.ell else np.zeros(0)
    mu_new, proj = mu_of_x(p, x_new, lam_bar, q)
    out = Iterate(x_new, lam_new, mu_new)
    if info:
        return out, GlobalStepInfo(rep.iterations, rep.status, rep.pg_norm, proj.kkt_residual)
    return out
