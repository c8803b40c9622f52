"""Local step: constraint restoration followed by multiplier refinement.

The constraint step runs slack-penalized Gauss-Newton iterations on
``h(w) = 0`` inside omega, safeguarded by an Armijo test on ``|h|``. The
multiplier step alternates the regularized multiplier fit, the
``E_{m,1}``-refinement of the inequality multipliers, and minimization of the
penalized Lagrangian ``f + nu'h + p |h(z) - h(z_i)|^2`` on the linearized
constraint manifold. Either step may give up, in which case the local step
returns its input unchanged.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .estimators import em1
from .exceptions import DomainError, NpasaError
from .model import Iterate, NlpProblem, SolverConfig
from .subsolve import (
    SmoothObjective,
    least_distance_linearized,
    minimize_em0_regularized,
    minimize_em1_over_eta,
    minimize_over_polyhedron,
)

__all__ = [
    "ConstraintStepTrace",
    "MultiplierStepTrace",
    "LocalStepInfo",
    "choose_penalty",
    "constraint_step",
    "multiplier_step",
    "local_step",
    "PenalizedLagrangian",
]


@dataclass
class ConstraintStepTrace:
    w: list = field(default_factory=list)
    penalties: list = field(default_factory=list)
    slack_norms: list = field(default_factory=list)
    alphas: list = field(default_factory=list)
    alphas_unscaled: list = field(default_factory=list)
    steps: list = field(default_factory=list)
    h_norms: list = field(default_factory=list)
    outcome: str = "Success"   # Success | AlphaFailure | LineSearchFailure | MaxIters

    @property
    def ok(self):
        return self.outcome == "Success"

    @property
    def result(self):
        return self.w[-1]

    @property
    def iterations(self):
        return len(self.w) - 1


@dataclass
class MultiplierStepTrace:
    z: list = field(default_factory=list)
    nu: list = field(default_factory=list)
    eta: list = field(default_factory=list)
    eta_prime: list = field(default_factory=list)
    em1: list = field(default_factory=list)
    penalties: list = field(default_factory=list)
    inner_status: list = field(default_factory=list)
    retries: int = 0
    outcome: str = "Success"   # Success | DecreaseFailure | SubsolverFailure | MaxIters

    @property
    def ok(self):
        return self.outcome == "Success"

    @property
    def iterations(self):
        return len(self.z) - 1


@dataclass
class LocalStepInfo:
    constraint: ConstraintStepTrace
    multiplier: MultiplierStepTrace = None
    status: str = "Success"


def choose_penalty(h_norm, beta):
    """Smallest admissible penalty ``max(beta^2, |h|^-2)``."""
    if beta < 1:
        raise DomainError("beta must be at least 1")
    if not h_norm > 0:
        raise DomainError("penalty is undefined at a feasible point")
    return max(beta ** 2, h_norm ** -2)


def constraint_step(p: NlpProblem, x, lam, mu, config: SolverConfig,
                    target=None) -> ConstraintStepTrace:
    """Drive ``|h(w)|^2`` below ``theta * E_{m,1}(x, lam, mu)`` from ``w = x``.

    The acceptance parameter is computed from the rescaled slack,
    ``alpha_i = 1 - sqrt(p_i) |y_i|``; the plain ``1 - |y_i|`` is recorded
    alongside. The target is never set below ``config.floor``; an explicit
    ``target`` replaces the estimator-based one.
    """
    x = np.asarray(x, dtype=float)
    if target is None:
        target = config.theta * em1(p, x, lam, mu)
    target = max(target, config.floor)
    trace = ConstraintStepTrace()
    w = x.copy()
    hw = p.h(w)
    trace.w.append(w)
    trace.h_norms.append(float(np.linalg.norm(hw)))
    for _ in range(config.max_constraint_iters):
        if hw @ hw <= target:
            return trace
        hn = float(np.linalg.norm(hw))
        pen = choose_penalty(hn, config.beta)
        w_bar, y = least_distance_linearized(p.omega, w, hw, p.jac(w), pen)
        ynorm = float(np.linalg.norm(y))
        alpha = 1.0 - np.sqrt(pen) * ynorm
        trace.penalties.append(pen)
        trace.slack_norms.append(ynorm)
        trace.alphas.append(alpha)
        trace.alphas_unscaled.append(1.0 - ynorm)
        if alpha < config.alpha:
            trace.outcome = "AlphaFailure"
            return trace
        s = 1.0
        for _ in range(config.max_backtracks):
            w_new = w + s * (w_bar - w)
            h_new = p.h(w_new)
            if np.linalg.norm(h_new) <= (1.0 - config.tau * alpha * s) * hn:
                break
            s *= config.sigma
            if s < config.s_min:
                break
        else:
            s = 0.0
        if s < config.s_min:
            trace.steps.append(s)
            trace.outcome = "LineSearchFailure"
            return trace
        trace.steps.append(s)
        w, hw = w_new, h_new
        trace.w.append(w)
        trace.h_norms.append(float(np.linalg.norm(hw)))
    if hw @ hw > target:
        trace.outcome = "MaxIters"
    return trace


class PenalizedLagrangian:
    """``f(z) + nu'h(z) + p |h(z) - h(z_i)|^2`` anchored at ``z_i``."""

    def __init__(self, problem: NlpProblem, nu, pen, z_anchor):
        self.problem = problem
        self.nu = np.asarray(nu, dtype=float)
        self.pen = float(pen)
        self.h_anchor = problem.h(z_anchor)

    def value(self, z):
        p = self.problem
        d = p.h(z) - self.h_anchor
        return p.f(z) + self.nu @ p.h(z) + self.pen * (d @ d)

    def gradient(self, z):
        p = self.problem
        d = p.h(z) - self.h_anchor
        return p.grad(z) + p.jac(z).T @ (self.nu + 2.0 * self.pen * d)

    def hessian(self, z):
        p = self.problem
        Hf, Hh = p.hessians(z)
        J = p.jac(z)
        weights = self.nu + 2.0 * self.pen * (p.h(z) - self.h_anchor)
        return Hf + np.einsum("j,jik->ik", weights, Hh) + 2.0 * self.pen * J.T @ J

    def objective(self):
        p = self.problem
        exact = p.hess_f is not None and p.hess_h is not None
        return SmoothObjective(self.value, self.gradient, self.hessian if exact else None)


def _refit(p, z, config):
    nu, eta, _ = minimize_em0_regularized(p, z, config.gamma)
    eta_p, val = minimize_em1_over_eta(p, z, nu, eta, exact=config.exact_em1)
    return nu, eta, eta_p, val


def multiplier_step(p: NlpProblem, w, lam, mu, theta_target, config: SolverConfig) -> MultiplierStepTrace:
    """Refine multipliers (and the primal point) until ``E_{m,1} <= theta_target``.

    ``lam`` and ``mu`` are accepted for interface symmetry; the step starts
    from fresh multiplier estimates at ``w``. The stopping target is never
    set below ``config.floor``. On a failed decrease test the penalty is
    multiplied by 10 and the iteration retried once.
    """
    w = np.asarray(w, dtype=float)
    target = max(theta_target, config.floor)
    trace = MultiplierStepTrace()
    z = w.copy()
    nu, eta, eta_p, val = _refit(p, z, config)
    trace.z.append(z)
    trace.nu.append(nu)
    trace.eta.append(eta)
    trace.eta_prime.append(eta_p)
    trace.em1.append(val)
    pen = config.p_init
    retried = False
    while val > target:
        if trace.iterations >= config.max_multiplier_iters:
            trace.outcome = "MaxIters"
            return trace
        if p.ell:
            J = p.jac(z)
            poly_i = p.omega.with_equality_rows(J, J @ z)
        else:
            poly_i = p.omega
        obj = PenalizedLagrangian(p, nu, pen, z).objective()
        tol = max(min(config.inner_tol, 1e-2 * val), 1e-15)
        try:
            rep = minimize_over_polyhedron(obj, poly_i, z, tol, config.max_inner_iters)
            z_new = rep.minimizer
            nu_new, eta_new, eta_p_new, val_new = _refit(p, z_new, config)
        except NpasaError:
            trace.outcome = "SubsolverFailure"
            return trace
        if val_new > config.delta * val:
            if not retried:
                retried = True
                trace.retries += 1
                pen *= 10.0
                continue
            trace.outcome = "DecreaseFailure"
            return trace
        retried = False
        z, nu, eta, eta_p, val = z_new, nu_new, eta_new, eta_p_new, val_new
        trace.penalties.append(pen)
        trace.inner_status.append(rep.status)
        trace.z.append(z)
        trace.nu.append(nu)
        trace.eta.append(eta)
        trace.eta_prime.append(eta_p)
        trace.em1.append(val)
    return trace


def local_step(p: NlpProblem, it: Iterate, config: SolverConfig):
    """One local step from ``it``; returns ``(iterate, LocalStepInfo)``.

    On any internal failure the returned iterate is ``it`` itself.
    """
    try:
        ctrace = constraint_step(p, it.x, it.lam, it.mu, config)
    except NpasaError:
        ctrace = ConstraintStepTrace(w=[it.x], outcome="SubsolverFailure")
    if not ctrace.ok:
        return it, LocalStepInfo(ctrace, None, ctrace.outcome)
    w = ctrace.result
    ec_w = float(p.h(w) @ p.h(w)) if p.ell else 0.0
    mtrace = multiplier_step(p, w, it.lam, it.mu, config.theta * ec_w, config)
    if not mtrace.ok:
        return it, LocalStepInfo(ctrace, mtrace, mtrace.outcome)
    out = Iterate(mtrace.z[-1], mtrace.nu[-1], mtrace.eta_prime[-1])
    return out, LocalStepInfo(ctrace, mtrace, "Success")
