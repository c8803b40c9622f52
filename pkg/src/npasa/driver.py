"""Two-phase outer loop, iteration log and convergence-rate fitting.

Phase one repeats augmented-Lagrangian global steps, growing the penalty at
every entry, until the multiplier part of the error estimator has dropped
below ``theta`` times the previous constraint violation. Phase two then
takes local steps for as long as each one contracts ``E_1`` by ``theta``; a
rejected or failed local step sends the iteration back to phase one.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from .estimators import e1, em1, e_c, estimator_report
from .exceptions import DomainError, EvaluationError, NpasaError
from .model import Iterate, NlpProblem, SolveOutcome, SolverConfig, is_feasible
from .phase1 import global_step
from .phase2 import local_step
from .projection import mu_of_x, project

__all__ = [
    "LogRecord",
    "RateFit",
    "npasa_solve",
    "fit_convergence_order",
    "write_log",
    "read_log",
]


@dataclass
class LogRecord:
    """One outer iteration, i.e. one global step or one local step.

    ``phase`` is 1 or 2 for steps and 0 for the single record describing the
    starting triple. Estimator values refer to the iterate held after the step: the new one
    when ``accepted`` is true, the unchanged previous one otherwise.
    ``E0`` is ``None`` when the triple lies outside its domain.
    """

    k: int
    phase: int
    q: float
    e: float
    E0: Optional[float]
    E1: float
    Em1: float
    Ec: float
    accepted: bool = True
    status: str = "Success"
    E1_trial: Optional[float] = None
    h_norm: float = 0.0
    constraint_iters: int = 0
    multiplier_iters: int = 0
    multiplier_retries: int = 0
    inner_iters: int = 0
    time: float = 0.0

    def to_json(self) -> str:
        # json emits floats with repr, which is the shortest round-trip form
        return json.dumps(asdict(self), allow_nan=True)

    @classmethod
    def from_json(cls, line: str) -> "LogRecord":
        data = json.loads(line)
        if not isinstance(data, dict):
            raise ValueError("log record must be a JSON object")
        return cls(**data)


@dataclass(frozen=True)
class RateFit:
    """``err_{k+1} ~ constant * err_k ** order`` fitted on a trailing window."""

    order: float
    constant: float
    window: int


def fit_convergence_order(errors, window=None) -> RateFit:
    """Least-squares fit of ``log err_{k+1}`` against ``log err_k``.

    Parameters
    ----------
    errors : sequence of float
        Error values in iteration order.
    window : int, optional
        Number of trailing entries to use (at least 3). Defaults to all.

    Examples
    --------
    >>> fit_convergence_order([1e-1, 1e-2, 1e-4, 1e-8]).order
    2.0
    """
    errs = np.asarray(errors, dtype=float).reshape(-1)
    if window is None:
        window = errs.size
    if window < 3:
        raise DomainError("window must contain at least 3 entries")
    if errs.size < window:
        raise DomainError(f"need {window} entries, got {errs.size}")
    tail = errs[errs.size - window:]
    if not (np.all(np.isfinite(tail)) and np.all(tail > 0)):
        raise DomainError("errors in the window must be finite and positive")
    u = np.log(tail[:-1])
    v = np.log(tail[1:])
    if np.ptp(u) == 0:
        raise DomainError("errors in the window are constant")
    order, intercept = np.polyfit(u, v, 1)
    return RateFit(float(order), float(math.exp(intercept)), int(window))


def write_log(records, path):
    """Write records as JSON lines."""
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(rec.to_json() + "\n")


def read_log(path):
    """Read a JSON-lines log written by :func:`write_log`."""
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                out.append(LogRecord.from_json(line))
            except (ValueError, TypeError) as exc:
                raise ValueError(f"line {lineno}: malformed log record ({exc})") from None
    return out


@dataclass
class _State:
    it: Iterate
    e: float
    k: int = 0
    q: float = 1.0
    report: object = None
    log: list = field(default_factory=list)
    events: list = field(default_factory=list)
    counters: dict = field(default_factory=lambda: {
        "global_steps": 0, "local_steps": 0, "local_rejections": 0,
        "local_failures": 0, "phase_one_entries": 0,
        "constraint_iters": 0, "multiplier_iters": 0, "inner_iters": 0,
    })


def _record(p, st, phase, accepted, status, t0, **extra):
    rep = estimator_report(p, st.it.x, st.it.lam, st.it.mu)
    st.report = rep
    h = p.h(st.it.x)
    rec = LogRecord(
        k=st.k, phase=phase, q=st.q, e=st.e, E0=rep.e0, E1=rep.e1, Em1=rep.em1,
        Ec=rep.ec, accepted=accepted, status=status,
        h_norm=float(np.linalg.norm(h)), time=time.perf_counter() - t0, **extra)
    st.log.append(rec)
    return rec


def _guard_triple(p, it):
    """``(x, lam, mu(x, 1))`` with the bound multipliers rebuilt by projection."""
    mu, _ = mu_of_x(p, it.x, it.lam, 0.0)
    return Iterate(it.x, it.lam, mu)


def npasa_solve(p: NlpProblem, x0, lam0=None, mu0=None, config: SolverConfig = None,
                callback=None) -> SolveOutcome:
    """Solve ``min f(x) s.t. h(x) = 0, x in omega`` by the two-phase method.

    Parameters
    ----------
    p : NlpProblem
    x0 : array_like, shape (n,)
        Starting point; projected onto omega first if infeasible.
    lam0 : array_like, shape (ell,), optional
        Starting equality multipliers, zero by default.
    mu0 : array_like, shape (m,), optional
        Starting stacked inequality multipliers, zero by default.
    config : SolverConfig, optional
    callback : callable, optional
        Called with each :class:`LogRecord` as it is produced.

    Returns
    -------
    SolveOutcome
        ``status`` is ``"Converged"`` once ``E_1 <= eps``,
        ``"MaxOuterIterations"`` when the step budget runs out, and
        ``"Failed"`` when an evaluation or subproblem fails in phase one.
    """
    config = config or SolverConfig()
    t0 = time.perf_counter()
    x0 = np.asarray(x0, dtype=float).reshape(-1)
    if x0.size != p.n:
        raise DomainError(f"x0 must have length {p.n}")
    lam0 = np.zeros(p.ell) if lam0 is None else lam0
    mu0 = np.zeros(p.m) if mu0 is None else mu0
    events = []
    if not is_feasible(p.omega, x0, 1e-12):
        x0 = project(p.omega, x0).y_star
        events.append("initial point projected onto omega")
    it = Iterate(x0, lam0, mu0).check(p)
    st = _State(it=it, e=e1(p, it.x, it.lam, it.mu), q=config.q0, events=events)
    eps = config.eps

    def emit(rec):
        if callback is not None:
            callback(rec)

    def finish(status, it=None):
        final = it if it is not None else st.it
        try:
            rep = estimator_report(p, final.x, final.lam, final.mu)
        except EvaluationError:
            # keep the report of the last iterate that evaluated cleanly
            rep = st.report
        return SolveOutcome(status, final, rep, st.log, st.counters, st.events)

    emit(_record(p, st, 0, True, "Start", t0))
    if st.e <= eps:
        return finish("Converged")

    e_hist = [st.e]        # e_0, e_1, ...; e_{-1} is taken to be e_0
    q_prev = config.q0     # q_{k-1}, seeded with q_0
    steps = 0
    try:
        while True:
            # phase one
            e_prev = e_hist[st.k - 1] if st.k >= 1 else e_hist[0]
            st.q = max(config.phi, 1.0 / e_prev if e_prev > 0 else math.inf) * q_prev
            if not math.isfinite(st.q):
                st.q = config.phi * q_prev
            st.counters["phase_one_entries"] += 1
            go_phase_two = False
            while True:
                guard = _guard_triple(p, st.it)
                if e1(p, guard.x, guard.lam, guard.mu) <= eps:
                    st.events.append(f"converged in phase one at k={st.k}")
                    return finish("Converged", guard)
                if steps >= config.max_outer:
                    return finish("MaxOuterIterations")
                x_prev = st.it.x
                new, info = global_step(p, st.it, st.q, config, info=True)
                steps += 1
                st.counters["global_steps"] += 1
                st.counters["inner_iters"] += info.inner_iterations
                st.it = new
                st.e = min(e1(p, new.x, new.lam, new.mu), st.e)
                st.k += 1
                e_hist.append(st.e)
                rec = _record(p, st, 1, True, info.inner_status, t0,
                              inner_iters=info.inner_iterations)
                emit(rec)
                if em1(p, new.x, new.lam, new.mu) <= config.theta * e_c(p, x_prev):
                    go_phase_two = True
                    break
            q_prev = st.q
            # phase two
            while go_phase_two:
                cur = st.it
                e1_cur = e1(p, cur.x, cur.lam, cur.mu)
                if e1_cur <= eps:
                    return finish("Converged")
                if steps >= config.max_outer:
                    return finish("MaxOuterIterations")
                trial, info = local_step(p, cur, config)
                steps += 1
                st.counters["local_steps"] += 1
                ci = info.constraint.iterations
                mi = info.multiplier.iterations if info.multiplier is not None else 0
                retries = info.multiplier.retries if info.multiplier is not None else 0
                st.counters["constraint_iters"] += ci
                st.counters["multiplier_iters"] += mi
                e1_trial = e1(p, trial.x, trial.lam, trial.mu)
                extra = dict(E1_trial=e1_trial, constraint_iters=ci, multiplier_iters=mi,
                             multiplier_retries=retries)
                if info.status != "Success":
                    st.counters["local_failures"] += 1
                if e1_trial > config.theta * e1_cur:
                    st.counters["local_rejections"] += 1
                    rec = _record(p, st, 2, False, info.status, t0, **extra)
                    emit(rec)
                    break
                st.it = trial
                st.e = min(e1_trial, st.e)
                st.k += 1
                e_hist.append(st.e)
                rec = _record(p, st, 2, True, info.status, t0, **extra)
                emit(rec)
    except (EvaluationError, NpasaError) as exc:
        st.events.append(f"{type(exc).__name__}: {exc}")
        return finish("Failed")
