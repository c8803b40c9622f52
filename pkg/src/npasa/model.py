"""Problem representation, solver configuration and iterate bookkeeping.

The feasible set is stored in the general two-sided form

    row_lo <= A x <= row_hi,    box_lo <= x <= box_hi,

and every estimator consumes the stacked inequality view

    r(x) = [row_lo - A x; A x - row_hi; box_lo - x; x - box_hi] <= 0,

whose Jacobian is the constant matrix ``[-A; A; -I; I]``. Entries built from
infinite bounds evaluate to ``-inf`` and are never active; their multipliers
are kept at zero.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .exceptions import DomainError, EvaluationError, ProblemFormatError

__all__ = [
    "Polyhedron",
    "NlpProblem",
    "QuadraticNlpSpec",
    "Iterate",
    "SolverConfig",
    "SolveOutcome",
    "stacked_residual",
    "is_feasible",
    "load_problem",
    "parse_problem",
    "format_problem",
]

SYMMETRY_TOL = 1e-12


def _as_vector(values, n, name):
    v = np.asarray(values, dtype=float).reshape(-1)
    if v.shape != (n,):
        raise DomainError(f"{name} must have length {n}, got {v.size}")
    return v


@dataclass(frozen=True, eq=False)
class Polyhedron:
    """Polyhedron ``{x : row_lo <= A x <= row_hi, box_lo <= x <= box_hi}``.

    Equality rows are encoded with ``row_lo == row_hi``. Bounds may be
    infinite. Instances are immutable; arrays are copied and marked
    read-only at construction.
    """

    A: np.ndarray
    row_lo: np.ndarray
    row_hi: np.ndarray
    box_lo: np.ndarray
    box_hi: np.ndarray

    def __post_init__(self):
        box_lo = np.array(self.box_lo, dtype=float).reshape(-1)
        n = box_lo.size
        A = np.array(self.A, dtype=float)
        if A.size == 0:
            A = A.reshape(0, n)
        if A.ndim != 2 or A.shape[1] != n:
            raise DomainError(f"A must have {n} columns, got shape {A.shape}")
        m_rows = A.shape[0]
        row_lo = _as_vector(self.row_lo, m_rows, "row_lo")
        row_hi = _as_vector(self.row_hi, m_rows, "row_hi")
        box_hi = _as_vector(self.box_hi, n, "box_hi")
        for arr, name in ((A, "A"), (row_lo, "row_lo"), (row_hi, "row_hi"),
                          (box_lo, "box_lo"), (box_hi, "box_hi")):
            if np.isnan(arr).any():
                raise DomainError(f"{name} contains NaN")
        if not np.isfinite(A).all():
            raise DomainError("A must be finite")
        if np.any(row_lo > row_hi):
            j = int(np.argmax(row_lo > row_hi))
            raise DomainError(f"row_lo > row_hi in row {j}")
        if np.any(box_lo > box_hi):
            i = int(np.argmax(box_lo > box_hi))
            raise DomainError(f"box_lo > box_hi in component {i}")
        if np.any(row_lo == np.inf) or np.any(row_hi == -np.inf):
            raise DomainError("row bounds exclude every point")
        if np.any(box_lo == np.inf) or np.any(box_hi == -np.inf):
            raise DomainError("box bounds exclude every point")
        for name, arr in (("A", A), ("row_lo", row_lo), ("row_hi", row_hi),
                          ("box_lo", box_lo), ("box_hi", box_hi)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @classmethod
    def box(cls, lo, hi):
        """Polyhedron with bound constraints only."""
        lo = np.asarray(lo, dtype=float).reshape(-1)
        return cls(np.zeros((0, lo.size)), [], [], lo, hi)

    @classmethod
    def free(cls, n):
        return cls.box(np.full(n, -np.inf), np.full(n, np.inf))

    @property
    def n(self) -> int:
        return self.box_lo.size

    @property
    def m_rows(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        """Length of the stacked inequality vector."""
        return 2 * self.m_rows + 2 * self.n

    @property
    def jacobian(self) -> np.ndarray:
        """Constant Jacobian ``[-A; A; -I; I]`` of the stacked residual."""
        eye = np.eye(self.n)
        return np.vstack([-self.A, self.A, -eye, eye])

    @property
    def finite_mask(self) -> np.ndarray:
        """True for stacked rows whose bound is finite."""
        return np.concatenate([
            np.isfinite(self.row_lo), np.isfinite(self.row_hi),
            np.isfinite(self.box_lo), np.isfinite(self.box_hi),
        ])

    def with_equality_rows(self, G, rhs) -> "Polyhedron":
        """Return a new polyhedron with the rows ``G x = rhs`` appended."""
        G = np.atleast_2d(np.asarray(G, dtype=float))
        rhs = np.asarray(rhs, dtype=float).reshape(-1)
        if G.size == 0:
            return self
        return Polyhedron(
            np.vstack([self.A, G]),
            np.concatenate([self.row_lo, rhs]),
            np.concatenate([self.row_hi, rhs]),
            self.box_lo, self.box_hi,
        )

    def split_stacked(self, mu):
        """Split a stacked vector into its four blocks (row lo, row hi, box lo, box hi)."""
        mu = np.asarray(mu, dtype=float)
        mr, n = self.m_rows, self.n
        return mu[:mr], mu[mr:2 * mr], mu[2 * mr:2 * mr + n], mu[2 * mr + n:]


def stacked_residual(poly: Polyhedron, x) -> np.ndarray:
    """Evaluate ``r(x)`` for the stacked view of ``poly``.

    Entries built from infinite bounds are ``-inf``.

    >>> poly = Polyhedron.box([0.0, 0.0], [1.0, 1.0])
    >>> stacked_residual(poly, [-0.5, 0.3]).tolist()
    [0.5, -0.3, -0.5, -0.7]
    """
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.size != poly.n:
        raise DomainError(f"x must have length {poly.n}, got {x.size}")
    Ax = poly.A @ x
    with np.errstate(invalid="ignore"):
        r = np.concatenate([poly.row_lo - Ax, Ax - poly.row_hi,
                            poly.box_lo - x, x - poly.box_hi])
    # inf - inf cannot arise: finite x and A give finite Ax.
    return r


def is_feasible(poly: Polyhedron, x, tol: float = 0.0) -> bool:
    """True when every stacked inequality holds to within ``tol``."""
    if tol < 0:
        raise DomainError("tol must be nonnegative")
    r = stacked_residual(poly, x)
    return bool(r.size == 0 or np.max(r) <= tol)


def _check_finite(value, what):
    arr = np.asarray(value, dtype=float)
    if np.isnan(arr).any():
        raise EvaluationError(f"{what} returned NaN")
    return arr


@dataclass(frozen=True, eq=False)
class NlpProblem:
    """Nonlinear program ``min f(x) s.t. h(x) = 0, x in omega``.

    ``hess_f`` and ``hess_h`` are optional; when absent, inner Newton steps
    fall back to finite differences of the gradients. ``hess_h(x)`` returns
    an array of shape ``(ell, n, n)``.
    """

    n: int
    ell: int
    f_eval: Callable
    grad_f: Callable
    h_eval: Callable
    jac_h: Callable
    omega: Polyhedron
    hess_f: Optional[Callable] = None
    hess_h: Optional[Callable] = None
    name: str = ""

    def __post_init__(self):
        if self.omega.n != self.n:
            raise DomainError(f"omega has dimension {self.omega.n}, expected {self.n}")
        if self.n < 1 or self.ell < 0:
            raise DomainError("need n >= 1 and ell >= 0")

    # Evaluation wrappers: shape-checked and NaN-checked.
    def f(self, x) -> float:
        val = float(_check_finite(self.f_eval(x), "f"))
        return val

    def grad(self, x) -> np.ndarray:
        g = _check_finite(self.grad_f(x), "grad_f").reshape(-1)
        if g.shape != (self.n,):
            raise EvaluationError(f"grad_f returned shape {g.shape}")
        return g

    def h(self, x) -> np.ndarray:
        if self.ell == 0:
            return np.zeros(0)
        v = _check_finite(self.h_eval(x), "h").reshape(-1)
        if v.shape != (self.ell,):
            raise EvaluationError(f"h returned shape {v.shape}")
        return v

    def jac(self, x) -> np.ndarray:
        if self.ell == 0:
            return np.zeros((0, self.n))
        J = _check_finite(self.jac_h(x), "jac_h").reshape(self.ell, self.n)
        return J

    def hessians(self, x):
        """Return ``(hess_f(x), hess_h(x))`` or ``None`` if not provided."""
        if self.hess_f is None or (self.ell and self.hess_h is None):
            return None
        Hf = _check_finite(self.hess_f(x), "hess_f").reshape(self.n, self.n)
        if self.ell:
            Hh = _check_finite(self.hess_h(x), "hess_h").reshape(self.ell, self.n, self.n)
        else:
            Hh = np.zeros((0, self.n, self.n))
        return Hf, Hh

    @property
    def m(self) -> int:
        return self.omega.m


@dataclass(frozen=True, eq=False)
class QuadraticNlpSpec:
    """Quadratic objective with quadratic equality constraints.

    ``f(x) = 1/2 x'Qx + c'x`` and ``h_j(x) = 1/2 x'P_j x + a_j'x + b_j``.
    ``x0``/``lam0`` optionally give a starting point and ``x_star``/``lam_star``
    a claimed solution, which the ``check`` command verifies.
    """

    Q: np.ndarray
    c: np.ndarray
    P: np.ndarray
    a: np.ndarray
    b: np.ndarray
    omega: Polyhedron
    name: str = ""
    x0: Optional[np.ndarray] = None
    lam0: Optional[np.ndarray] = None
    x_star: Optional[np.ndarray] = None
    lam_star: Optional[np.ndarray] = None

    def __post_init__(self):
        n = self.omega.n
        Q = np.array(self.Q, dtype=float).reshape(n, n)
        c = _as_vector(self.c, n, "c")
        a = np.array(self.a, dtype=float)
        ell = a.shape[0] if a.size else 0
        a = a.reshape(ell, n)
        P = np.array(self.P, dtype=float).reshape(ell, n, n)
        b = _as_vector(self.b, ell, "b")
        if not np.allclose(Q, Q.T, rtol=0, atol=SYMMETRY_TOL):
            raise DomainError("Q is not symmetric")
        for j in range(ell):
            if not np.allclose(P[j], P[j].T, rtol=0, atol=SYMMETRY_TOL):
                raise DomainError(f"P{j + 1} is not symmetric")
        for name, arr in (("Q", Q), ("c", c), ("P", P), ("a", a), ("b", b)):
            if not np.isfinite(arr).all():
                raise DomainError(f"{name} must be finite")
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        for name, length in (("x0", n), ("lam0", ell), ("x_star", n), ("lam_star", ell)):
            value = getattr(self, name)
            if value is not None:
                v = _as_vector(value, length, name)
                if not np.isfinite(v).all():
                    raise DomainError(f"{name} must be finite")
                v.setflags(write=False)
                object.__setattr__(self, name, v)

    @property
    def n(self):
        return self.omega.n

    @property
    def ell(self):
        return self.a.shape[0]

    def to_problem(self) -> NlpProblem:
        Q, c, P, a, b = self.Q, self.c, self.P, self.a, self.b

        def f(x):
            x = np.asarray(x, dtype=float)
            return 0.5 * x @ Q @ x + c @ x

        def grad_f(x):
            return Q @ np.asarray(x, dtype=float) + c

        def h(x):
            x = np.asarray(x, dtype=float)
            return 0.5 * np.einsum("i,jik,k->j", x, P, x) + a @ x + b

        def jac_h(x):
            return P @ np.asarray(x, dtype=float) + a

        return NlpProblem(
            n=self.n, ell=self.ell, f_eval=f, grad_f=grad_f, h_eval=h,
            jac_h=jac_h, omega=self.omega,
            hess_f=lambda x: Q, hess_h=lambda x: P, name=self.name,
        )


@dataclass(frozen=True, eq=False)
class Iterate:
    """Primal-dual triple ``(x, lam, mu)`` with ``mu`` over stacked inequalities."""

    x: np.ndarray
    lam: np.ndarray
    mu: np.ndarray

    def __post_init__(self):
        for name in ("x", "lam", "mu"):
            arr = np.array(getattr(self, name), dtype=float).reshape(-1)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    def check(self, problem: NlpProblem, require_nonneg=True):
        if self.x.size != problem.n or self.lam.size != problem.ell or self.mu.size != problem.m:
            raise DomainError(
                f"iterate shapes ({self.x.size}, {self.lam.size}, {self.mu.size}) do not "
                f"match problem ({problem.n}, {problem.ell}, {problem.m})")
        if require_nonneg and np.any(self.mu < 0):
            raise DomainError("mu must be nonnegative")
        return self


@dataclass(frozen=True)
class SolverConfig:
    """Parameters of the two-phase solver.

    Defaults favour robustness on small dense problems; the method itself
    only prescribes ranges. ``em1_floor`` is the smallest estimator value any
    inner loop is asked to reach; ``None`` means ``1e-2 * eps**2``.
    """

    eps: float = 1e-8
    theta: float = 0.75
    phi: float = 10.0
    lambda_bar: float = 1e6
    q0: float = 1.0
    alpha: float = 0.25
    beta: float = 1.0
    sigma: float = 0.5
    tau: float = 0.1
    p_init: float = 10.0
    delta: float = 0.9
    gamma: float = 1e-12
    inner_tol: float = 1e-10
    max_outer: int = 100
    max_constraint_iters: int = 50
    max_multiplier_iters: int = 50
    max_backtracks: int = 60
    max_inner_iters: int = 500
    s_min: float = 1e-10
    em1_floor: Optional[float] = None
    exact_em1: bool = False

    def __post_init__(self):
        checks = [
            ("eps", self.eps >= 0),
            ("theta", 0 < self.theta < 1),
            ("phi", self.phi > 1),
            ("lambda_bar", self.lambda_bar > 0),
            ("q0", self.q0 >= 1),
            ("alpha", 0 < self.alpha <= 1),
            ("beta", self.beta >= 1),
            ("sigma", 0 < self.sigma < 1),
            ("tau", 0 < self.tau < 1),
            ("p_init", self.p_init >= 1),
            ("delta", 0 < self.delta < 1),
            ("gamma", self.gamma > 0),
            ("inner_tol", self.inner_tol > 0),
            ("s_min", 0 < self.s_min < 1),
            ("em1_floor", self.em1_floor is None or self.em1_floor >= 0),
        ]
        for name in ("max_outer", "max_constraint_iters", "max_multiplier_iters",
                     "max_backtracks", "max_inner_iters"):
            value = getattr(self, name)
            checks.append((name, isinstance(value, (int, np.integer)) and value > 0))
        for name, ok in checks:
            if not ok:
                raise DomainError(f"invalid SolverConfig.{name} = {getattr(self, name)!r}")

    @property
    def floor(self) -> float:
        if self.em1_floor is not None:
            return self.em1_floor
        return 1e-2 * self.eps ** 2


@dataclass
class SolveOutcome:
    """Result of a full solve."""

    status: str
    iterate: Iterate
    report: object
    log: list = field(default_factory=list)
    counters: dict = field(default_factory=dict)
    events: list = field(default_factory=list)

    @property
    def converged(self) -> bool:
        return self.status == "Converged"


# ---------------------------------------------------------------------------
# Problem files
# ---------------------------------------------------------------------------

_MATRIX_KEY = re.compile(r"^(Q|A|P(\d+))$")
_VECTOR_KEY = re.compile(r"^(c|row_lo|row_hi|box_lo|box_hi|x0|lambda0|x_star|lambda_star|a(\d+))$")
_SCALAR_KEY = re.compile(r"^(n|ell|b(\d+))$")


def _parse_number(token, line, key):
    try:
        value = float(token)
    except ValueError:
        raise ProblemFormatError(f"not a number: {token!r}", line, key) from None
    if math.isnan(value):
        raise ProblemFormatError("NaN is not allowed", line, key)
    return value


def parse_problem(text: str) -> QuadraticNlpSpec:
    """Parse problem-file text into a :class:`QuadraticNlpSpec`.

    See ``docs/problem-format.md`` for the grammar.
    """
    entries = {}
    lines_of = {}
    current = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].rstrip()
        if not line.strip():
            continue
        if line[0] in " \t":
            if current is None or not _MATRIX_KEY.match(current):
                raise ProblemFormatError("indented row outside a matrix block", lineno)
            row = [_parse_number(t, lineno, current) for t in line.split()]
            entries[current].append((lineno, row))
            continue
        if ":" not in line:
            raise ProblemFormatError("expected 'key: value'", lineno)
        key, _, rest = line.partition(":")
        key = key.strip()
        rest = rest.strip()
        if key in entries:
            raise ProblemFormatError("duplicate key", lineno, key)
        lines_of[key] = lineno
        if key == "name":
            entries[key] = rest
            current = None
        elif _MATRIX_KEY.match(key):
            if rest:
                raise ProblemFormatError("matrix rows go on indented lines", lineno, key)
            entries[key] = []
            current = key
        elif _VECTOR_KEY.match(key):
            entries[key] = [_parse_number(t, lineno, key) for t in rest.split()]
            current = None
        elif _SCALAR_KEY.match(key):
            tokens = rest.split()
            if len(tokens) != 1:
                raise ProblemFormatError("expected a single value", lineno, key)
            entries[key] = _parse_number(tokens[0], lineno, key)
            current = None
        else:
            raise ProblemFormatError("unknown key", lineno, key)

    def need(key):
        if key not in entries:
            raise ProblemFormatError("missing required field", None, key)
        return entries[key]

    def as_int(key):
        value = need(key)
        if value != int(value) or value < 0:
            raise ProblemFormatError("expected a nonnegative integer", lines_of[key], key)
        return int(value)

    def matrix(key, rows, cols):
        block = entries[key]
        if rows is not None and len(block) != rows:
            raise ProblemFormatError(f"expected {rows} rows, got {len(block)}", lines_of[key], key)
        for lineno, row in block:
            if len(row) != cols:
                raise ProblemFormatError(f"expected {cols} columns, got {len(row)}", lineno, key)
        return np.array([row for _, row in block], dtype=float).reshape(len(block), cols)

    def vector(key, length, default):
        if key not in entries:
            return np.full(length, default, dtype=float)
        v = entries[key]
        if len(v) != length:
            raise ProblemFormatError(f"expected {length} values, got {len(v)}", lines_of[key], key)
        return np.array(v, dtype=float)

    n = as_int("n")
    ell = as_int("ell")
    if n < 1:
        raise ProblemFormatError("n must be positive", lines_of["n"], "n")
    for key in entries:
        m = re.match(r"^[Pab](\d+)$", key)
        if m and not 1 <= int(m.group(1)) <= ell:
            raise ProblemFormatError(f"constraint index out of range 1..{ell}", lines_of[key], key)
    need("Q")
    Q = matrix("Q", n, n)
    c = vector("c", n, 0.0)
    P = np.zeros((ell, n, n))
    a = np.zeros((ell, n))
    b = np.zeros(ell)
    for j in range(1, ell + 1):
        if f"P{j}" in entries:
            P[j - 1] = matrix(f"P{j}", n, n)
        a[j - 1] = vector(f"a{j}", n, 0.0)
        if f"b{j}" in entries:
            b[j - 1] = entries[f"b{j}"]
    A = matrix("A", None, n) if "A" in entries else np.zeros((0, n))
    m_rows = A.shape[0]
    if m_rows and ("row_lo" not in entries or "row_hi" not in entries):
        raise ProblemFormatError("row_lo and row_hi are required when A has rows", None, "row_lo")
    row_lo = vector("row_lo", m_rows, -np.inf)
    row_hi = vector("row_hi", m_rows, np.inf)
    box_lo = vector("box_lo", n, -np.inf)
    box_hi = vector("box_hi", n, np.inf)

    if not np.allclose(Q, Q.T, rtol=0, atol=SYMMETRY_TOL):
        raise ProblemFormatError("matrix is not symmetric", lines_of["Q"], "Q")
    for j in range(ell):
        if not np.allclose(P[j], P[j].T, rtol=0, atol=SYMMETRY_TOL):
            key = f"P{j + 1}"
            raise ProblemFormatError("matrix is not symmetric", lines_of.get(key), key)
    for key, lo, hi in (("row_lo", row_lo, row_hi), ("box_lo", box_lo, box_hi)):
        if np.any(lo > hi):
            raise ProblemFormatError("lower bound exceeds upper bound", lines_of.get(key), key)
    points = {}
    for key, field_name, length in (("x0", "x0", n), ("lambda0", "lam0", ell),
                                    ("x_star", "x_star", n), ("lambda_star", "lam_star", ell)):
        if key in entries:
            v = vector(key, length, 0.0)
            if not np.isfinite(v).all():
                raise ProblemFormatError("point coordinates must be finite", lines_of[key], key)
            points[field_name] = v
    try:
        omega = Polyhedron(A, row_lo, row_hi, box_lo, box_hi)
        return QuadraticNlpSpec(Q, c, P, a, b, omega, name=entries.get("name", ""), **points)
    except DomainError as exc:
        raise ProblemFormatError(str(exc)) from exc


def load_problem(text: str) -> NlpProblem:
    """Parse problem-file text and return the evaluator-backed problem."""
    return parse_problem(text).to_problem()


def _fmt(values: Sequence[float]) -> str:
    return " ".join(repr(float(v)) for v in values)


def format_problem(spec: QuadraticNlpSpec) -> str:
    """Serialize ``spec``; :func:`parse_problem` inverts this bit-exactly."""
    poly = spec.omega
    out = []
    if spec.name:
        out.append(f"name: {spec.name}")
    out.append(f"n: {spec.n}")
    out.append(f"ell: {spec.ell}")
    out.append("Q:")
    out.extend("  " + _fmt(row) for row in spec.Q)
    out.append(f"c: {_fmt(spec.c)}")
    for j in range(spec.ell):
        out.append(f"P{j + 1}:")
        out.extend("  " + _fmt(row) for row in spec.P[j])
        out.append(f"a{j + 1}: {_fmt(spec.a[j])}")
        out.append(f"b{j + 1}: {float(spec.b[j])!r}")
    out.append("A:")
    out.extend("  " + _fmt(row) for row in poly.A)
    out.append(f"row_lo: {_fmt(poly.row_lo)}")
    out.append(f"row_hi: {_fmt(poly.row_hi)}")
    out.append(f"box_lo: {_fmt(poly.box_lo)}")
    out.append(f"box_hi: {_fmt(poly.box_hi)}")
    for key, value in (("x0", spec.x0), ("lambda0", spec.lam0),
                       ("x_star", spec.x_star), ("lambda_star", spec.lam_star)):
        if value is not None:
            out.append(f"{key}: {_fmt(value)}")
    return "\n".join(out) + "\n"
