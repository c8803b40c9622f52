"""Small analytically solved test problems.

Every entry carries its known KKT triple and a documented cold start. Three
entries are quadratic and have a problem-file form; the Rosenbrock entry is
built directly from evaluators.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .model import NlpProblem, Polyhedron, QuadraticNlpSpec

__all__ = ["CorpusEntry", "corpus", "get"]

SQRT2 = float(np.sqrt(2.0))


@dataclass(frozen=True, eq=False)
class CorpusEntry:
    """A test problem with its analytic solution(s).

    ``solutions`` lists every global minimizer as ``(x, lam, mu)`` with
    ``mu`` in stacked order. ``x0``/``lam0`` form the documented cold start.
    """

    name: str
    problem: NlpProblem
    solutions: tuple
    x0: np.ndarray
    lam0: np.ndarray
    description: str
    spec: Optional[QuadraticNlpSpec] = None

    @property
    def x_star(self):
        return self.solutions[0][0]

    @property
    def lam_star(self):
        return self.solutions[0][1]

    @property
    def mu_star(self):
        return self.solutions[0][2]

    def distance_to_solution(self, x) -> float:
        """Distance from ``x`` to the nearest listed minimizer."""
        x = np.asarray(x, dtype=float)
        return min(float(np.linalg.norm(x - s[0])) for s in self.solutions)

    def nearest_solution(self, x):
        x = np.asarray(x, dtype=float)
        return min(self.solutions, key=lambda s: float(np.linalg.norm(x - s[0])))


def _circle_spec(c, name):
    return QuadraticNlpSpec(
        Q=np.zeros((2, 2)), c=c, P=[2.0 * np.eye(2)], a=[[0.0, 0.0]], b=[-2.0],
        omega=Polyhedron.box([0.0, 0.0], [np.inf, np.inf]), name=name)


def _lin_eq_box():
    spec = QuadraticNlpSpec(
        Q=np.eye(2), c=[0.0, 0.0], P=np.zeros((1, 2, 2)), a=[[1.0, 1.0]], b=[-2.0],
        omega=Polyhedron.box([0.0, 0.0], [np.inf, np.inf]), name="lin-eq-box")
    sol = (np.array([1.0, 1.0]), np.array([-1.0]), np.zeros(4))
    return CorpusEntry("lin-eq-box", spec.to_problem(), (sol,), np.array([2.0, 0.0]),
                       np.zeros(1), "min 1/2|x|^2 s.t. x1 + x2 = 2, x >= 0", spec)


def _circle_min():
    spec = _circle_spec([1.0, 1.0], "circle-min")
    lam = np.array([-1.0 / (2.0 * SQRT2)])
    # the bound x_j >= 0 on the zero coordinate carries multiplier 1
    sols = (
        (np.array([SQRT2, 0.0]), lam, np.array([0.0, 1.0, 0.0, 0.0])),
        (np.array([0.0, SQRT2]), lam, np.array([1.0, 0.0, 0.0, 0.0])),
    )
    return CorpusEntry("circle-min", spec.to_problem(), sols, np.array([1.3, 0.4]),
                       np.zeros(1), "min x1 + x2 s.t. x1^2 + x2^2 = 2, x >= 0", spec)


def _circle_interior():
    spec = _circle_spec([-1.0, -1.0], "circle-interior")
    sol = (np.array([1.0, 1.0]), np.array([0.5]), np.zeros(4))
    return CorpusEntry("circle-interior", spec.to_problem(), (sol,), np.array([0.9, 1.05]),
                       np.array([0.4]), "min -(x1 + x2) s.t. x1^2 + x2^2 = 2, x >= 0", spec)


def _rosen_circle():
    def f(x):
        return (1.0 - x[0]) ** 2 + 100.0 * (x[1] - x[0] ** 2) ** 2

    def grad(x):
        t = x[1] - x[0] ** 2
        return np.array([-2.0 * (1.0 - x[0]) - 400.0 * x[0] * t, 200.0 * t])

    def hess(x):
        return np.array([[2.0 - 400.0 * (x[1] - 3.0 * x[0] ** 2), -400.0 * x[0]],
                         [-400.0 * x[0], 200.0]])

    problem = NlpProblem(
        n=2, ell=1, f_eval=f, grad_f=grad,
        h_eval=lambda x: np.array([x[0] ** 2 + x[1] ** 2 - 2.0]),
        jac_h=lambda x: np.array([[2.0 * x[0], 2.0 * x[1]]]),
        omega=Polyhedron.box([-2.0, -2.0], [2.0, 2.0]),
        hess_f=hess, hess_h=lambda x: np.array([2.0 * np.eye(2)]),
        name="rosen-circle")
    sol = (np.array([1.0, 1.0]), np.array([0.0]), np.zeros(4))
    return CorpusEntry("rosen-circle", problem, (sol,), np.array([0.8, 1.1]), np.zeros(1),
                       "min (1-x1)^2 + 100(x2-x1^2)^2 s.t. x1^2 + x2^2 = 2, x in [-2, 2]^2")


_BUILDERS = {
    "lin-eq-box": _lin_eq_box,
    "circle-min": _circle_min,
    "circle-interior": _circle_interior,
    "rosen-circle": _rosen_circle,
}


def corpus() -> dict:
    """All corpus entries keyed by name."""
    return {name: build() for name, build in _BUILDERS.items()}


def get(name: str) -> CorpusEntry:
    """One corpus entry; raises ``KeyError`` listing the valid names."""
    try:
        return _BUILDERS[name]()
    except KeyError:
        raise KeyError(f"unknown corpus problem {name!r}; choose from {sorted(_BUILDERS)}") from None
