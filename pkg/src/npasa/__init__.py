"""Two-phase solver for nonlinear programs over polyhedra.

Phase one minimizes an augmented Lagrangian over the polyhedron; phase two
alternates constraint restoration and multiplier refinement and converges
quadratically near a nondegenerate solution. KKT error estimators decide
when to switch between the phases.
"""

from .corpus import CorpusEntry, corpus
from .driver import LogRecord, RateFit, fit_convergence_order, npasa_solve, read_log, write_log
from .estimators import (EstimatorReport, e0, e1, e_c, em0, em1, estimator_report,
                         kkt_residuals, lagrangian_gradient, licq_holds, phi_min,
                         strict_complementarity)
from .exceptions import (DomainError, EvaluationError, InfeasibleError, InternalError,
                         NpasaError, ProblemFormatError, SubsolverFailure)
from .model import (Iterate, NlpProblem, Polyhedron, QuadraticNlpSpec, SolveOutcome,
                    SolverConfig, format_problem, is_feasible, load_problem, parse_problem,
                    stacked_residual)
from .phase1 import AugmentedLagrangian, global_step, safeguard_lambda
from .phase2 import choose_penalty, constraint_step, local_step, multiplier_step
from .projection import ProjectionResult, mu_of_x, project, recover_multipliers
from .subsolve import (SmoothObjective, SubsolveReport, least_distance_linearized,
                       minimize_em0_regularized, minimize_em1_over_eta, minimize_over_polyhedron)

__version__ = "0.1.0"
