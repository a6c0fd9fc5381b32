"""Newton-accelerated PIPG for block-structured strongly convex QPs."""

from .errors import (DegenerateProblem, DimensionMismatch, EigFailure, MalformedSet,
                     NonPositiveWeight, NotPositiveDefinite, ProblemError, Singular,
                     SingularMiddleFactor)
from .kkt import KktDistances, kkt_distances
from .model import (AffineSubspace, Ball, BlockBidiagonalMatrix, Box, ConeSpec, FullSpace,
                    Halfspace, Point, QpProblem, SecondOrderCone, SetConstraint, apply_h,
                    apply_h_transpose, load_problem, make_problem, operator_norm_h,
                    problem_from_dict, problem_to_dict, save_problem, validate)
from .pipg import (PipgState, StepSizes, apply_t, check_termination, choose_step_sizes,
                   m_norm_sq, rescale_rows, residual)
from .problems import OscMassConfig, PdgConfig, gen_oscillating_masses, gen_pdg
from .solver import SolveReport, SolverConfig, newton_trigger, solve

__version__ = "0.1.0"
