"""Lifted piecewise affine decision rules for multistage robust and stochastic programs.

The lifting maps uncertainty into a higher-dimensional space where affine
rules become piecewise affine in the original parameters; distance cuts
tighten the outer approximation of the lifted support.
"""
from __future__ import annotations

from .lifting import (AssumptionError, BreakpointGrid, Embedding, LiftingOperator, StructuralError, affine_grid,
                      ar_forward, ar_inverse_embedding, equidistant_breakpoints, fold, fold_plus, full_breakpoints,
                      hull_constraints, identity_embedding, retract)
from .reformulation import (ConstraintBlock, DualProgram, MomentData, MultistageProblem, PiecewiseAffinePolicy,
                            build_data_driven, build_robust, build_stochastic, estimate_moments, extract_policy)
from .separation import Cut, Rectangle, cut_loop, separate_bruteforce, separate_symmetric, square_cuts
from .solver import ConicProgram, SolveOptions, SolveRequest, SolveResult, solve
from .supports import (Box, EtaFunction, Intersection, NormBall, Polytope, SupportFamily, eta_box_circumscription,
                       eta_intersection, eta_norm_ball)

__version__ = "0.1.0"
