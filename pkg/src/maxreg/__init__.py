"""Desk-scale laboratory for maximal L2-regularity of non-autonomous
parabolic problems ``u'(t) + A(t) u(t) = f(t)``."""
from .gelfand import GelfandTriple, TripleError, make_triple
from .formpath import (FormPath, HypothesisConstants, HypothesisError, PathTooRough,
                       Subdivision, diff_norm, difference_bound, forward_difference_certificate,
                       sobolev_seminorm, subdivide, subdivision_certificate, verify_hypotheses)
from .funcalc import BackendError, CalculusEngine, FrozenOperator, exponential_kernel_check
from .duhamel import (SolveConfig, SolverDidNotConverge, SolverRejected, Trajectory,
                      apply_L, apply_L0, apply_R, apply_R0, apply_S, apply_S0,
                      duhamel_residual, nu_shift, nu_unshift, refine_grid,
                      s0_operator_norm_estimate, solve_contraction_gamma0, solve_neumann,
                      solve_reference, solve_shifted)
from .estimates import (EstimateReport, apriori_constant, apriori_stability, l_boundedness,
                        linf_v_estimate, lp_quadratic_estimate, quadratic_estimate,
                        resolvent_suite)
from .problems import (CoefficientPath, Fem1D, ParseError, Problem, assemble_elliptic,
                       assemble_lower_order, assemble_robin, assemble_scalar, export_path,
                       generate_path, ingest, load_problem, robin_diff_norm)

__version__ = "0.1.0"
