"""Numerical verification of kinematic formulas for functional intrinsic volumes
and functional Minkowski vectors on finite convex functions."""

from .convexfn import (Affine, Cone, ConvexFunction, HalfCone, Norm, NonnegCombination,
                       Quadratic, QuarticNorm, Ridge, Rotated, SupportBall, SupportEllipse,
                       eval_sum_cases, evaluate, gradient, hessian, prox, subdiff)
from .kinematics import (KinematicExperiment, classical_balls, corollary_rhs, lhs_vector,
                         main_theorem_report, rhs_vector, scalar_kinematic, z_closed_form)
from .measures import (MeasureQuery, SteinerSampler, ma_j_integral, phi_integral_smooth,
                       phi_region_oracle, phi_weighted_oracle)
from .numerics import WeightedIntegral, elem_sym, haar_rotation, kappa, mixed_det_two, steiner_fit
from .reports import VerificationReport
from .transforms import PiecewiseLinear, R_apply, R_partial, R_power, kernel_make, tent
from .valuations import ValuationSpec, closed_form_v_t, closed_form_w_s, minkowski_vanishing, t_star, v_star

__version__ = "0.1.0"
