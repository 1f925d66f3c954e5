"""Smoothing of C^1 piecewise quadratic plane maps on rectangular grids."""

__version__ = "0.1.0"

from .quadmap import AffineFrame, Jet2, QuadraticMap2, det_jacobian_poly, jet2, min_quadratic_on_rect, pullback
from .partition import Partition, build_grid_partition, classify_point, plan_neighborhoods
from .compat import (PiecewiseQuadMap, certify_jacobian_floor, check_c1_edge, estimate_bilipschitz,
                     vertex_mismatch)
from .cutoff import RadialBump, TransitionProfile, chi_jet, eta_jet, verify_scaled_bounds
from .smooth import SmoothedMap, flat_smooth_jet, vertex_smooth_jet
from .pipeline import EpsilonBudget, global_smooth
from .verify import (RateFit, VerificationReport, convergence_study, injectivity_certificate,
                     jacobian_floor, sup_errors, w21_error)
from .instances import make_four_quadrant_model, make_two_cell_model, random_instance

__all__ = [name for name in dir() if not name.startswith("_")]
