"""Verification toolkit for conformal vector fields on flat pseudo-Euclidean
spaces: form algebra, the closed-form field family and its identities,
per-zero classification, zero-set discovery, and geodesic transport checks.
"""

from .forms import (ConePrediction, EmptyNullConeError, FormError, MetricForm,
                    Subspace, diag_form, is_semidefinite, nullspace,
                    orthogonal_complement, predicted_radial_directions,
                    sample_null_cone, signature)
from .flatfield import (ConformalFieldParams, DegenerateMetricError,
                        FieldError, NotAZeroError, PointClassification,
                        PreconditionError, QuadraticPolynomial, ZeroModel,
                        basis_dimension, classify_zero, conformal_factor,
                        evaluate, gradient, hessian_identity_check,
                        kernel_structure_check, killing_gauge_residual,
                        lie_derivative_residual, predicted_zero_model,
                        radial_factor, second_derivative_residual)
from .geodesics import (GeodesicState, char_poly_constancy, initial_state,
                        interior_vanishing_scan, lemma_zeros_check,
                        nvprl_proportionality, propagate)
from .zerovariety import (ProductField2D, ZeroSample, compare_to_model,
                          connecting_limit_estimate, divergence_constancy,
                          find_zeros, radial_direction_audit,
                          second_fundamental_form, singular_set_check,
                          surface_counterexample, umbilicity_check)

__version__ = "0.1.0"
