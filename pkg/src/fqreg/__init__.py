"""Functional linear quantile regression on a principal component basis."""

from .covariance import EigenSystem, KernelOnGrid, ScoresMatrix, compute_scores, eigendecompose, empirical_kernel
from .curves import (
    DiscreteCurve,
    GridFunction,
    InterpolationRule,
    curve_mean,
    interpolate,
    l2_inner,
    load_curves,
)
from .estimator import (
    FqrModel,
    QuantileIndexSet,
    SlopeSurface,
    fit_fqr,
    normal_equation_residual,
    predict_quantile,
    slope_surface,
)
from .exceptions import FqrError, SolverError, ValidationError
from .model_select import CriterionKind, criterion_at, integrated_criterion, select_cutoff
from .monotonize import QuantileCurve, blend, isotonize_pava, lq_error, rearrange
from .qr_solver import QrSolution, check_loss, solve_check_loss, subgradient_vector
from .regressor import FunctionalQuantileRegressor

__version__ = "0.1.0"
