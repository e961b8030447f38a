"""scikit-learn compatible front end for functional quantile regression."""

import numbers

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import check_finite_vector, check_levels
from .covariance import project_scores
from .curves import DEFAULT_GRID_SIZE, InterpolationRule
from .estimator import curves_to_grid, fit_basis, fit_from_basis, slope_surface
from .exceptions import ValidationError
from .model_select import CriterionKind, loss_path, select_from_path
from .monotonize import monotonize_rows
from .qr_solver import check_function


class FunctionalQuantileRegressor(TransformerMixin, BaseEstimator):
    """Functional linear quantile regression on a principal component basis.

    Parameters
    ----------
    quantiles : sequence of float, default=(0.5,)
        Quantile levels, strictly increasing inside [0.01, 0.99].
    n_components : int or {'aic', 'bic', 'gacv'}, default=3
        Cut-off level ``m``, or the integrated criterion used to choose it.
    max_components : int, default=20
        Largest candidate ``m`` scanned when ``n_components`` is a criterion.
    interpolation : {'left_step', 'midpoint_step'}, default='left_step'
    grid_size : int, default=201
        Size of the uniform evaluation grid on [0, 1].
    monotonize : {None, 'rearrange', 'isotonize', 'blend'}, default=None
        Post-processing applied by :meth:`predict` across quantile levels.
    blend_weight : float, default=0.5
        Weight of the rearranged curve when ``monotonize='blend'``.

    Attributes
    ----------
    model_ : FqrModel
    n_components_ : int
    criterion_scores_ : dict or None
        Integrated criterion per candidate ``m`` when selection was used.
    intercept_ : ndarray of shape (n_quantiles,)
    coef_ : ndarray of shape (n_quantiles, n_components_)
        Coefficients in principal-score coordinates.
    slope_ : ndarray of shape (n_quantiles, grid_size)
        Slope function ``b(t, u)`` on the evaluation grid.

    Notes
    -----
    ``X`` is an ``(n, L + 1)`` array of curve values sampled at
    ``sample_times`` (equally spaced on [0, 1] by default), or a list of
    :class:`~fqreg.curves.DiscreteCurve`.
    """

    def __init__(self, quantiles=(0.5,), n_components=3, max_components=20,
                 interpolation="left_step", grid_size=DEFAULT_GRID_SIZE,
                 monotonize=None, blend_weight=0.5):
        self.quantiles = quantiles
        self.n_components = n_components
        self.max_components = max_components
        self.interpolation = interpolation
        self.grid_size = grid_size
        self.monotonize = monotonize
        self.blend_weight = blend_weight

    def _grid(self, X, sample_times=None):
        return curves_to_grid(X, InterpolationRule.coerce(self.interpolation), self.grid_size, sample_times)

    def fit(self, X, y, sample_times=None):
        levels = check_levels(self.quantiles)
        rule = InterpolationRule.coerce(self.interpolation)
        Xg = self._grid(X, sample_times)
        y = check_finite_vector(y, "y", length=Xg.shape[0])
        if isinstance(self.n_components, numbers.Integral) and not isinstance(self.n_components, bool):
            m = int(self.n_components)
            if Xg.shape[0] < m + 2:
                raise ValidationError(f"need n >= m + 2, got n={Xg.shape[0]}, m={m}")
            mean, eig = fit_basis(Xg, m)
            self.model_ = fit_from_basis(Xg, y, levels, m, rule, mean, eig)
            self.criterion_scores_ = None
        else:
            kind = CriterionKind.coerce(self.n_components)
            models, n = loss_path(None, y, levels, list(range(1, self.max_components + 1)), rule,
                                  self.grid_size, X=Xg)
            m, scores = select_from_path(kind, models, n)
            self.model_ = models[m]
            self.criterion_scores_ = scores
        coefs = self.model_.coefficient_matrix()
        self.n_components_ = self.model_.m
        self.intercept_ = coefs[:, 0]
        self.coef_ = coefs[:, 1:]
        self.slope_ = slope_surface(self.model_).values
        return self

    def transform(self, X, sample_times=None):
        """Principal scores ``xi_1..xi_m`` of new curves."""
        check_is_fitted(self, "model_")
        Xg = self._grid(X, sample_times)
        return project_scores(Xg, self.model_.mean_curve.values, self.model_.eig, self.model_.m)[:, 1:]

    def predict(self, X, sample_times=None):
        """Conditional quantile predictions, shape ``(n,)`` for one level else ``(n, K)``."""
        check_is_fitted(self, "model_")
        pred = self.model_.predict_matrix(self._grid(X, sample_times))
        if self.monotonize is not None:
            pred = monotonize_rows(pred, self.monotonize, self.blend_weight)
        return pred[:, 0] if pred.shape[1] == 1 else pred

    def score(self, X, y, sample_times=None):
        """Negative mean check loss averaged over the fitted levels (higher is better)."""
        pred = np.atleast_2d(self.predict(X, sample_times).T).T
        y = np.asarray(y, dtype=float)
        if pred.shape[0] != y.shape[0]:
            raise ValidationError("X and y have inconsistent lengths")
        losses = [np.mean(check_function(y - pred[:, k], u)) for k, u in enumerate(self.model_.levels)]
        return -float(np.mean(losses))
