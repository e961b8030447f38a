"""PCA-basis functional linear quantile regression.

The pipeline interpolates the covariate curves onto the evaluation grid,
centres them, eigendecomposes the empirical covariance kernel, computes the
first ``m`` principal scores and solves one check-loss problem per quantile
level. The slope surface is ``b(t, u) = sum_j b_j(u) phi_j(t)`` and the plug-in
conditional quantile is ``a(u) + <b(., u), x - xbar>``.
"""

import json
from dataclasses import dataclass, field

import numpy as np

from ._validation import check_finite_vector, check_levels, check_positive_int
from .covariance import EigenSystem, eigendecompose, empirical_kernel, project_scores
from .curves import (
    DEFAULT_GRID_SIZE,
    DiscreteCurve,
    GridFunction,
    InterpolationRule,
    interpolate,
    interpolate_many,
    interpolate_values,
    trapezoid_weights,
    uniform_grid,
)
from .exceptions import ValidationError
from .qr_solver import QrSolution, solve_check_loss, subgradient_vector

MODEL_FORMAT = "fqreg-model"
MODEL_VERSION = 1


class QuantileIndexSet:
    """Strictly increasing quantile levels inside ``[0.01, 0.99]``."""

    def __init__(self, levels):
        self.levels = check_levels(levels)

    def __len__(self):
        return self.levels.shape[0]

    def __iter__(self):
        return iter(self.levels.tolist())

    def __repr__(self):
        return f"QuantileIndexSet({self.levels.tolist()})"

    @classmethod
    def coerce(cls, levels):
        return levels if isinstance(levels, cls) else cls(levels)


@dataclass(frozen=True, eq=False)
class FqrModel:
    """A fitted functional quantile regression.

    ``fits`` maps each level to its :class:`QrSolution`; the coefficients are in
    score coordinates, intercept first. ``train_scores`` and ``responses`` are
    kept for in-sample diagnostics and are not serialized.
    """

    eig: EigenSystem
    mean_curve: GridFunction
    m: int
    levels: np.ndarray
    fits: dict
    rule: InterpolationRule
    n_samples: int
    train_scores: np.ndarray = field(default=None, repr=False)
    responses: np.ndarray = field(default=None, repr=False)

    @property
    def grid_size(self):
        return self.mean_curve.grid_size

    def fit_at(self, u):
        key = _level_key(self, u)
        return self.fits[key]

    def coefficient_matrix(self):
        """``(K, m + 1)`` array of per-level coefficients, rows ordered by level."""
        return np.stack([self.fits[u].coefficients for u in self.levels.tolist()])

    def predict_matrix(self, X):
        """Plug-in quantiles for gridded covariates ``X`` of shape ``(n, G)``; returns ``(n, K)``."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != self.grid_size:
            raise ValidationError(f"covariates have {X.shape[1]} grid points, model uses {self.grid_size}")
        S = project_scores(X, self.mean_curve.values, self.eig, self.m)
        return S @ self.coefficient_matrix().T

    # -- serialization ----------------------------------------------------- #

    def to_dict(self):
        return {
            "format": MODEL_FORMAT,
            "version": MODEL_VERSION,
            "grid_size": self.grid_size,
            "quadrature": self.mean_curve.quadrature,
            "rule": self.rule.value,
            "m": self.m,
            "n_samples": self.n_samples,
            "levels": self.levels.tolist(),
            "mean_curve": self.mean_curve.values.tolist(),
            "eigenvalues": self.eig.eigenvalues.tolist(),
            "eigenfunctions": self.eig.eigenfunctions.tolist(),
            "fits": [
                {
                    "u": u,
                    "coefficients": self.fits[u].coefficients.tolist(),
                    "objective": self.fits[u].objective,
                    "subgradient_norm": self.fits[u].subgradient_norm,
                    "bound": self.fits[u].bound,
                }
                for u in self.levels.tolist()
            ],
        }

    def to_json(self, **kwargs):
        # repr-based float output is shortest round-trip (at most 17 significant digits).
        return json.dumps(self.to_dict(), **kwargs)

    @classmethod
    def from_dict(cls, data):
        if data.get("format") != MODEL_FORMAT:
            raise ValidationError(f"not an fqreg model document (format={data.get('format')!r})")
        G = int(data["grid_size"])
        m = int(data["m"])
        funcs = np.asarray(data["eigenfunctions"], dtype=float).reshape(-1, G)
        eig = EigenSystem(np.asarray(data["eigenvalues"], dtype=float), funcs)
        levels = check_levels(data["levels"])
        fits = {}
        for entry in data["fits"]:
            fits[float(entry["u"])] = QrSolution(
                coefficients=np.asarray(entry["coefficients"], dtype=float),
                objective=float(entry["objective"]),
                subgradient_norm=float(entry["subgradient_norm"]),
                bound=float(entry["bound"]),
                u=float(entry["u"]),
            )
        if set(fits) != set(levels.tolist()):
            raise ValidationError("model document levels and fits disagree")
        return cls(
            eig=eig,
            mean_curve=GridFunction(np.asarray(data["mean_curve"], dtype=float)),
            m=m,
            levels=levels,
            fits=fits,
            rule=InterpolationRule.coerce(data["rule"]),
            n_samples=int(data["n_samples"]),
        )

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True, eq=False)
class SlopeSurface:
    """Slope estimate ``b(t_g, u_k)`` stored as a ``(K, G)`` array."""

    grid: np.ndarray
    levels: np.ndarray
    values: np.ndarray

    def at(self, u):
        k = int(np.flatnonzero(np.isclose(self.levels, u, rtol=0, atol=1e-12))[0])
        return GridFunction(self.values[k])


def _level_key(model, u):
    hits = np.flatnonzero(np.abs(model.levels - float(u)) <= 1e-12)
    if hits.size == 0:
        raise ValidationError(f"level u={u} was not fitted; available: {model.levels.tolist()}")
    return float(model.levels[hits[0]])


def curves_to_grid(curves, rule=InterpolationRule.LEFT_STEP, grid_size=DEFAULT_GRID_SIZE, sample_times=None):
    """Interpolate covariates onto the evaluation grid.

    ``curves`` is either a sequence of :class:`DiscreteCurve` or an ``(n, L + 1)``
    array of values observed at ``sample_times`` (default: equally spaced on
    ``[0, 1]``). Returns an ``(n, G)`` array.
    """
    if isinstance(curves, np.ndarray) or (
        isinstance(curves, (list, tuple)) and curves and not isinstance(curves[0], (DiscreteCurve, GridFunction))
    ):
        vals = np.atleast_2d(np.asarray(curves, dtype=float))
        if sample_times is None:
            sample_times = np.linspace(0.0, 1.0, vals.shape[1])
        # Validates the shared sampling design once.
        DiscreteCurve("design", sample_times, vals[0])
        if not np.all(np.isfinite(vals)):
            raise ValidationError("covariate values must be finite")
        return interpolate_values(sample_times, vals, rule, grid_size)
    curves = list(curves)
    if curves and isinstance(curves[0], GridFunction):
        return np.stack([c.values for c in curves])
    return interpolate_many(curves, rule, grid_size)


def fit_basis(X, max_components):
    """Mean curve and leading eigensystem of gridded curves ``X``."""
    kernel = empirical_kernel(X)
    eig = eigendecompose(kernel, max_components=min(max_components, X.shape[1]))
    return X.mean(axis=0), eig


def fit_from_basis(X, responses, levels, m, rule, mean, eig):
    """Solve the per-level check-loss problems on an already computed basis."""
    levels = QuantileIndexSet.coerce(levels).levels
    y = check_finite_vector(responses, "responses", length=X.shape[0])
    n = X.shape[0]
    m = check_positive_int(m, "m")
    if n < m + 2:
        raise ValidationError(f"need n >= m + 2, got n={n}, m={m}")
    if m > eig.count or m > eig.usable_count:
        raise ValidationError(
            f"m={m} exceeds the number of usable principal components ({eig.usable_count})"
        )
    S = project_scores(X, mean, eig, m)
    fits = {u: solve_check_loss(S, y, u) for u in levels.tolist()}
    return FqrModel(
        eig=eig.truncate(m),
        mean_curve=GridFunction(mean),
        m=m,
        levels=levels,
        fits=fits,
        rule=InterpolationRule.coerce(rule),
        n_samples=n,
        train_scores=S,
        responses=y,
    )


def fit_fqr(curves, responses, levels, m, rule=InterpolationRule.LEFT_STEP,
            grid_size=DEFAULT_GRID_SIZE, sample_times=None):
    """Fit the functional quantile regression at every level with cut-off ``m``.

    Parameters
    ----------
    curves : sequence of DiscreteCurve or ndarray of shape (n, L + 1)
    responses : array-like of shape (n,)
    levels : QuantileIndexSet or sequence of float
    m : int
        Number of principal components retained.
    rule : {'left_step', 'midpoint_step'}
    grid_size : int

    Returns
    -------
    FqrModel
    """
    rule = InterpolationRule.coerce(rule)
    m = check_positive_int(m, "m")
    X = curves_to_grid(curves, rule, grid_size, sample_times)
    y = check_finite_vector(responses, "responses", length=X.shape[0])
    if X.shape[0] < m + 2:
        raise ValidationError(f"need n >= m + 2, got n={X.shape[0]}, m={m}")
    mean, eig = fit_basis(X, m)
    return fit_from_basis(X, y, levels, m, rule, mean, eig)


def slope_surface(model):
    """``b(t, u) = sum_{j <= m} b_j(u) phi_j(t)`` on the evaluation grid."""
    coefs = model.coefficient_matrix()[:, 1:]
    values = coefs @ model.eig.eigenfunctions[: model.m]
    return SlopeSurface(uniform_grid(model.grid_size), model.levels, values)


def predict_quantile(model, x, u):
    """Plug-in estimate ``a(u) + integral b(t, u) (x(t) - xbar(t)) dt``."""
    key = _level_key(model, u)
    if isinstance(x, DiscreteCurve):
        x = interpolate(x, model.rule, model.grid_size)
    elif not isinstance(x, GridFunction):
        x = GridFunction(np.asarray(x, dtype=float))
    if x.grid_size != model.grid_size:
        raise ValidationError(f"covariate grid has {x.grid_size} points, model uses {model.grid_size}")
    coefs = model.fits[key].coefficients
    w = trapezoid_weights(model.grid_size)
    slope = coefs[1:] @ model.eig.eigenfunctions[: model.m]
    return float(coefs[0] + np.dot(w, slope * (x.values - model.mean_curve.values)))


def normal_equation_residual(model, u):
    """Norm of ``mean_i {u - 1(Y_i <= fitted_i)} xi_ij`` over ``j = 1..m``.

    These are the basis coefficients of the empirical normal-equation operator
    evaluated at the fitted slope; the intercept coordinate is excluded.
    """
    if model.train_scores is None or model.responses is None:
        raise ValidationError("model carries no training data (was it loaded from JSON?)")
    key = _level_key(model, u)
    sub = subgradient_vector(model.train_scores, model.responses, model.fits[key].coefficients, key)
    return float(np.linalg.norm(sub[1:]))
