"""Monotonization of estimated quantile curves in the quantile index."""

import math
from dataclasses import dataclass

import numpy as np

from ._validation import check_levels
from .exceptions import ValidationError

METHODS = ("rearrange", "isotonize", "blend")


@dataclass(frozen=True, eq=False)
class QuantileCurve:
    """Values of ``u -> Q(u | x)`` on a finite set of levels."""

    levels: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        levels = check_levels(self.levels)
        values = np.array(self.values, dtype=float)
        if values.shape != levels.shape:
            raise ValidationError(f"{values.shape[0] if values.ndim else 0} values for {levels.shape[0]} levels")
        if not np.all(np.isfinite(values)):
            raise ValidationError("quantile curve values must be finite")
        values.flags.writeable = False
        object.__setattr__(self, "levels", levels)
        object.__setattr__(self, "values", values)

    def is_monotone(self):
        return bool(np.all(np.diff(self.values) >= 0))


def _check_same_levels(a, b):
    if a.levels.shape != b.levels.shape or not np.array_equal(a.levels, b.levels):
        raise ValidationError("quantile curves are defined on different levels")


def rearrange(curve):
    """Monotone rearrangement: sort the values, keep the levels."""
    return QuantileCurve(curve.levels, np.sort(curve.values, kind="stable"))


def pava(y, weights=None):
    """Weighted least-squares projection of ``y`` onto nondecreasing sequences.

    Pool-adjacent-violators with blocks merged left to right.
    """
    y = np.asarray(y, dtype=float)
    n = y.shape[0]
    w = np.ones(n) if weights is None else np.asarray(weights, dtype=float)
    means = []
    wsum = []
    sizes = []
    for i in range(n):
        means.append(y[i])
        wsum.append(w[i])
        sizes.append(1)
        while len(means) > 1 and means[-2] > means[-1]:
            m2, w2, s2 = means.pop(), wsum.pop(), sizes.pop()
            tot = wsum[-1] + w2
            means[-1] = (means[-1] * wsum[-1] + m2 * w2) / tot
            wsum[-1] = tot
            sizes[-1] += s2
    return np.repeat(means, sizes)


def isotonize_pava(curve):
    """Isotonic (L2, uniform weights) projection of the curve values."""
    return QuantileCurve(curve.levels, pava(curve.values))


def blend(a, b, lam=0.5):
    """Pointwise convex combination ``lam * a + (1 - lam) * b``."""
    _check_same_levels(a, b)
    lam = float(lam)
    if not 0.0 <= lam <= 1.0:
        raise ValidationError(f"lambda must lie in [0, 1], got {lam}")
    return QuantileCurve(a.levels, lam * a.values + (1.0 - lam) * b.values)


def monotonize(curve, method="rearrange", lam=0.5):
    """Apply one of ``rearrange``, ``isotonize`` or ``blend`` (of the two)."""
    if method == "rearrange":
        return rearrange(curve)
    if method == "isotonize":
        return isotonize_pava(curve)
    if method == "blend":
        return blend(rearrange(curve), isotonize_pava(curve), lam)
    raise ValidationError(f"unknown monotonization method {method!r}; expected one of {METHODS}")


def monotonize_rows(values, method="rearrange", lam=0.5):
    """Row-wise monotonization of an ``(n, K)`` array of quantile predictions."""
    values = np.atleast_2d(np.asarray(values, dtype=float))
    if method == "rearrange":
        return np.sort(values, axis=1)
    iso = np.stack([pava(row) for row in values])
    if method == "isotonize":
        return iso
    if method == "blend":
        return lam * np.sort(values, axis=1) + (1.0 - lam) * iso
    raise ValidationError(f"unknown monotonization method {method!r}; expected one of {METHODS}")


def lq_error(estimate, truth, q=2.0):
    """``(mean_u |estimate - truth|^q)^(1/q)`` over the levels; ``q = inf`` gives the max."""
    _check_same_levels(estimate, truth)
    q = float(q)
    if math.isnan(q) or q < 1.0:
        raise ValidationError(f"q must be >= 1 or infinity, got {q}")
    diff = np.abs(estimate.values - truth.values)
    if math.isinf(q):
        return float(diff.max())
    return float(np.mean(diff ** q) ** (1.0 / q))
