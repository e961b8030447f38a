"""Small input-validation helpers in the spirit of ``sklearn.utils.validation``."""

import numbers

import numpy as np

from .exceptions import ValidationError

LEVEL_MARGIN = 0.01


def check_quantile(u, name="u"):
    """Return ``u`` as a float, raising unless it lies strictly inside (0, 1)."""
    if isinstance(u, bool) or not isinstance(u, numbers.Real):
        raise ValidationError(f"{name} must be a real number, got {u!r}")
    u = float(u)
    if not 0.0 < u < 1.0:
        raise ValidationError(f"{name} must lie in the open interval (0, 1), got {u}")
    return u


def check_levels(levels, margin=LEVEL_MARGIN):
    """Validate a quantile index set.

    Levels must be nonempty, strictly increasing and inside
    ``[margin, 1 - margin]``. Returns a read-only float array.
    """
    arr = np.atleast_1d(np.asarray(levels, dtype=float))
    if arr.ndim != 1 or arr.size == 0:
        raise ValidationError("levels must be a nonempty 1-d sequence")
    if not np.all(np.isfinite(arr)):
        raise ValidationError("levels must be finite")
    if np.any(np.diff(arr) <= 0):
        raise ValidationError("levels must be strictly increasing (duplicates are rejected)")
    if arr[0] < margin - 1e-12 or arr[-1] > 1.0 - margin + 1e-12:
        raise ValidationError(f"levels must lie within [{margin}, {1 - margin}]")
    arr = arr.copy()
    arr.flags.writeable = False
    return arr


def check_positive_int(value, name, minimum=1):
    if isinstance(value, bool) or not isinstance(value, numbers.Integral):
        raise ValidationError(f"{name} must be an integer, got {value!r}")
    if value < minimum:
        raise ValidationError(f"{name} must be >= {minimum}, got {value}")
    return int(value)


def check_finite_vector(values, name, length=None):
    arr = np.asarray(values, dtype=float)
    if arr.ndim != 1:
        raise ValidationError(f"{name} must be one-dimensional, got shape {arr.shape}")
    if length is not None and arr.shape[0] != length:
        raise ValidationError(f"{name} must have length {length}, got {arr.shape[0]}")
    if not np.all(np.isfinite(arr)):
        raise ValidationError(f"{name} must contain only finite values")
    return arr


def check_design(design, responses):
    """Validate a quantile-regression design matrix and response vector."""
    Z = np.asarray(design, dtype=float)
    if Z.ndim != 2:
        raise ValidationError(f"design must be two-dimensional, got shape {Z.shape}")
    y = check_finite_vector(responses, "responses", length=Z.shape[0])
    if not np.all(np.isfinite(Z)):
        raise ValidationError("design must contain only finite values")
    return Z, y
