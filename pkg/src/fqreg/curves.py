"""Discretely observed curves, step interpolation and quadrature on a uniform grid.

Every L2 operation in the package goes through the trapezoid rule on the
uniform grid ``t_g = g / (G - 1)``, ``g = 0, ..., G - 1``.
"""

import csv
import enum
import io
import os
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .exceptions import CurveParseError, ValidationError

DEFAULT_GRID_SIZE = 201
QUADRATURE = "trapezoid"
CURVE_HEADER = ("subject_id", "t", "value")

# Grid points within this distance of an observation time are snapped onto it,
# so that linspace round-off never selects the previous segment.
_SNAP = 1e-9
_ENDPOINT_TOL = 1e-12


class InterpolationRule(str, enum.Enum):
    """Step interpolation rules for turning discrete samples into curves.

    ``LEFT_STEP`` holds the left endpoint value on each segment
    ``[t_l, t_{l+1})``; ``MIDPOINT_STEP`` holds the average of the two
    endpoint values.
    """

    LEFT_STEP = "left_step"
    MIDPOINT_STEP = "midpoint_step"

    @classmethod
    def coerce(cls, rule):
        try:
            return cls(rule)
        except ValueError:
            raise ValidationError(
                f"unknown interpolation rule {rule!r}; expected one of "
                f"{[r.value for r in cls]}"
            ) from None


def _readonly(arr):
    arr = np.array(arr, dtype=float)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True, eq=False)
class DiscreteCurve:
    """One subject's covariate path observed at ``0 = t_1 < ... < t_{L+1} = 1``."""

    subject_id: object
    times: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        times = _readonly(self.times)
        values = _readonly(self.values)
        if times.ndim != 1 or values.ndim != 1 or times.shape != values.shape:
            raise ValidationError(
                f"subject {self.subject_id!r}: times and values must be 1-d of equal length"
            )
        if times.size < 2:
            raise ValidationError(f"subject {self.subject_id!r}: at least two observations required")
        if not (np.all(np.isfinite(times)) and np.all(np.isfinite(values))):
            raise ValidationError(f"subject {self.subject_id!r}: non-finite time or value")
        if np.any(np.diff(times) <= 0):
            raise ValidationError(f"subject {self.subject_id!r}: times must be strictly increasing")
        if abs(times[0]) > _ENDPOINT_TOL or abs(times[-1] - 1.0) > _ENDPOINT_TOL:
            raise ValidationError(
                f"subject {self.subject_id!r}: observations must start at t=0 and end at t=1 "
                f"(got first={times[0]!r}, last={times[-1]!r})"
            )
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "values", values)


@dataclass(frozen=True, eq=False)
class GridFunction:
    """A function sampled on the uniform grid of ``[0, 1]`` with ``G`` points."""

    values: np.ndarray
    quadrature: str = field(default=QUADRATURE)

    def __post_init__(self):
        values = _readonly(self.values)
        if values.ndim != 1 or values.size < 2:
            raise ValidationError("a GridFunction needs a 1-d array of at least 2 values")
        if not np.all(np.isfinite(values)):
            raise ValidationError("GridFunction values must be finite")
        if self.quadrature != QUADRATURE:
            raise ValidationError(f"unsupported quadrature rule {self.quadrature!r}")
        object.__setattr__(self, "values", values)

    @property
    def grid_size(self):
        return self.values.shape[0]

    @property
    def grid(self):
        return uniform_grid(self.grid_size)

    def _other(self, other):
        if isinstance(other, GridFunction):
            _check_same_grid(self, other)
            return other.values
        return other

    def __add__(self, other):
        return GridFunction(self.values + self._other(other))

    __radd__ = __add__

    def __sub__(self, other):
        return GridFunction(self.values - self._other(other))

    def __rsub__(self, other):
        return GridFunction(self._other(other) - self.values)

    def __mul__(self, scalar):
        if isinstance(scalar, GridFunction):
            return NotImplemented
        return GridFunction(self.values * float(scalar))

    __rmul__ = __mul__

    def __neg__(self):
        return GridFunction(-self.values)

    def __call__(self, t):
        """Linear interpolation between grid values (for inspection only)."""
        return np.interp(t, self.grid, self.values)


@lru_cache(maxsize=32)
def _grid_cached(G):
    g = np.linspace(0.0, 1.0, G)
    g.flags.writeable = False
    return g


@lru_cache(maxsize=32)
def _weights_cached(G):
    w = np.full(G, 1.0 / (G - 1))
    w[0] = w[-1] = 0.5 / (G - 1)
    w.flags.writeable = False
    return w


def uniform_grid(grid_size):
    """Uniform evaluation grid ``(g / (G - 1))_g`` on ``[0, 1]``."""
    if grid_size < 2:
        raise ValidationError(f"grid_size must be >= 2, got {grid_size}")
    return _grid_cached(int(grid_size))


def trapezoid_weights(grid_size):
    """Trapezoid quadrature weights on the uniform grid; they sum to one."""
    if grid_size < 2:
        raise ValidationError(f"grid_size must be >= 2, got {grid_size}")
    return _weights_cached(int(grid_size))


def _check_same_grid(f, g):
    if f.grid_size != g.grid_size:
        raise ValidationError(f"grid mismatch: {f.grid_size} vs {g.grid_size} points")


# --------------------------------------------------------------------------- #
# CSV ingestion
# --------------------------------------------------------------------------- #


def _open_text(source):
    if isinstance(source, (bytes, bytearray)):
        return io.StringIO(bytes(source).decode("utf-8"))
    if isinstance(source, (str, os.PathLike)):
        with open(source, "rb") as fh:
            return io.StringIO(fh.read().decode("utf-8"))
    data = source.read()
    if isinstance(data, bytes):
        data = data.decode("utf-8")
    return io.StringIO(data)


def read_csv_rows(source, header):
    """Yield ``(line_number, fields)`` from a UTF-8 CSV with an exact header."""
    try:
        text = _open_text(source)
    except UnicodeDecodeError as exc:
        raise CurveParseError(f"input is not valid UTF-8 ({exc})") from None
    reader = csv.reader(text)
    try:
        first = next(reader)
    except StopIteration:
        raise CurveParseError("empty input, expected a header row", line=1) from None
    if tuple(c.strip() for c in first) != tuple(header):
        raise CurveParseError(f"expected header {','.join(header)!r}, got {','.join(first)!r}", line=1)
    for row in reader:
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(header):
            raise CurveParseError(f"expected {len(header)} fields, got {len(row)}", line=reader.line_num)
        yield reader.line_num, [c.strip() for c in row]


def _parse_float(text, what, line):
    try:
        value = float(text)
    except ValueError:
        raise CurveParseError(f"cannot parse {what} {text!r} as a number", line=line) from None
    if not np.isfinite(value):
        raise CurveParseError(f"{what} must be finite, got {text!r}", line=line)
    return value


def load_curves(source):
    """Read curves from a CSV with header ``subject_id,t,value``.

    Parameters
    ----------
    source : bytes, path or binary file object
        UTF-8 encoded CSV. Rows may appear in any order; they are grouped by
        ``subject_id`` (first-appearance order) and sorted by ``t``.

    Returns
    -------
    list of DiscreteCurve

    Raises
    ------
    CurveParseError
        Malformed row (the message carries the line number).
    ValidationError
        Duplicate ``(subject_id, t)`` pair or a subject not observed at both
        ``t = 0`` and ``t = 1``.
    """
    grouped = {}
    for line, (sid, t_text, v_text) in read_csv_rows(source, CURVE_HEADER):
        if not sid:
            raise CurveParseError("empty subject_id", line=line)
        t = _parse_float(t_text, "t", line)
        v = _parse_float(v_text, "value", line)
        obs = grouped.setdefault(sid, {})
        if t in obs:
            raise ValidationError(f"duplicate observation for subject {sid!r} at t={t!r} (line {line})")
        obs[t] = v
    if not grouped:
        raise CurveParseError("no observations found")
    curves = []
    for sid, obs in grouped.items():
        times = np.array(sorted(obs))
        values = np.array([obs[t] for t in times])
        curves.append(DiscreteCurve(sid, times, values))
    return curves


def curves_to_csv(curves):
    """Serialize curves back to the ``subject_id,t,value`` CSV format."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CURVE_HEADER)
    for c in curves:
        for t, v in zip(c.times, c.values):
            writer.writerow([c.subject_id, format(t, ".17g"), format(v, ".17g")])
    return buf.getvalue()


# --------------------------------------------------------------------------- #
# Interpolation and L2 operations
# --------------------------------------------------------------------------- #


def _segment_index(times, grid):
    idx = np.searchsorted(times, grid + _SNAP, side="right") - 1
    return np.clip(idx, 0, times.size - 2)


def interpolate_values(times, values, rule, grid_size=DEFAULT_GRID_SIZE):
    """Vectorized step interpolation of curves sharing one set of sampling times.

    ``values`` may be 1-d (one curve) or 2-d with one curve per row. The value
    at ``t = 1`` extends the last segment.
    """
    rule = InterpolationRule.coerce(rule)
    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)
    idx = _segment_index(times, uniform_grid(grid_size))
    left = values[..., idx]
    if rule is InterpolationRule.LEFT_STEP:
        return left
    return 0.5 * (left + values[..., idx + 1])


def interpolate(curve, rule=InterpolationRule.LEFT_STEP, grid_size=DEFAULT_GRID_SIZE):
    """Sample the step interpolant of ``curve`` on the uniform ``grid_size`` grid.

    Examples
    --------
    >>> c = DiscreteCurve("a", [0.0, 0.5, 1.0], [1.0, 2.0, 3.0])
    >>> interpolate(c, "left_step", 5).values.tolist()
    [1.0, 1.0, 2.0, 2.0, 2.0]
    >>> interpolate(c, "midpoint_step", 5).values.tolist()
    [1.5, 1.5, 2.5, 2.5, 2.5]
    """
    if grid_size < 2:
        raise ValidationError(f"grid_size must be >= 2, got {grid_size}")
    return GridFunction(interpolate_values(curve.times, curve.values, rule, grid_size))


def interpolate_many(curves, rule=InterpolationRule.LEFT_STEP, grid_size=DEFAULT_GRID_SIZE):
    """Interpolate a list of curves onto the grid, returning an ``(n, G)`` array."""
    curves = list(curves)
    if not curves:
        raise ValidationError("at least one curve is required")
    out = np.empty((len(curves), grid_size))
    shared = all(
        c.times.shape == curves[0].times.shape and np.array_equal(c.times, curves[0].times)
        for c in curves
    )
    if shared:
        vals = np.stack([c.values for c in curves])
        out[:] = interpolate_values(curves[0].times, vals, rule, grid_size)
    else:
        for i, c in enumerate(curves):
            out[i] = interpolate_values(c.times, c.values, rule, grid_size)
    return out


def as_matrix(curves):
    """Stack GridFunctions (or pass through an array) into an ``(n, G)`` array."""
    if isinstance(curves, np.ndarray):
        mat = np.asarray(curves, dtype=float)
        if mat.ndim != 2:
            raise ValidationError(f"expected a 2-d array of curves, got shape {mat.shape}")
        return mat
    curves = list(curves)
    if not curves:
        raise ValidationError("at least one curve is required")
    sizes = {f.grid_size for f in curves}
    if len(sizes) != 1:
        raise ValidationError(f"grid mismatch among curves: sizes {sorted(sizes)}")
    return np.stack([f.values for f in curves])


def curve_mean(curves):
    """Pointwise mean of curves sharing a grid."""
    return GridFunction(as_matrix(curves).mean(axis=0))


def l2_inner(f, g):
    """Trapezoid approximation of the integral of ``f * g`` over ``[0, 1]``."""
    _check_same_grid(f, g)
    w = trapezoid_weights(f.grid_size)
    return float(np.dot(w, f.values * g.values))


def l2_norm(f):
    return float(np.sqrt(max(l2_inner(f, f), 0.0)))
