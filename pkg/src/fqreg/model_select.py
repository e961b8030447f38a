"""Information criteria for the cut-off level and their integrated versions.

For a fit with ``m`` components and total check loss ``S(u)`` at level ``u``:

    AIC(u)  = log(S(u) / n) + (m + 1) / n
    BIC(u)  = log(S(u) / n) + (m + 1) log(n) / n
    GACV(u) = S(u) / (n - (m + 1))

Over a finite level set the integrated criteria are plain averages.
"""

import csv
import enum
import io
import math

import numpy as np

from .curves import DEFAULT_GRID_SIZE, InterpolationRule
from .estimator import QuantileIndexSet, curves_to_grid, fit_basis, fit_from_basis
from .exceptions import DegenerateFitError, ValidationError

DEFAULT_MAX_CANDIDATE = 20


class CriterionKind(str, enum.Enum):
    AIC = "aic"
    BIC = "bic"
    GACV = "gacv"

    @classmethod
    def coerce(cls, kind):
        try:
            return cls(str(kind).lower() if not isinstance(kind, cls) else kind)
        except ValueError:
            raise ValidationError(f"unknown criterion {kind!r}; expected aic, bic or gacv") from None


def criterion_at(kind, sum_check_loss, n, m, u=None):
    """Value of one criterion at a single level.

    ``u`` is accepted for symmetry with the integrated version; none of the
    formulas depends on it directly.
    """
    kind = CriterionKind.coerce(kind)
    if n <= m + 1:
        raise ValidationError(f"criteria need n > m + 1, got n={n}, m={m}")
    if sum_check_loss < 0 or not math.isfinite(sum_check_loss):
        raise ValidationError(f"sum of check losses must be finite and >= 0, got {sum_check_loss}")
    if kind is CriterionKind.GACV:
        return sum_check_loss / (n - (m + 1))
    if sum_check_loss == 0:
        raise DegenerateFitError(f"degenerate perfect fit: {kind.value.upper()} needs a positive check loss")
    base = math.log(sum_check_loss / n)
    if kind is CriterionKind.AIC:
        return base + (m + 1) / n
    return base + (m + 1) * math.log(n) / n


def integrated_criterion(kind, sum_check_losses, n, m):
    """Uniform average of :func:`criterion_at` over the fitted levels."""
    losses = np.atleast_1d(np.asarray(sum_check_losses, dtype=float))
    if losses.size == 0:
        raise ValidationError("at least one level is required")
    return float(np.mean([criterion_at(kind, s, n, m) for s in losses]))


def default_candidates(n, usable, cap=DEFAULT_MAX_CANDIDATE):
    return list(range(1, min(cap, n - 2, usable) + 1))


def loss_path(curves, responses, levels, m_candidates=None, rule=InterpolationRule.LEFT_STEP,
              grid_size=DEFAULT_GRID_SIZE, sample_times=None, X=None):
    """Fit every feasible candidate cut-off on one shared eigenbasis.

    Returns ``(models, n)`` where ``models`` maps ``m`` to its FqrModel.
    Infeasible candidates (``m > n - 2`` or beyond the usable spectrum) are
    skipped; an error is raised when none remain.
    """
    levels = QuantileIndexSet.coerce(levels)
    if X is None:
        X = curves_to_grid(curves, rule, grid_size, sample_times)
    n = X.shape[0]
    y = np.asarray(responses, dtype=float)
    cap = max(m_candidates) if m_candidates else DEFAULT_MAX_CANDIDATE
    mean, eig = fit_basis(X, max(1, min(cap, n - 2, X.shape[1])))
    if m_candidates is None:
        m_candidates = default_candidates(n, eig.usable_count)
    feasible = sorted({int(m) for m in m_candidates if 1 <= m <= n - 2 and m <= eig.usable_count})
    if not feasible:
        raise ValidationError(f"no feasible cut-off among candidates {list(m_candidates)} (n={n})")
    models = {m: fit_from_basis(X, y, levels, m, rule, mean, eig) for m in feasible}
    return models, n


def criterion_table(kind, models, n):
    """Per-level criterion values ``{m: ndarray over levels}``."""
    out = {}
    for m, model in models.items():
        out[m] = np.array([criterion_at(kind, model.fits[u].objective * n, n, m, u) for u in model.levels.tolist()])
    return out


def select_from_path(kind, models, n):
    """Argmin of the integrated criterion; ties go to the smallest ``m``."""
    table = criterion_table(kind, models, n)
    scores = {m: float(np.mean(v)) for m, v in table.items()}
    best = min(sorted(scores), key=lambda m: scores[m])
    return best, scores


def select_cutoff(kind, curves, responses, levels, m_candidates=None, rule=InterpolationRule.LEFT_STEP,
                  grid_size=DEFAULT_GRID_SIZE, sample_times=None):
    """Choose ``m`` by minimizing an integrated criterion.

    Returns
    -------
    m_star : int
    scores : dict
        Integrated criterion value for every feasible candidate.
    """
    kind = CriterionKind.coerce(kind)
    models, n = loss_path(curves, responses, levels, m_candidates, rule, grid_size, sample_times)
    return select_from_path(kind, models, n)


def criterion_report_csv(kind, models, n):
    """CSV with columns ``m,level,criterion_value`` plus an ``integrated`` row per ``m``."""
    table = criterion_table(kind, models, n)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["m", "level", "criterion_value"])
    for m in sorted(table):
        levels = models[m].levels.tolist()
        for u, v in zip(levels, table[m]):
            writer.writerow([m, format(u, ".17g"), format(v, ".17g")])
        writer.writerow([m, "integrated", format(float(np.mean(table[m])), ".17g")])
    return buf.getvalue()
