"""Monte Carlo harness for the cosine-basis simulation design.

Data-generating process (``J = basis_terms``, default 50)::

    phi_j(t) = sqrt(2) cos(j pi t)
    X(t)     = sum_j gamma_j Z_j phi_j(t),   gamma_j = (-1)^(j+1) j^(-alpha/2)
    Y        = sum_j rho_j gamma_j Z_j + eps,
    rho_1 = 0.3,  rho_j = 4 (-1)^(j+1) j^(-2) for j >= 2,

with ``Z_j`` i.i.d. uniform on ``[-sqrt 3, sqrt 3]`` and ``eps`` standard
normal or standard Cauchy. The true slope is ``rho(t) = sum_j rho_j phi_j(t)``
for every ``u`` and ``a(u)`` is the error quantile. ``rho_j ~ j^-2`` fixes the
smoothness exponent ``beta = 2`` used for the reference rates.
"""

import csv
import io
import json
import math
from collections import Counter
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import special

from ._validation import check_levels, check_quantile
from .curves import DEFAULT_GRID_SIZE, DiscreteCurve, InterpolationRule, interpolate_values, trapezoid_weights, uniform_grid
from .estimator import fit_basis, fit_from_basis, slope_surface
from .exceptions import FqrError, ValidationError
from .model_select import CriterionKind, loss_path, select_from_path
from .monotonize import monotonize_rows

BETA = 2.0
ERROR_LAWS = ("normal", "cauchy")
_TRAIN_STREAM = 0
_FRESH_STREAM = 1


@dataclass(frozen=True)
class DesignSpec:
    alpha: float = 2.0
    error_law: str = "normal"
    n: int = 100
    grid_size: int = DEFAULT_GRID_SIZE
    basis_terms: int = 50
    seed: int = 0
    levels: tuple = (0.5,)
    n_fresh: int = 1000
    rule: str = "left_step"

    def __post_init__(self):
        if not self.alpha > 1:
            raise ValidationError(f"alpha must exceed 1, got {self.alpha}")
        if self.error_law not in ERROR_LAWS:
            raise ValidationError(f"error_law must be one of {ERROR_LAWS}, got {self.error_law!r}")
        if self.n < 10:
            raise ValidationError(f"n must be >= 10, got {self.n}")
        if self.basis_terms < 1:
            raise ValidationError("basis_terms must be >= 1")
        if self.grid_size < 2:
            raise ValidationError("grid_size must be >= 2")
        if self.n_fresh < 1:
            raise ValidationError("n_fresh must be >= 1")
        if not 0 <= int(self.seed) < 2 ** 64:
            raise ValidationError("seed must be an unsigned 64-bit integer")
        object.__setattr__(self, "levels", tuple(check_levels(self.levels).tolist()))
        InterpolationRule.coerce(self.rule)


def slope_coefficients(J):
    j = np.arange(1, J + 1, dtype=float)
    rho = 4.0 * (-1.0) ** (j + 1) * j ** -2.0
    rho[0] = 0.3
    return rho


def score_scales(alpha, J):
    j = np.arange(1, J + 1, dtype=float)
    return (-1.0) ** (j + 1) * j ** (-alpha / 2.0)


def cosine_basis(J, t):
    """``(J, len(t))`` array of ``sqrt(2) cos(j pi t)``, ``j = 1..J``."""
    j = np.arange(1, J + 1, dtype=float)
    return math.sqrt(2.0) * np.cos(np.pi * j[:, None] * np.asarray(t, dtype=float)[None, :])


@dataclass(frozen=True, eq=False)
class TruthHandle:
    """Ground truth of one design: slope coefficients, score scales and error law."""

    slope_coefs: np.ndarray
    gammas: np.ndarray
    error_law: str

    @property
    def loadings(self):
        """``rho_j gamma_j``: the response is ``Z @ loadings + eps``."""
        return self.slope_coefs * self.gammas

    def error_quantile(self, u):
        u = np.asarray(u, dtype=float)
        if self.error_law == "normal":
            return special.ndtri(u)
        return np.tan(np.pi * (u - 0.5))

    def slope_function(self, grid_size):
        t = uniform_grid(grid_size)
        return self.slope_coefs @ cosine_basis(self.slope_coefs.size, t)

    def slope_norm_sq(self):
        """Exact ``||rho||^2 = sum_j rho_j^2``."""
        return float(np.sum(self.slope_coefs ** 2))


def truth_for(spec):
    return TruthHandle(slope_coefficients(spec.basis_terms), score_scales(spec.alpha, spec.basis_terms), spec.error_law)


def _generator(seed, replication, stream):
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed), spawn_key=(int(replication), stream))))


def _open_uniform(rng, size):
    u = rng.random(size)
    return np.where(u == 0.0, 2.0 ** -54, u)


def draw_scores(rng, n, J):
    return (2.0 * rng.random((n, J)) - 1.0) * math.sqrt(3.0)


def draw_errors(rng, n, law):
    u = _open_uniform(rng, n)
    if law == "normal":
        return special.ndtri(u)
    return np.tan(np.pi * (u - 0.5))


def curve_values(z, truth, grid_size):
    """Covariate curves at ``grid_size`` equally spaced sampling points, one row per subject."""
    t = uniform_grid(grid_size)
    return z @ (truth.gammas[:, None] * cosine_basis(truth.gammas.size, t))


@dataclass(frozen=True, eq=False)
class Dataset:
    """One simulated sample; ``values[i]`` is curve ``i`` at ``sample_times``."""

    sample_times: np.ndarray
    values: np.ndarray
    responses: np.ndarray
    z: np.ndarray
    truth: TruthHandle

    @property
    def curves(self):
        return [DiscreteCurve(i, self.sample_times, row) for i, row in enumerate(self.values)]


def gen_dataset(spec, replication=0):
    """Draw a training sample for ``spec``; deterministic in ``(spec.seed, replication)``."""
    truth = truth_for(spec)
    rng = _generator(spec.seed, replication, _TRAIN_STREAM)
    z = draw_scores(rng, spec.n, spec.basis_terms)
    eps = draw_errors(rng, spec.n, spec.error_law)
    values = curve_values(z, truth, spec.grid_size)
    y = z @ truth.loadings + eps
    return Dataset(uniform_grid(spec.grid_size), values, y, z, truth)


def fresh_scores(spec, n_fresh, replication=0):
    """Covariate scores from the stream reserved for integrating over ``P_X``."""
    rng = _generator(spec.seed, replication, _FRESH_STREAM)
    return draw_scores(rng, n_fresh, spec.basis_terms)


def true_quantile(truth, z, u):
    """``F_eps^{-1}(u) + sum_j rho_j gamma_j z_j`` (vectorized over rows of ``z``)."""
    u = check_quantile(u)
    z = np.asarray(z, dtype=float)
    return truth.error_quantile(u) + z @ truth.loadings


def qamise_slope(surface, truth):
    """Level-averaged integrated squared error of a slope surface against ``rho``."""
    G = surface.values.shape[1]
    w = trapezoid_weights(G)
    err = surface.values - truth.slope_function(G)[None, :]
    return float(np.mean((err ** 2) @ w))


def quantile_errors(model, truth, z_fresh, grid_size=None, monotonize=None):
    """``(n_fresh, K)`` squared errors of plug-in quantiles at fresh covariates."""
    grid_size = grid_size or model.grid_size
    values = curve_values(z_fresh, truth, grid_size)
    X = interpolate_values(uniform_grid(grid_size), values, model.rule, model.grid_size)
    pred = model.predict_matrix(X)
    if monotonize:
        pred = monotonize_rows(pred, monotonize)
    true = truth.error_quantile(model.levels)[None, :] + (z_fresh @ truth.loadings)[:, None]
    return (pred - true) ** 2


def qamise_quantile(model, truth, spec, n_fresh=None, replication=0, return_se=False):
    """Monte Carlo estimate of the level-averaged ``E_X (Qhat - Q)^2``.

    The integral over ``P_X`` uses ``n_fresh`` covariates from an independent
    stream. With ``return_se`` the Monte Carlo standard error is returned too.
    """
    n_fresh = spec.n_fresh if n_fresh is None else int(n_fresh)
    if n_fresh < 1:
        raise ValidationError("n_fresh must be >= 1")
    z = fresh_scores(spec, n_fresh, replication)
    per_x = quantile_errors(model, truth, z, spec.grid_size).mean(axis=1)
    est = float(per_x.mean())
    if return_se:
        se = float(per_x.std(ddof=1) / math.sqrt(n_fresh)) if n_fresh > 1 else float("nan")
        return est, se
    return est


# --------------------------------------------------------------------------- #
# Policies and the study driver
# --------------------------------------------------------------------------- #


def oracle_m(n, alpha, beta=BETA):
    """``round(n^(1 / (alpha + 2 beta)))``, at least 1."""
    return max(1, int(round(n ** (1.0 / (alpha + 2.0 * beta)))))


def parse_policy(policy):
    """Normalize a cut-off policy: an int, ``'fixed:<m>'``, ``'oracle'`` or a criterion name."""
    if isinstance(policy, bool):
        raise ValidationError(f"invalid policy {policy!r}")
    if isinstance(policy, (int, np.integer)):
        if policy < 1:
            raise ValidationError(f"fixed m must be >= 1, got {policy}")
        return f"fixed:{int(policy)}"
    text = str(policy).strip().lower()
    if text == "oracle":
        return text
    if text.startswith("fixed:"):
        try:
            m = int(text.split(":", 1)[1])
        except ValueError:
            raise ValidationError(f"invalid policy {policy!r}") from None
        return parse_policy(m)
    if text.isdigit():
        return parse_policy(int(text))
    return CriterionKind.coerce(text).value


@dataclass
class StudyCell:
    """Aggregated Monte Carlo results for one (design, policy) pair."""

    policy: str
    alpha: float
    error_law: str
    n: int
    levels: tuple
    R: int
    n_ok: int = 0
    n_failed: int = 0
    slope_qamise: float = float("nan")
    slope_se: float = float("nan")
    quantile_qamise: float = float("nan")
    quantile_se: float = float("nan")
    m_counts: dict = field(default_factory=dict)
    errors: list = field(default_factory=list)
    # Per-replication values in replication order (failed replications omitted).
    replications: list = field(default_factory=list)
    slope_values: list = field(default_factory=list)
    quantile_values: list = field(default_factory=list)

    def key(self):
        return (self.policy, self.alpha, self.error_law, self.n, self.levels)


def _mean_se(values):
    arr = np.asarray(values, dtype=float)
    if arr.size == 0:
        return float("nan"), float("nan")
    se = float(arr.std(ddof=1) / math.sqrt(arr.size)) if arr.size > 1 else 0.0
    return float(arr.mean()), se


def run_replication(spec, policies, replication):
    """One replication for every policy: ``{policy: (m, slope_ise, quantile_ise) or error string}``."""
    data = gen_dataset(spec, replication)
    rule = InterpolationRule.coerce(spec.rule)
    X = interpolate_values(data.sample_times, data.values, rule, spec.grid_size)
    z_fresh = fresh_scores(spec, spec.n_fresh, replication)
    out = {}
    models = {}
    chosen = {}
    path = None
    if any(p in {k.value for k in CriterionKind} for p in policies):
        try:
            path, _ = loss_path(None, data.responses, spec.levels, None, rule, spec.grid_size, X=X)
            models.update(path)
        except FqrError as exc:
            path = exc
    for policy in policies:
        if policy == "oracle":
            chosen[policy] = oracle_m(spec.n, spec.alpha)
        elif policy.startswith("fixed:"):
            chosen[policy] = int(policy.split(":")[1])
        elif isinstance(path, Exception):
            out[policy] = f"{type(path).__name__}: {path}"
        else:
            try:
                chosen[policy] = select_from_path(policy, path, spec.n)[0]
            except FqrError as exc:
                out[policy] = f"{type(exc).__name__}: {exc}"
    missing = sorted({m for m in chosen.values() if m not in models})
    if missing:
        mean, eig = fit_basis(X, min(missing[-1], X.shape[1]))
    for policy, m in chosen.items():
        try:
            if m not in models:
                models[m] = fit_from_basis(X, data.responses, spec.levels, m, rule, mean, eig)
            model = models[m]
            slope = qamise_slope(slope_surface(model), data.truth)
            quant = float(quantile_errors(model, data.truth, z_fresh, spec.grid_size).mean())
            out[policy] = (m, slope, quant)
        except FqrError as exc:
            out[policy] = f"{type(exc).__name__}: {exc}"
    return out


@dataclass
class StudyReport:
    cells: list
    R: int

    def cell(self, policy, alpha=None, error_law=None, n=None):
        policy = parse_policy(policy)
        hits = [
            c for c in self.cells
            if c.policy == policy
            and (alpha is None or c.alpha == alpha)
            and (error_law is None or c.error_law == error_law)
            and (n is None or c.n == n)
        ]
        if len(hits) != 1:
            raise ValidationError(f"{len(hits)} cells match policy={policy}, alpha={alpha}, error_law={error_law}, n={n}")
        return hits[0]

    def to_rows(self):
        rows = []
        for c in self.cells:
            rows.append({
                "policy": c.policy,
                "alpha": c.alpha,
                "error_law": c.error_law,
                "n": c.n,
                "levels": " ".join(format(u, "g") for u in c.levels),
                "R": c.R,
                "n_ok": c.n_ok,
                "n_failed": c.n_failed,
                "slope_qamise": c.slope_qamise,
                "slope_se": c.slope_se,
                "quantile_qamise": c.quantile_qamise,
                "quantile_se": c.quantile_se,
                "m_counts": " ".join(f"{m}:{k}" for m, k in sorted(c.m_counts.items())),
            })
        return rows

    def to_csv(self):
        rows = self.to_rows()
        buf = io.StringIO()
        fields = list(rows[0]) if rows else ["policy"]
        writer = csv.DictWriter(buf, fieldnames=fields, lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: format(v, ".17g") if isinstance(v, float) else v for k, v in row.items()})
        return buf.getvalue()

    def to_long(self):
        """Plot-ready rows: one per (cell, metric)."""
        rows = []
        for c in self.cells:
            for metric, value, se in (
                ("slope_qamise", c.slope_qamise, c.slope_se),
                ("quantile_qamise", c.quantile_qamise, c.quantile_se),
            ):
                rows.append({"policy": c.policy, "alpha": c.alpha, "error_law": c.error_law,
                             "n": c.n, "metric": metric, "value": value, "se": se})
        return rows

    def to_dict(self):
        cells = []
        for c in self.cells:
            d = asdict(c)
            d["levels"] = list(c.levels)
            d["m_counts"] = {str(k): v for k, v in sorted(c.m_counts.items())}
            cells.append(d)
        return {"R": self.R, "cells": cells}

    def to_json(self, **kwargs):
        return json.dumps(self.to_dict(), **kwargs)


def run_study(specs, policies=("oracle",), R=100, n_jobs=1):
    """Run ``R`` replications of every design under every cut-off policy.

    Replication ``r`` of a design draws from seeds derived from
    ``(spec.seed, r)`` only, so results do not depend on ``n_jobs`` or on the
    order of designs. Failed replications are counted and excluded.
    """
    if R < 1:
        raise ValidationError(f"R must be >= 1, got {R}")
    specs = list(specs)
    if not specs:
        raise ValidationError("at least one design is required")
    policies = [parse_policy(p) for p in policies]
    if not policies:
        raise ValidationError("at least one policy is required")
    cells = []
    for spec in specs:
        if n_jobs == 1:
            results = [run_replication(spec, policies, r) for r in range(R)]
        else:
            from joblib import Parallel, delayed

            results = Parallel(n_jobs=n_jobs)(delayed(run_replication)(spec, policies, r) for r in range(R))
        for policy in policies:
            cell = StudyCell(policy, float(spec.alpha), spec.error_law, int(spec.n), tuple(spec.levels), R)
            slopes, quants, ms = [], [], Counter()
            for r, rep in enumerate(results):
                res = rep[policy]
                if isinstance(res, str):
                    cell.n_failed += 1
                    cell.errors.append(res)
                    continue
                m, s, q = res
                ms[m] += 1
                cell.replications.append(r)
                slopes.append(s)
                quants.append(q)
            cell.n_ok = len(slopes)
            cell.slope_values, cell.quantile_values = slopes, quants
            cell.slope_qamise, cell.slope_se = _mean_se(slopes)
            cell.quantile_qamise, cell.quantile_se = _mean_se(quants)
            cell.m_counts = dict(sorted(ms.items()))
            cells.append(cell)
    return StudyReport(cells, R)


@dataclass(frozen=True)
class RateFit:
    target: str
    slope: float
    reference: float
    n_values: tuple
    qamise: tuple


def reference_rate(target, alpha, beta=BETA):
    """Exponent of ``n`` in the convergence rate of the slope or quantile QAMISE."""
    if target == "slope":
        return -(2.0 * beta - 1.0) / (alpha + 2.0 * beta)
    if target == "quantile":
        return -(alpha + 2.0 * beta - 1.0) / (alpha + 2.0 * beta)
    raise ValidationError(f"target must be 'slope' or 'quantile', got {target!r}")


def rate_check(report, target, policy="oracle", alpha=None, error_law=None):
    """Least-squares slope of log QAMISE against log n across the report's sample sizes."""
    policy = parse_policy(policy)
    cells = [c for c in report.cells
             if c.policy == policy
             and (alpha is None or c.alpha == alpha)
             and (error_law is None or c.error_law == error_law)]
    alphas = {c.alpha for c in cells}
    if len(alphas) != 1:
        raise ValidationError(f"rate_check needs cells from exactly one alpha, found {sorted(alphas)}")
    cells = sorted(cells, key=lambda c: c.n)
    ns = [c.n for c in cells]
    if len(set(ns)) < 2 or len(set(ns)) != len(ns):
        raise ValidationError(f"rate_check needs at least two distinct sample sizes, got {ns}")
    attr = "slope_qamise" if target == "slope" else "quantile_qamise"
    ref = reference_rate(target, alphas.pop())
    vals = np.array([getattr(c, attr) for c in cells])
    slope = float(np.polyfit(np.log(ns), np.log(vals), 1)[0])
    return RateFit(target, slope, ref, tuple(ns), tuple(vals.tolist()))
