"""Check-loss minimization by a primal-dual (Frisch-Newton) interior point method.

The linear quantile regression ``min_beta mean_i rho_u(y_i - z_i' beta)`` is
solved through its bounded dual

    max_a  y'a   subject to  Z'a = (1 - u) Z'1,  0 <= a <= 1,

with a Mehrotra predictor-corrector path-following iteration. The interior
solution is then snapped to a basic (vertex) solution and checked against the
exact optimality conditions, so returned coefficients interpolate ``m + 1``
observations whenever the design allows it.
"""

import warnings
from dataclasses import dataclass

import numpy as np
from scipy import linalg

from ._validation import check_design, check_quantile
from .exceptions import SolverError, ValidationError

GAP_RTOL = 1e-8
MAX_ITER = 200
CERTIFICATE_TOL = 1e-6
_STEP_DAMPING = 0.99995
_KKT_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class QrSolution:
    """Result of one check-loss minimization.

    Attributes
    ----------
    coefficients : ndarray of shape (p,)
        Intercept first.
    objective : float
        Attained mean check loss.
    subgradient_norm : float
        Euclidean norm of ``mean_i {u - 1(y_i <= z_i' beta)} z_i``.
    bound : float
        ``(p / n) * max_i ||z_i||``, the value ``subgradient_norm`` may not exceed
        (up to ``CERTIFICATE_TOL``) at an optimum with at most ``p`` zero residuals.
    """

    coefficients: np.ndarray
    objective: float
    subgradient_norm: float
    bound: float
    u: float
    iterations: int = 0
    vertex: bool = False

    @property
    def certified(self):
        return self.subgradient_norm <= self.bound + CERTIFICATE_TOL


def check_function(r, u):
    """Elementwise ``rho_u(r) = {u - 1(r <= 0)} r``."""
    r = np.asarray(r, dtype=float)
    return (u - (r <= 0)) * r


def check_loss(residuals, u):
    """Mean check loss ``(1/n) sum_i rho_u(r_i)``.

    >>> check_loss([-1.0, 1.0], 0.5)
    0.5
    """
    u = check_quantile(u)
    r = np.atleast_1d(np.asarray(residuals, dtype=float))
    if r.size == 0:
        raise ValidationError("residuals must be nonempty")
    return float(np.mean(check_function(r, u)))


def subgradient_vector(design, responses, coefficients, u):
    """``(1/n) sum_i {u - 1(y_i <= z_i' beta)} z_i``."""
    Z = np.asarray(design, dtype=float)
    y = np.asarray(responses, dtype=float)
    beta = np.asarray(coefficients, dtype=float)
    psi = u - (y <= Z @ beta)
    return psi @ Z / Z.shape[0]


def certificate_bound(design):
    Z = np.asarray(design, dtype=float)
    n, p = Z.shape
    return p / n * float(np.max(np.linalg.norm(Z, axis=1)))


def _step_bound(v, dv):
    neg = dv < 0
    if not np.any(neg):
        return 1e20
    return float(np.min(-v[neg] / dv[neg]))


def _spd_solve(Q, rhs):
    # Rank-deficient designs fall back to least squares; any minimizer is acceptable.
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("error", linalg.LinAlgWarning)
            return linalg.solve(Q, rhs, assume_a="pos", check_finite=False)
    except (linalg.LinAlgError, linalg.LinAlgWarning, ValueError):
        return linalg.lstsq(Q, rhs, check_finite=False)[0]


def _frisch_newton(Z, y, u, gap_tol, max_iter):
    """Return ``(beta, iterations, converged)`` from the dual path-following method."""
    n, p = Z.shape
    A = Z.T
    c = -y
    b = (1.0 - u) * Z.sum(axis=0)
    x = np.full(n, 1.0 - u)
    s = 1.0 - x
    dual = linalg.lstsq(Z, c, check_finite=False)[0]
    r = c - Z @ dual
    r = np.where(r == 0, 1e-3, r)
    z = np.maximum(r, 0.0)
    w = z - r
    gap = c @ x - dual @ b + w.sum()
    it = 0
    while gap > gap_tol and it < max_iter:
        it += 1
        q = 1.0 / (z / x + w / s)
        r = z - w
        Q = (A * q) @ Z
        rhs = A @ (q * r)
        dy = _spd_solve(Q, rhs)
        dx = q * (Z @ dy - r)
        ds = -dx
        dz = -z * (dx / x + 1.0)
        dw = -w * (ds / s + 1.0)
        fp = min(_STEP_DAMPING * min(_step_bound(x, dx), _step_bound(s, ds)), 1.0)
        fd = min(_STEP_DAMPING * min(_step_bound(w, dw), _step_bound(z, dz)), 1.0)
        if min(fp, fd) < 1.0:
            mu = z @ x + w @ s
            g = (z + fd * dz) @ (x + fp * dx) + (w + fd * dw) @ (s + fp * ds)
            mu = mu * (g / mu) ** 3 / (2.0 * n)
            dxdz = dx * dz
            dsdw = ds * dw
            xinv = 1.0 / x
            sinv = 1.0 / s
            xi = mu * (xinv - sinv)
            rhs = rhs + A @ (q * (dxdz - dsdw - xi))
            dy = _spd_solve(Q, rhs)
            dx = q * (Z @ dy + xi - r - dxdz + dsdw)
            ds = -dx
            dz = mu * xinv - z - xinv * z * dx - dxdz
            dw = mu * sinv - w - sinv * w * ds - dsdw
            fp = min(_STEP_DAMPING * min(_step_bound(x, dx), _step_bound(s, ds)), 1.0)
            fd = min(_STEP_DAMPING * min(_step_bound(w, dw), _step_bound(z, dz)), 1.0)
        x = x + fp * dx
        s = s + fp * ds
        dual = dual + fd * dy
        w = w + fd * dw
        z = z + fd * dz
        gap = c @ x - dual @ b + w.sum()
        if not np.isfinite(gap):
            raise SolverError("interior point iterates became non-finite")
    return -dual, it, gap <= gap_tol


def _kkt_holds(Z, y, u, beta, basis):
    """Exact optimality check for a basic solution interpolating ``basis``.

    Off-basis observations contribute ``u - 1(r_i < 0)``; the basic multipliers
    solving the stationarity equation must lie in ``[u - 1, u]``.
    """
    r = y - Z @ beta
    off = np.ones(len(y), dtype=bool)
    off[basis] = False
    psi = u - (r[off] < 0)
    g = psi @ Z[off]
    try:
        lam = -linalg.solve(Z[basis].T, g, check_finite=False)
    except (linalg.LinAlgError, ValueError):
        return False
    return bool(np.all(lam >= u - 1.0 - _KKT_TOL) and np.all(lam <= u + _KKT_TOL))


def _vertex(Z, y, u, beta):
    """Snap ``beta`` to the basic solution through its ``p`` smallest residuals."""
    p = Z.shape[1]
    r = y - Z @ beta
    basis = np.sort(np.argsort(np.abs(r), kind="stable")[:p])
    ZB = Z[basis]
    if np.linalg.cond(ZB) > 1e12:
        return None, None
    try:
        vb = linalg.solve(ZB, y[basis], check_finite=False)
    except (linalg.LinAlgError, ValueError):
        return None, None
    return vb, basis


def solve_check_loss(design, responses, u, *, gap_rtol=GAP_RTOL, max_iter=MAX_ITER):
    """Minimize the mean check loss of a linear quantile regression.

    Parameters
    ----------
    design : ndarray of shape (n, p)
        First column must be all ones (intercept).
    responses : ndarray of shape (n,)
    u : float
        Quantile index in (0, 1).

    Returns
    -------
    QrSolution

    Raises
    ------
    ValidationError
        Bad shapes, a missing intercept column or ``n <= p``.
    SolverError
        The interior point method neither reached the duality-gap tolerance nor
        produced a solution satisfying the optimality conditions.
    """
    u = check_quantile(u)
    Z, y = check_design(design, responses)
    n, p = Z.shape
    if p < 1 or not np.all(Z[:, 0] == 1.0):
        raise ValidationError("design column 0 must be all ones (intercept)")
    if n <= p:
        raise ValidationError(f"need n >= m + 2 observations, got n={n} for {p} coefficients")

    scale = float(np.max(np.abs(y))) if n else 0.0
    ys = y / scale if scale > 0 else y
    # Duality gap is on the sum scale of the rescaled problem.
    beta_s, it, converged = _frisch_newton(Z, ys, u, gap_rtol * n, max_iter)
    beta = beta_s * scale if scale > 0 else beta_s
    obj = float(np.mean(check_function(y - Z @ beta, u)))

    vertex = False
    vb, basis = _vertex(Z, y, u, beta)
    if vb is not None:
        vobj = float(np.mean(check_function(y - Z @ vb, u)))
        optimal = _kkt_holds(Z, y, u, vb, basis)
        if optimal or vobj <= obj:
            beta, obj, vertex = vb, vobj, True
            converged = converged or optimal
    if not converged:
        raise SolverError(
            f"interior point method did not converge in {max_iter} iterations (u={u}, n={n}, p={p})"
        )
    sub = subgradient_vector(Z, y, beta, u)
    return QrSolution(
        coefficients=beta,
        objective=obj,
        subgradient_norm=float(np.linalg.norm(sub)),
        bound=certificate_bound(Z),
        u=u,
        iterations=it,
        vertex=vertex,
    )
