"""Empirical covariance kernel, its PCA eigenbasis and principal scores."""

import json
from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .curves import GridFunction, as_matrix, trapezoid_weights
from .exceptions import SolverError, ValidationError

CLAMP_RTOL = 1e-10
USABLE_RTOL = 1e-12


@dataclass(frozen=True, eq=False)
class KernelOnGrid:
    """Covariance kernel evaluated on the ``G x G`` product grid."""

    matrix: np.ndarray

    def __post_init__(self):
        mat = np.array(self.matrix, dtype=float)
        if mat.ndim != 2 or mat.shape[0] != mat.shape[1] or mat.shape[0] < 2:
            raise ValidationError(f"kernel matrix must be square with G >= 2, got {mat.shape}")
        if not np.all(np.isfinite(mat)):
            raise ValidationError("kernel matrix must be finite")
        if not np.array_equal(mat, mat.T):
            raise ValidationError("kernel matrix must be exactly symmetric")
        mat.flags.writeable = False
        object.__setattr__(self, "matrix", mat)

    @property
    def grid_size(self):
        return self.matrix.shape[0]


@dataclass(frozen=True, eq=False)
class EigenSystem:
    """Leading eigenpairs of a kernel, eigenfunctions stored row-wise.

    Attributes
    ----------
    eigenvalues : ndarray of shape (count,)
        Nonincreasing and nonnegative.
    eigenfunctions : ndarray of shape (count, G)
        Orthonormal under the trapezoid inner product.
    """

    eigenvalues: np.ndarray
    eigenfunctions: np.ndarray

    def __post_init__(self):
        vals = np.array(self.eigenvalues, dtype=float)
        funcs = np.array(self.eigenfunctions, dtype=float)
        if funcs.ndim != 2 or vals.ndim != 1 or funcs.shape[0] != vals.shape[0]:
            raise ValidationError("eigenvalues and eigenfunctions have inconsistent shapes")
        vals.flags.writeable = False
        funcs.flags.writeable = False
        object.__setattr__(self, "eigenvalues", vals)
        object.__setattr__(self, "eigenfunctions", funcs)

    @property
    def count(self):
        return self.eigenvalues.shape[0]

    @property
    def grid_size(self):
        return self.eigenfunctions.shape[1]

    @property
    def usable_count(self):
        """Number of eigenvalues above ``1e-12`` times the leading one."""
        if self.count == 0 or self.eigenvalues[0] <= 0:
            return 0
        return int(np.sum(self.eigenvalues > USABLE_RTOL * self.eigenvalues[0]))

    def function(self, j):
        """The ``j``-th eigenfunction (1-based, as in the usual notation)."""
        if not 1 <= j <= self.count:
            raise ValidationError(f"eigenfunction index {j} outside 1..{self.count}")
        return GridFunction(self.eigenfunctions[j - 1])

    def truncate(self, m):
        return EigenSystem(self.eigenvalues[:m], self.eigenfunctions[:m])

    def with_signs(self, signs):
        """Return a copy with eigenfunction ``j`` multiplied by ``signs[j]``."""
        signs = np.asarray(signs, dtype=float)
        if signs.shape != (self.count,) or not np.all(np.abs(signs) == 1.0):
            raise ValidationError(f"need {self.count} signs of +1 or -1, got {signs.tolist()}")
        return EigenSystem(self.eigenvalues, self.eigenfunctions * signs[:, None])

    def to_dict(self):
        return {
            "eigenvalues": self.eigenvalues.tolist(),
            "eigenfunctions": self.eigenfunctions.tolist(),
        }

    @classmethod
    def from_dict(cls, data):
        return cls(np.asarray(data["eigenvalues"], dtype=float),
                   np.asarray(data["eigenfunctions"], dtype=float).reshape(len(data["eigenvalues"]), -1))

    def to_json(self):
        return json.dumps(self.to_dict())


@dataclass(frozen=True, eq=False)
class ScoresMatrix:
    """Estimated principal scores with a leading column of ones."""

    scores: np.ndarray

    @property
    def n(self):
        return self.scores.shape[0]

    @property
    def m(self):
        return self.scores.shape[1] - 1


def empirical_kernel(curves):
    """Empirical covariance ``K(s, t) = mean_i (X_i(s) - Xbar(s)) (X_i(t) - Xbar(t))``.

    Parameters
    ----------
    curves : sequence of GridFunction or ndarray of shape (n, G)

    Returns
    -------
    KernelOnGrid
    """
    X = as_matrix(curves)
    n = X.shape[0]
    if n < 2:
        raise ValidationError(f"at least two curves are needed to estimate a covariance kernel, got {n}")
    C = X - X.mean(axis=0)
    K = C.T @ C / n
    K = 0.5 * (K + K.T)
    return KernelOnGrid(K)


def _apply_sign_convention(funcs):
    # Largest-magnitude entry positive; argmax returns the first index on ties.
    idx = np.argmax(np.abs(funcs), axis=1)
    signs = np.sign(funcs[np.arange(funcs.shape[0]), idx])
    signs[signs == 0] = 1.0
    return funcs * signs[:, None]


def eigendecompose(kernel, max_components=None):
    """Solve the quadrature-discretized eigenproblem of a kernel.

    With trapezoid weights ``w`` the symmetric matrix
    ``diag(sqrt w) K diag(sqrt w)`` is diagonalized and its eigenvectors
    mapped back by ``v / sqrt w``, so the returned eigenfunctions satisfy
    ``sum_s w_s K(t, s) phi(s) = kappa phi(t)`` and are orthonormal under the
    trapezoid inner product.

    Eigenvalues within ``-1e-10 * kappa_1`` of zero are clamped to zero; more
    negative eigenvalues mean the kernel is not positive semidefinite.
    """
    if not isinstance(kernel, KernelOnGrid):
        kernel = KernelOnGrid(kernel)
    G = kernel.grid_size
    if max_components is None:
        max_components = G
    if not 1 <= max_components <= G:
        raise ValidationError(f"max_components must lie in 1..{G}, got {max_components}")
    sw = np.sqrt(trapezoid_weights(G))
    M = sw[:, None] * kernel.matrix * sw[None, :]
    M = 0.5 * (M + M.T)
    try:
        vals, vecs = linalg.eigh(M, subset_by_index=[G - max_components, G - 1])
    except (linalg.LinAlgError, ValueError) as exc:
        raise SolverError(f"symmetric eigensolver failed: {exc}") from exc
    vals = vals[::-1].copy()
    vecs = vecs[:, ::-1]
    scale = np.abs(vals).max()
    if vals.min() < -CLAMP_RTOL * scale:
        raise ValidationError(
            f"kernel is not positive semidefinite: eigenvalue {vals.min():.3e} vs leading {scale:.3e}"
        )
    vals = np.maximum(vals, 0.0)
    funcs = _apply_sign_convention((vecs / sw[:, None]).T)
    return EigenSystem(vals, funcs)


def project_scores(X, mean, eig, m):
    """Scores of the rows of ``X`` (centred at ``mean``) against the first ``m`` eigenfunctions.

    Returns an ``(n, m + 1)`` array whose first column is ones.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    w = trapezoid_weights(eig.grid_size)
    centred = X - np.asarray(mean, dtype=float)
    out = np.empty((X.shape[0], m + 1))
    out[:, 0] = 1.0
    out[:, 1:] = centred @ (eig.eigenfunctions[:m] * w).T
    return out


def compute_scores(curves, eig, m):
    """Principal scores of the training curves, with ``xi_{i0} = 1``.

    Raises
    ------
    ValidationError
        Unless ``1 <= m <= eig.count`` and ``m <= n - 1``.
    """
    X = as_matrix(curves)
    n = X.shape[0]
    if X.shape[1] != eig.grid_size:
        raise ValidationError(f"grid mismatch: curves have {X.shape[1]} points, eigenfunctions {eig.grid_size}")
    if not 1 <= m <= eig.count:
        raise ValidationError(f"m must lie in 1..{eig.count}, got {m}")
    if m > n - 1:
        raise ValidationError(f"m must not exceed n - 1 = {n - 1}, got {m}")
    return ScoresMatrix(project_scores(X, X.mean(axis=0), eig, m))
