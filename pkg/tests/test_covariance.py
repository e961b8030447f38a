import numpy as np
import pytest

from fqreg.covariance import (
    KernelOnGrid,
    compute_scores,
    eigendecompose,
    empirical_kernel,
)
from fqreg.curves import GridFunction, l2_inner, trapezoid_weights
from fqreg.exceptions import ValidationError
from fqreg.simulate import DesignSpec, gen_dataset


def brute_kernel(X):
    n, G = X.shape
    mean = [sum(X[i, g] for i in range(n)) / n for g in range(G)]
    return np.array([[sum((X[i, g] - mean[g]) * (X[i, h] - mean[h]) for i in range(n)) / n
                      for h in range(G)] for g in range(G)])


class TestEmpiricalKernel:
    def test_symmetric_constants(self):
        K = empirical_kernel([GridFunction(np.ones(7)), GridFunction(-np.ones(7))])
        assert np.array_equal(K.matrix, np.ones((7, 7)))

    def test_identical_curves(self):
        f = GridFunction(np.linspace(0, 3, 5))
        assert not np.any(empirical_kernel([f, f, f]).matrix)

    def test_two_point_grid(self):
        K = empirical_kernel([GridFunction([1, 0]), GridFunction([0, 1])])
        np.testing.assert_allclose(K.matrix, [[0.25, -0.25], [-0.25, 0.25]], atol=1e-15)

    def test_matches_brute_force(self, rng):
        X = rng.normal(size=(6, 5))
        K = empirical_kernel(X)
        np.testing.assert_allclose(K.matrix, brute_kernel(X), atol=1e-12)
        assert np.array_equal(K.matrix, K.matrix.T)

    def test_needs_two_curves(self):
        with pytest.raises(ValidationError):
            empirical_kernel([GridFunction([1.0, 2.0])])


class TestEigendecompose:
    def test_rank_one_constant(self):
        eig = eigendecompose(empirical_kernel([GridFunction(np.ones(11)), GridFunction(-np.ones(11))]))
        assert eig.eigenvalues[0] == pytest.approx(1.0, abs=1e-12)
        np.testing.assert_allclose(eig.eigenfunctions[0], np.ones(11), atol=1e-10)
        assert np.all(eig.eigenvalues[1:] <= 1e-12)

    def test_zero_kernel(self):
        eig = eigendecompose(KernelOnGrid(np.zeros((6, 6))))
        assert not np.any(eig.eigenvalues)
        assert eig.usable_count == 0

    def test_component_bounds(self):
        K = KernelOnGrid(np.eye(4))
        with pytest.raises(ValidationError):
            eigendecompose(K, 0)
        with pytest.raises(ValidationError):
            eigendecompose(K, 5)

    def test_not_psd(self):
        with pytest.raises(ValidationError, match="positive semidefinite"):
            eigendecompose(KernelOnGrid(np.diag([1.0, -1.0, 0.5])))

    def test_integral_equation_and_orthonormality(self, design_data):
        X = design_data.values
        K = empirical_kernel(X)
        eig = eigendecompose(K, 10)
        w = trapezoid_weights(X.shape[1])
        for j in range(10):
            phi = eig.eigenfunctions[j]
            lhs = K.matrix @ (w * phi)
            np.testing.assert_allclose(lhs, eig.eigenvalues[j] * phi, atol=1e-10 * eig.eigenvalues[0])
            for k in range(10):
                ip = l2_inner(eig.function(j + 1), eig.function(k + 1))
                assert abs(ip - (j == k)) <= 1e-6
        assert np.all(np.diff(eig.eigenvalues) <= 0)

    def test_sign_convention(self, design_data):
        eig = eigendecompose(empirical_kernel(design_data.values), 8)
        for phi in eig.eigenfunctions:
            assert phi[np.argmax(np.abs(phi))] > 0

    def test_reconstruction(self, rng):
        X = rng.normal(size=(15, 12)).cumsum(axis=1)
        K = empirical_kernel(X)
        eig = eigendecompose(K, 12)
        recon = (eig.eigenfunctions.T * eig.eigenvalues) @ eig.eigenfunctions
        np.testing.assert_allclose(recon, K.matrix, atol=1e-6 * eig.eigenvalues[0])

    def test_relabeling_invariance(self, design_data, rng):
        X = design_data.values
        perm = rng.permutation(X.shape[0])
        a = eigendecompose(empirical_kernel(X), 5)
        b = eigendecompose(empirical_kernel(X[perm]), 5)
        np.testing.assert_allclose(a.eigenvalues, b.eigenvalues, rtol=1e-10)
        np.testing.assert_allclose(np.abs(a.eigenfunctions), np.abs(b.eigenfunctions), atol=1e-8)

    def test_json_round_trip(self, design_data):
        from fqreg.covariance import EigenSystem
        import json

        eig = eigendecompose(empirical_kernel(design_data.values), 3)
        back = EigenSystem.from_dict(json.loads(eig.to_json()))
        assert np.array_equal(back.eigenvalues, eig.eigenvalues)
        assert np.array_equal(back.eigenfunctions, eig.eigenfunctions)

    @pytest.mark.slow
    def test_eigenvalue_ratio_monte_carlo(self):
        # Population eigenvalues of the alpha = 2 design are j^-2, so kappa_1 / kappa_2 = 4.
        ratios = []
        for r in range(100):
            data = gen_dataset(DesignSpec(alpha=2.0, n=500, seed=5), replication=r)
            vals = eigendecompose(empirical_kernel(data.values), 2).eigenvalues
            ratios.append(vals[0] / vals[1])
        assert 0.7 * 4 <= np.mean(ratios) <= 1.3 * 4
        assert 0.7 * 4 <= np.median(ratios) <= 1.3 * 4


class TestScores:
    def test_constants(self):
        curves = [GridFunction(np.ones(9)), GridFunction(-np.ones(9))]
        eig = eigendecompose(empirical_kernel(curves), 1)
        S = compute_scores(curves, eig, 1)
        np.testing.assert_allclose(S.scores, [[1, 1], [1, -1]], atol=1e-10)

    def test_identical_curves_zero_scores(self, design_data):
        eig = eigendecompose(empirical_kernel(design_data.values), 3)
        same = np.repeat(design_data.values[:1], 4, axis=0)
        S = compute_scores(same, eig, 3)
        assert np.all(S.scores[:, 0] == 1)
        np.testing.assert_allclose(S.scores[:, 1:], 0, atol=1e-12)

    def test_range_errors(self, design_data):
        X = design_data.values[:4]
        eig = eigendecompose(empirical_kernel(X), 5)
        with pytest.raises(ValidationError):
            compute_scores(X, eig, 0)
        with pytest.raises(ValidationError):
            compute_scores(X, eig, 4)  # m > n - 1
        with pytest.raises(ValidationError):
            compute_scores(design_data.values, eig, 6)

    def test_empirical_moments(self, design_data):
        X = design_data.values
        eig = eigendecompose(empirical_kernel(X), 8)
        S = compute_scores(X, eig, 8).scores
        assert np.all(S[:, 0] == 1)
        np.testing.assert_allclose(S[:, 1:].mean(axis=0), 0, atol=1e-8)
        cov = S[:, 1:].T @ S[:, 1:] / X.shape[0]
        kap = eig.eigenvalues
        np.testing.assert_allclose(np.diag(cov), kap, atol=1e-6 * kap[0])
        off = cov - np.diag(np.diag(cov))
        assert np.all(np.abs(off) <= 1e-6 * np.sqrt(np.outer(kap, kap)))
