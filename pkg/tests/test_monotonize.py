import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fqreg.exceptions import ValidationError
from fqreg.monotonize import (
    QuantileCurve,
    blend,
    isotonize_pava,
    lq_error,
    monotonize,
    monotonize_rows,
    pava,
    rearrange,
)


def levels_for(k):
    return np.linspace(0.1, 0.9, k)


def qc(values):
    return QuantileCurve(levels_for(len(values)), values)


def brute_isotonic(y):
    """Exact L2 projection onto nondecreasing sequences by enumerating block partitions.

    The optimum is constant on consecutive blocks, equal to block means, with
    nondecreasing means; among feasible partitions the least squared error wins.
    """
    y = np.asarray(y, dtype=float)
    n = len(y)
    best, best_sse = None, math.inf
    for cuts in itertools.product((False, True), repeat=n - 1):
        bounds = [0] + [i + 1 for i, c in enumerate(cuts) if c] + [n]
        means = [y[a:b].mean() for a, b in zip(bounds[:-1], bounds[1:])]
        if any(m2 < m1 for m1, m2 in zip(means[:-1], means[1:])):
            continue
        fit = np.concatenate([np.full(b - a, mu) for (a, b), mu in zip(zip(bounds[:-1], bounds[1:]), means)])
        sse = float(np.sum((y - fit) ** 2))
        if sse < best_sse:
            best, best_sse = fit, sse
    return best


class TestQuantileCurve:
    def test_length_mismatch(self):
        with pytest.raises(ValidationError):
            QuantileCurve([0.25, 0.5], [1.0])

    def test_non_finite(self):
        with pytest.raises(ValidationError):
            qc([1.0, np.nan])

    def test_read_only(self):
        c = qc([1.0, 2.0])
        with pytest.raises(ValueError):
            c.values[0] = 5.0


class TestRearrange:
    def test_sorts(self):
        np.testing.assert_array_equal(rearrange(qc([0.3, 0.1, 0.2])).values, [0.1, 0.2, 0.3])

    def test_monotone_unchanged(self):
        np.testing.assert_array_equal(rearrange(qc([0.1, 0.2, 0.2, 0.5])).values, [0.1, 0.2, 0.2, 0.5])

    def test_constant_unchanged(self):
        np.testing.assert_array_equal(rearrange(qc([4.0] * 5)).values, [4.0] * 5)


class TestPava:
    def test_examples(self):
        np.testing.assert_allclose(isotonize_pava(qc([1, 3, 2])).values, [1, 2.5, 2.5], atol=1e-15)
        np.testing.assert_allclose(isotonize_pava(qc([3, 1, 2])).values, [2, 2, 2], atol=1e-15)

    def test_examples_match_oracle(self):
        for y in ([1, 3, 2], [3, 1, 2]):
            np.testing.assert_allclose(isotonize_pava(qc(y)).values, brute_isotonic(y), atol=1e-12)

    def test_monotone_unchanged(self):
        y = [0.0, 0.5, 0.5, 2.0]
        np.testing.assert_array_equal(isotonize_pava(qc(y)).values, y)

    def test_against_brute_force(self, rng):
        for _ in range(200):
            k = int(rng.integers(1, 9))
            y = rng.normal(size=k)
            np.testing.assert_allclose(pava(y), brute_isotonic(y), atol=1e-9)

    def test_weighted(self):
        # Weighted block mean of (3 w=1, 1 w=3) is 1.5.
        np.testing.assert_allclose(pava([3.0, 1.0], weights=[1.0, 3.0]), [1.5, 1.5])


class TestBlend:
    def test_endpoints(self):
        a, b = qc([0.0, 1.0, 2.0]), qc([1.0, 1.0, 3.0])
        np.testing.assert_array_equal(blend(a, b, 1.0).values, a.values)
        np.testing.assert_array_equal(blend(a, b, 0.0).values, b.values)

    def test_half(self):
        np.testing.assert_array_equal(blend(qc([0, 0, 0]), qc([2, 2, 2]), 0.5).values, [1, 1, 1])

    def test_level_mismatch(self):
        with pytest.raises(ValidationError):
            blend(qc([0, 1]), QuantileCurve([0.2, 0.3], [0, 1]))

    def test_lambda_range(self):
        with pytest.raises(ValidationError):
            blend(qc([0, 1]), qc([0, 1]), 1.5)


class TestLqError:
    def test_identical(self):
        c = qc([0.2, -1.0, 3.0])
        for q in (1, 2, 3.5, math.inf):
            assert lq_error(c, c, q) == 0.0

    def test_constant_difference(self):
        assert lq_error(qc([1.0, 2.0, 3.0]), qc([0.0, 1.0, 2.0]), 2) == pytest.approx(1.0, abs=1e-15)

    def test_max(self):
        assert lq_error(qc([0.0, 2.0]), qc([0.0, 0.0]), math.inf) == 2.0

    def test_l1(self):
        assert lq_error(qc([1.0, -3.0]), qc([0.0, 0.0]), 1) == pytest.approx(2.0)

    def test_q_below_one(self):
        with pytest.raises(ValidationError):
            lq_error(qc([0.0]), qc([0.0]), 0.5)


class TestDispatch:
    def test_unknown_method(self):
        with pytest.raises(ValidationError):
            monotonize(qc([1.0, 0.0]), "smooth")
        with pytest.raises(ValidationError):
            monotonize_rows(np.zeros((2, 2)), "smooth")

    def test_rows_match_curves(self, rng):
        vals = rng.normal(size=(6, 5))
        for method in ("rearrange", "isotonize", "blend"):
            rows = monotonize_rows(vals, method, 0.3)
            for i in range(6):
                np.testing.assert_allclose(rows[i], monotonize(qc(vals[i]), method, 0.3).values, atol=1e-15)


finite = st.floats(min_value=-1e3, max_value=1e3, allow_nan=False, allow_infinity=False)
sequences = st.lists(finite, min_size=1, max_size=12)


@settings(max_examples=200, deadline=None)
@given(sequences)
def test_rearrange_preserves_multiset(values):
    out = rearrange(qc(values))
    assert out.is_monotone()
    np.testing.assert_array_equal(np.sort(values), out.values)


@settings(max_examples=200, deadline=None)
@given(sequences)
def test_pava_properties(values):
    out = isotonize_pava(qc(values))
    assert np.all(np.diff(out.values) >= -1e-9)
    assert out.values.mean() == pytest.approx(np.mean(values), abs=1e-9)
    again = isotonize_pava(QuantileCurve(out.levels, out.values))
    np.testing.assert_allclose(again.values, out.values, atol=1e-9)


@settings(max_examples=200, deadline=None)
@given(sequences, st.floats(min_value=0.0, max_value=1.0))
def test_blend_is_monotone(values, lam):
    out = monotonize(qc(values), "blend", lam)
    assert np.all(np.diff(out.values) >= -1e-9)


@settings(max_examples=200, deadline=None)
@given(sequences, sequences)
def test_monotonization_never_hurts(values, other):
    # Monotone truth: any sorted sequence of the same length.
    k = len(values)
    truth = np.sort((other * k)[:k])
    raw, target = qc(values), qc(truth)
    for q in (1.0, 2.0, math.inf):
        base = lq_error(raw, target, q)
        assert lq_error(rearrange(raw), target, q) <= base + 1e-9 * (1 + base)
        assert lq_error(isotonize_pava(raw), target, q) <= base + 1e-9 * (1 + base)
