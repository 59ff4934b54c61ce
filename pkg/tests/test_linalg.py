import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tnconvert.errors import ArgumentError
from tnconvert.linalg import TruncationPolicy, numerical_rank, stable_rank_decision, svd_split

parametrize = pytest.mark.parametrize


def random_matrix(m, n, seed=0):
    return np.random.default_rng(seed).uniform(-1, 1, size=(m, n))


def low_rank(m, n, rank, seed=0):
    rng = np.random.default_rng(seed)
    return rng.standard_normal((m, rank)) @ rng.standard_normal((rank, n))


def test_identity_exact():
    """the 4x4 identity keeps every unit singular value"""
    split = svd_split(np.eye(4), TruncationPolicy.exact())
    assert split.kept_rank == 4
    assert np.allclose(split.singular_values, 1.0)
    assert split.discarded_mass == 0.0
    assert np.allclose(split.left @ split.right, np.eye(4), atol=1e-14)


def test_low_rank_with_cutoff():
    """a rank 2 matrix is recovered with a relative cutoff"""
    a = low_rank(8, 8, 2, seed=1)
    split = svd_split(a, TruncationPolicy.cutoff(1e-10))
    assert split.kept_rank == 2
    assert np.linalg.norm(a - split.left @ split.right) <= 1e-10 * np.linalg.norm(a)


def test_exact_detects_numerical_rank():
    """the exact policy drops singular values at round-off level"""
    assert svd_split(low_rank(10, 7, 3, seed=2), TruncationPolicy.exact()).kept_rank == 3


def test_round_off_is_not_discarded_mass():
    """singular values at round-off level are dropped without counting as truncation"""
    rng = np.random.default_rng(4)
    a = np.outer(rng.standard_normal(6), rng.standard_normal(9))
    split = svd_split(a, TruncationPolicy.cutoff(1e-10))
    assert split.kept_rank == 1
    assert split.discarded_mass == 0.0
    assert numerical_rank(np.linalg.svd(a, compute_uv=False), a.shape) == 1
    assert numerical_rank(np.array([2.0, 1.0, 0.0]), (3, 3)) == 2
    assert numerical_rank(np.zeros(3), (3, 3)) == 1


def test_max_rank_discards_the_tail():
    """the discarded mass equals the norm of the cut singular values"""
    a = random_matrix(6, 5, seed=3)
    s = np.linalg.svd(a, compute_uv=False)
    split = svd_split(a, TruncationPolicy.capped(2))
    assert split.kept_rank == 2
    assert split.discarded_mass == pytest.approx(np.sqrt(np.sum(s[2:] ** 2)), rel=1e-12)
    assert np.linalg.norm(a - split.left @ split.right) == pytest.approx(split.discarded_mass, rel=1e-10)


def test_zero_matrix_keeps_rank_one():
    """a zero matrix splits into rank one with an orthonormal left factor and a zero right factor"""
    split = svd_split(np.zeros((3, 4)), TruncationPolicy.exact())
    assert split.kept_rank == 1
    assert np.allclose(split.left.T @ split.left, np.eye(1))
    assert np.all(split.right == 0.0)


def test_left_factor_orthonormal_and_sign_fixed():
    """left columns are orthonormal and their largest entry is positive"""
    split = svd_split(random_matrix(9, 6, seed=4), TruncationPolicy.exact())
    assert np.allclose(split.left.T @ split.left, np.eye(split.kept_rank), atol=1e-13)
    pivots = np.argmax(np.abs(split.left), axis=0)
    assert np.all(split.left[pivots, np.arange(split.kept_rank)] > 0)


def test_split_is_deterministic():
    """two calls on the same input give bit-identical factors"""
    a = random_matrix(7, 7, seed=5)
    first, second = svd_split(a, TruncationPolicy.exact()), svd_split(a, TruncationPolicy.exact())
    assert np.array_equal(first.left, second.left)
    assert np.array_equal(first.right, second.right)


@parametrize(
    "values,policy,expected",
    [
        ([3.0, 2.0, 1.0], TruncationPolicy.exact(), 3),
        ([3.0, 2.0, 1e-20], TruncationPolicy.exact(), 2),
        ([0.0, 0.0], TruncationPolicy.exact(), 1),
        ([1.0, 0.5, 0.1, 0.01], TruncationPolicy.cutoff(0.05), 3),
        ([1.0, 0.5, 0.1, 0.01], TruncationPolicy.cutoff(0.2), 2),
        ([1.0, 0.5, 0.1, 0.01], TruncationPolicy.capped(1), 1),
        ([1.0, 0.5, 0.1, 0.01], TruncationPolicy.cutoff(0.0, max_rank=2), 2),
        ([1.0, 0.5], TruncationPolicy.cutoff(10.0), 1),
    ],
)
def test_stable_rank_decision(values, policy, expected):
    """kept rank for hand-picked spectra"""
    assert stable_rank_decision(values, policy) == expected


@parametrize("values", [[], [1.0, 2.0], [1.0, -1.0], [np.nan], [[1.0]]])
def test_stable_rank_decision_rejects_bad_spectra(values):
    """empty, unsorted, negative or non-finite spectra are argument errors"""
    with pytest.raises(ArgumentError):
        stable_rank_decision(values, TruncationPolicy.exact())


@parametrize("matrix", [np.array([[1.0, np.inf]]), np.zeros((0, 3)), np.zeros(3)])
def test_svd_split_rejects_bad_input(matrix):
    """non-finite, empty and non-matrix input is rejected"""
    with pytest.raises(ArgumentError):
        svd_split(matrix, TruncationPolicy.exact())


@parametrize(
    "text,policy",
    [
        ("exact", TruncationPolicy.exact()),
        ("eps:1e-10", TruncationPolicy.cutoff(1e-10)),
        ("maxrank:5", TruncationPolicy.capped(5)),
        ("eps:1e-3,maxrank:4", TruncationPolicy.cutoff(1e-3, max_rank=4)),
    ],
)
def test_policy_parse(text, policy):
    """policy strings parse and print back"""
    assert TruncationPolicy.parse(text) == policy
    assert TruncationPolicy.parse(str(policy)) == policy


@parametrize("text", ["bogus", "eps:", "eps:abc", "maxrank:0", "eps:-1", "eps:1,eps:2"])
def test_policy_parse_rejects(text):
    """malformed policy strings are argument errors"""
    with pytest.raises(ArgumentError):
        TruncationPolicy.parse(text)


def alternating_fit(a, k, iterations=200, seed=0):
    """Rank-k least squares fit by alternating projections, an independent check of optimality."""
    x = np.random.default_rng(seed).standard_normal((a.shape[0], k))
    for _ in range(iterations):
        y = np.linalg.lstsq(x, a, rcond=None)[0]
        x = np.linalg.lstsq(y.T, a.T, rcond=None)[0].T
    return np.linalg.norm(a - x @ y)


@settings(max_examples=25, deadline=None)
@given(st.integers(2, 7), st.integers(2, 7), st.integers(0, 2**32 - 1), st.data())
def test_truncation_is_optimal(m, n, seed, data):
    """no rank-k fit beats the truncated SVD"""
    k = data.draw(st.integers(1, min(m, n)))
    a = random_matrix(m, n, seed=seed)
    split = svd_split(a, TruncationPolicy.capped(k))
    error = np.linalg.norm(a - split.left @ split.right)
    assert error == pytest.approx(split.discarded_mass, rel=1e-9, abs=1e-12)
    assert alternating_fit(a, k, seed=seed) >= error * (1 - 1e-8) - 1e-12


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 8), st.integers(1, 8), st.integers(0, 2**32 - 1), st.floats(0.0, 1.0))
def test_kept_and_discarded_mass_add_up(m, n, seed, eps):
    """kept and discarded singular values account for the whole Frobenius norm"""
    a = random_matrix(m, n, seed=seed)
    split = svd_split(a, TruncationPolicy.cutoff(eps))
    total = np.sum(split.singular_values**2) + split.discarded_mass**2
    assert total == pytest.approx(np.linalg.norm(a) ** 2, rel=1e-12)
    assert split.discarded_mass <= eps * np.linalg.norm(a) * (1 + 1e-12) + 1e-15
