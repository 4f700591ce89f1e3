# src/test_sparse.py
import math

import numpy as np
import pytest

from src import sparse as sparse_mod
from src.estimators import exact_mean
from src.sparse import (
    SparseVector,
    enumerate_mean,
    membership,
    sample_nonzero,
    sparse_exact,
    sparse_sample,
)


def random_sparse(rng: np.random.Generator, dim: int, max_nnz: int = 20) -> SparseVector:
    nnz = int(rng.integers(0, max_nnz + 1))
    coords = rng.choice(dim, size=min(nnz, dim), replace=False)
    return SparseVector(dim, [(int(t), float(rng.normal())) for t in coords])


def test_put_get_and_swap_remove() -> None:
    x = SparseVector(10, [(3, 2.5), (7, -1.0), (1, 4.0)])
    assert x.nnz == 3
    assert membership(x, 3) == (True, 2.5)
    assert membership(x, 4) == (False, 0.0)
    x.put(3, 0.0)
    assert x.nnz == 2 and x.get(3) == 0.0
    assert x.get(7) == -1.0 and x.get(1) == 4.0
    x.put(1, 6.0)
    assert x.get(1) == 6.0 and x.nnz == 2
    with pytest.raises(ValueError):
        membership(x, 10)
    with pytest.raises(ValueError):
        SparseVector(5, [(1, 1.0), (1, 2.0)])
    with pytest.raises(ValueError):
        SparseVector(0)


def test_dense_round_trip() -> None:
    row = np.array([0.0, 1.5, 0.0, -2.0, 0.0])
    x = SparseVector.from_dense(row)
    assert x.nnz == 2
    assert np.array_equal(x.to_dense(), row)
    assert x == SparseVector(5, [(3, -2.0), (1, 1.5)])


def test_sample_nonzero() -> None:
    rng = np.random.default_rng(0)
    single = SparseVector(20, [(7, 1.0)])
    assert all(sample_nonzero(single, rng) == 7 for _ in range(50))
    pair = SparseVector(20, [(1, 1.0), (2, 1.0)])
    draws = np.array([sample_nonzero(pair, rng) for _ in range(10_000)])
    freq = float(np.mean(draws == 1))
    assert abs(freq - 0.5) <= 3 * math.sqrt(0.25 / 10_000)
    pair.put(1, 0.0)
    assert all(sample_nonzero(pair, rng) == 2 for _ in range(50))
    with pytest.raises(ValueError):
        sample_nonzero(SparseVector(4), rng)


def test_identical_vectors_sample_zero() -> None:
    rng = np.random.default_rng(1)
    x = SparseVector(50, [(2, 1.0), (9, -3.0), (40, 0.5)])
    y = SparseVector(50, [(40, 0.5), (2, 1.0), (9, -3.0)])
    assert all(sparse_sample(x, y, rng) == 0.0 for _ in range(100))
    assert sparse_exact(x, y) == 0.0


def test_disjoint_unit_supports() -> None:
    x0 = SparseVector(4, [(0, 1.0)])
    x1 = SparseVector(4, [(1, 1.0)])
    assert enumerate_mean(x0, x1) == pytest.approx(0.5)
    assert sparse_exact(x0, x1) == pytest.approx(0.5)


def test_all_zero_sides() -> None:
    x0 = SparseVector(5, [(0, 2.0), (3, 1.0)])
    empty = SparseVector(5)
    assert sparse_exact(x0, empty) == pytest.approx((4.0 + 1.0) / 5)
    assert enumerate_mean(x0, empty) == pytest.approx(sparse_exact(x0, empty))
    assert enumerate_mean(empty, x0) == pytest.approx(sparse_exact(x0, empty))
    assert sparse_sample(empty, SparseVector(5), np.random.default_rng(0)) == 0.0
    assert sparse_exact(empty, SparseVector(5)) == 0.0


def test_enumeration_is_unbiased() -> None:
    rng = np.random.default_rng(2)
    for _ in range(200):
        dim = int(rng.integers(1, 40))
        x0 = random_sparse(rng, dim)
        x1 = random_sparse(rng, dim)
        assert enumerate_mean(x0, x1) == pytest.approx(sparse_exact(x0, x1), abs=1e-9)


def test_full_support_matches_dense() -> None:
    rng = np.random.default_rng(3)
    a = rng.normal(size=16) + 10.0
    b = rng.normal(size=16) - 10.0
    assert sparse_exact(SparseVector.from_dense(a), SparseVector.from_dense(b)) == pytest.approx(exact_mean(a, b))


def test_sampled_mean_converges() -> None:
    rng = np.random.default_rng(4)
    x0 = SparseVector(100, [(t, 1.0 + t / 10) for t in range(0, 30, 3)])
    x1 = SparseVector(100, [(t, 2.0) for t in range(0, 40, 4)])
    draws = np.array([sparse_sample(x0, x1, rng) for _ in range(20_000)])
    se = draws.std(ddof=1) / math.sqrt(draws.size)
    assert abs(draws.mean() - sparse_exact(x0, x1)) <= 4 * se


def test_one_membership_lookup_per_side() -> None:
    lookups = []
    original = sparse_mod.membership

    def counting(x: SparseVector, t: int):
        lookups.append(t)
        return original(x, t)

    x0 = SparseVector(20, [(1, 2.0), (5, -1.0), (9, 0.5)])
    x1 = SparseVector(20, [(5, 3.0), (12, 1.0)])
    rng = np.random.default_rng(5)
    sparse_mod.membership = counting
    try:
        for _ in range(50):
            lookups.clear()
            sparse_sample(x0, x1, rng)
            assert len(lookups) == 2
        lookups.clear()
        sparse_sample(x0, SparseVector(20), rng)
        assert len(lookups) == 1
    finally:
        sparse_mod.membership = original


def test_dimension_mismatch() -> None:
    with pytest.raises(ValueError):
        sparse_exact(SparseVector(3), SparseVector(4))
    with pytest.raises(ValueError):
        sparse_sample(SparseVector(3, [(0, 1.0)]), SparseVector(4), np.random.default_rng(0))


if __name__ == "__main__":
    test_put_get_and_swap_remove()
    test_dense_round_trip()
    test_sample_nonzero()
    test_identical_vectors_sample_zero()
    test_disjoint_unit_supports()
    test_all_zero_sides()
    test_enumeration_is_unbiased()
    test_full_support_matches_dense()
    test_sampled_mean_converges()
    test_one_membership_lookup_per_side()
    test_dimension_mismatch()
    print("[OK] sparse tests passed")
