# src/test_hierarchical.py
import numpy as np
import pytest
from scipy.cluster.hierarchy import linkage

from src.bandit import BanditConfig
from src.hierarchical import (
    ClusterPairArm,
    Dendrogram,
    arm_set_update,
    cluster,
    pair_exact,
    pair_sample,
)
from src.oracle import brute_hier, tree_accuracy


def nested_fixture(seed: int = 0, d: int = 50) -> np.ndarray:
    """Two groups, two pairs per group, two points per pair."""
    rng = np.random.default_rng(seed)
    v = np.where(np.arange(d) % 2 == 0, 1.0, -1.0)
    rows = []
    for g in (5.0, -5.0):
        for p in (1.0, -1.0):
            for _ in range(2):
                rows.append(g + p * v + 0.1 * rng.normal(size=d))
    return np.array(rows)


def test_pair_sample_and_exact() -> None:
    X = np.array([[0.0, 0.0], [3.0, 4.0]])
    arm = ClusterPairArm(0, 1, np.array([0]), np.array([1]))
    rng = np.random.default_rng(0)
    assert all(pair_sample(arm, X, rng) in (9.0, 16.0) for _ in range(50))
    assert pair_exact(X, [0], [1]) == pytest.approx(12.5)
    same = np.zeros((4, 3))
    twin = ClusterPairArm(0, 1, np.array([0, 1]), np.array([2, 3]))
    assert pair_sample(twin, same, rng) == 0.0


def test_cluster_pair_validation() -> None:
    with pytest.raises(ValueError):
        ClusterPairArm(0, 1, np.array([], dtype=np.int64), np.array([1]))
    with pytest.raises(ValueError):
        ClusterPairArm(0, 1, np.array([0, 2]), np.array([2]))
    with pytest.raises(ValueError):
        pair_exact(np.zeros((2, 2)), [], [1])


def test_average_linkage_is_convex_combination() -> None:
    rng = np.random.default_rng(1)
    X = rng.normal(size=(9, 4))
    A, B, C = [0, 1], [2, 3, 4], [5, 6, 7, 8]
    merged = pair_exact(X, A + B, C)
    expected = (len(A) * pair_exact(X, A, C) + len(B) * pair_exact(X, B, C)) / (len(A) + len(B))
    assert merged == pytest.approx(expected)


def test_arm_set_update_counts() -> None:
    clusters = [0, 1, 2, 3]
    active = {(a, b): None for a in clusters for b in clusters if a < b}
    deleted, added = arm_set_update(active, (0, 1), 4)
    assert len(deleted) == 5 and sorted(added) == [(2, 4), (3, 4)]
    deleted, added = arm_set_update({(2, 5): None}, (2, 5), 6)
    assert deleted == [(2, 5)] and added == []
    with pytest.raises(RuntimeError):
        arm_set_update(active, (1, 9), 5)


def test_three_points_on_a_line() -> None:
    X = np.array([[0.0], [1.0], [10.0]])
    res = cluster(X, BanditConfig(), exact_merge_values=True)
    first, second = res.dendrogram.merges
    assert (first.a, first.b, first.value) == (0, 1, 1.0)
    assert (second.a, second.b, second.new_id) == (2, 3, 4)
    assert second.value == pytest.approx(90.5)
    assert not second.approximate
    # every arm here is small enough to reach its ceiling, so sampled runs are exact too
    loose = cluster(X, BanditConfig())
    assert loose.dendrogram.merges[1].value == pytest.approx(90.5)
    assert not any(m.approximate for m in loose.dendrogram.merges)
    # a lone large arm is accepted after warm-up on its sampled mean
    big = cluster(nested_fixture(), BanditConfig())
    assert big.dendrogram.merges[-1].approximate


def test_brute_hier_three_points() -> None:
    dend = brute_hier(np.array([[0.0], [1.0], [10.0]]))
    assert [(m.a, m.b) for m in dend.merges] == [(0, 1), (2, 3)]
    assert dend.merges[1].value == pytest.approx(90.5)


def test_identical_points_merge_at_zero() -> None:
    res = cluster(np.zeros((5, 2)), BanditConfig())
    res.dendrogram.validate()
    assert all(m.value == 0.0 for m in res.dendrogram.merges)


def test_tight_pairs_merge_first() -> None:
    X = np.array([[0.0, 0.0], [0.1, 0.0], [10.0, 10.0], [10.1, 10.0]])
    merges = cluster(X, BanditConfig(seed=3)).dendrogram.merges
    assert {(merges[0].a, merges[0].b), (merges[1].a, merges[1].b)} == {(0, 1), (2, 3)}
    assert {merges[2].a, merges[2].b} == {4, 5}


def test_arm_count_identity() -> None:
    rng = np.random.default_rng(4)
    for n in range(3, 41):
        X = rng.normal(size=(n, 2))
        res = cluster(X, BanditConfig(seed=n))
        assert res.arms_created == (n - 1) ** 2
        res.dendrogram.validate()


def test_pooled_new_arms() -> None:
    X = nested_fixture(seed=2)
    res = cluster(X, BanditConfig(seed=2), pool_new_arms=True)
    res.dendrogram.validate()
    assert res.arms_created == (X.shape[0] - 1) ** 2
    assert tree_accuracy(brute_hier(X), res.dendrogram) >= 0.9


def test_tree_matches_brute_force() -> None:
    X = nested_fixture(seed=5)
    res = cluster(X, BanditConfig(seed=5))
    assert tree_accuracy(brute_hier(X), res.dendrogram) >= 0.9
    assert res.ledger.effective_total > 0


def test_brute_hier_matches_scipy_average_linkage() -> None:
    X = np.random.default_rng(6).normal(size=(15, 6))
    dend = brute_hier(X)
    values = [m.value for m in dend.merges]
    assert all(b >= a - 1e-12 for a, b in zip(values, values[1:]))
    Z = linkage(X, method="average", metric="sqeuclidean")
    assert np.allclose(sorted(values), sorted(Z[:, 2] / X.shape[1]))


def test_dendrogram_dict_and_validation() -> None:
    dend = brute_hier(nested_fixture())
    back = Dendrogram.from_dict(dend.as_dict())
    assert back.to_linkage_rows() == dend.to_linkage_rows()
    back.validate()
    broken = Dendrogram(n_leaves=3, merges=dend.merges[:1])
    with pytest.raises(ValueError):
        broken.validate()
    with pytest.raises(ValueError):
        cluster(np.zeros((1, 3)), BanditConfig())


if __name__ == "__main__":
    test_pair_sample_and_exact()
    test_cluster_pair_validation()
    test_average_linkage_is_convex_combination()
    test_arm_set_update_counts()
    test_three_points_on_a_line()
    test_brute_hier_three_points()
    test_identical_points_merge_at_zero()
    test_tight_pairs_merge_first()
    test_arm_count_identity()
    test_pooled_new_arms()
    test_tree_matches_brute_force()
    test_brute_hier_matches_scipy_average_linkage()
    test_dendrogram_dict_and_validation()
    print("[OK] hierarchical tests passed")
