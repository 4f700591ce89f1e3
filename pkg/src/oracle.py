# src/oracle.py
"""
Brute-force references and accuracy metrics.

Every brute function here is deterministic and seed-free; random-tree
baselines take an explicit seed.
"""
from __future__ import annotations

from dataclasses import dataclass, field
import logging
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from sklearn.metrics import pairwise_distances

from src.data_io import as_dense_matrix
from src.hierarchical import Dendrogram, Merge
from src.mmi import MMIConfig, full_mi, standardize_columns
from src.sparse import SparseVector, sparse_exact

logger = logging.getLogger(__name__)

MEDOID_METRICS = ("l1", "l2sq", "l2")


@dataclass
class AccuracyReport:
    app: str
    score: float
    trials: int = 1
    detail: List[float] = field(default_factory=list)

    def __post_init__(self) -> None:
        if not (0.0 <= self.score <= 1.0):
            raise ValueError(f"Accuracy score must lie in [0, 1], got {self.score}")

    def as_dict(self) -> Dict[str, Any]:
        return {"app": self.app, "score": float(self.score), "trials": self.trials, "detail": list(self.detail)}

    @classmethod
    def from_trials(cls, app: str, scores: Sequence[float]) -> "AccuracyReport":
        if not scores:
            raise ValueError("No trial scores to aggregate")
        return cls(app=app, score=float(np.mean(scores)), trials=len(scores), detail=[float(s) for s in scores])


# ---------------------------------------------------------------------------
# exact references
# ---------------------------------------------------------------------------


def pairwise_mean_sq(data: Any) -> np.ndarray:
    X = as_dense_matrix(data)
    return pairwise_distances(X, metric="sqeuclidean") / X.shape[1]


def brute_knn(data: Any, k: int) -> List[List[int]]:
    X = as_dense_matrix(data)
    n = X.shape[0]
    if k >= n:
        raise ValueError(f"k={k} must be smaller than n={n}")
    D = pairwise_mean_sq(X)
    np.fill_diagonal(D, np.inf)
    order = np.argsort(D, axis=1, kind="stable")
    return [row[:k].tolist() for row in order]


def brute_knn_sparse(vectors: Sequence[SparseVector], k: int) -> List[List[int]]:
    n = len(vectors)
    if k >= n:
        raise ValueError(f"k={k} must be smaller than n={n}")
    D = np.full((n, n), np.inf)
    for i in range(n):
        for j in range(i + 1, n):
            D[i, j] = D[j, i] = sparse_exact(vectors[i], vectors[j])
    order = np.argsort(D, axis=1, kind="stable")
    return [row[:k].tolist() for row in order]


def brute_assign(data: Any, centroids: Any) -> np.ndarray:
    X = as_dense_matrix(data)
    C = as_dense_matrix(centroids)
    if C.shape[1] != X.shape[1]:
        raise ValueError(f"Centroid dimension {C.shape[1]} does not match data dimension {X.shape[1]}")
    D = pairwise_distances(X, C, metric="sqeuclidean")
    return np.argmin(D, axis=1).astype(np.int64)


def medoid_values(data: Any, metric: str = "l1") -> np.ndarray:
    """f(i) = mean row distance from point i to every other point."""
    X = as_dense_matrix(data)
    n = X.shape[0]
    if n < 2:
        raise ValueError(f"Medoid needs n >= 2 points, got {n}")
    if metric not in MEDOID_METRICS:
        raise ValueError(f"Unknown medoid metric '{metric}' (expected one of {MEDOID_METRICS})")
    if metric == "l1":
        D = pairwise_distances(X, metric="manhattan")
    else:
        D = pairwise_distances(X, metric="sqeuclidean")
    vals = D.sum(axis=1) / (n - 1)
    if metric == "l2":
        vals = np.sqrt(vals)
    return vals


def brute_medoid(data: Any, metric: str = "l1") -> int:
    return int(np.argmin(medoid_values(data, metric)))


def brute_mmi(
    data: Any,
    target: Sequence[float],
    mmi_config: Optional[MMIConfig] = None,
    exclude: Sequence[int] = (),
) -> Tuple[int, Dict[int, float]]:
    cfg = mmi_config or MMIConfig()
    X = as_dense_matrix(data)
    y = np.asarray(target, dtype=np.float64).ravel()
    if y.size != X.shape[0]:
        raise ValueError(f"Target length {y.size} does not match n={X.shape[0]}")
    if cfg.standardize:
        X = standardize_columns(X)
        y = standardize_columns(y.reshape(-1, 1)).ravel()
    skip = set(exclude)
    values = {j: full_mi(X[:, j], y, cfg) for j in range(X.shape[1]) if j not in skip}
    if not values:
        raise ValueError("No candidate features left after exclusions")
    best = max(values, key=lambda j: (values[j], -j))
    return best, values


def brute_hier(data: Any) -> Dendrogram:
    """Exact average linkage on mean squared distances; ties go to the lowest (a, b) id pair."""
    X = as_dense_matrix(data)
    n = X.shape[0]
    if n < 2:
        raise ValueError(f"Hierarchical clustering needs n >= 2 points, got {n}")
    M = pairwise_mean_sq(X)
    np.fill_diagonal(M, np.inf)
    ids = np.arange(n)
    sizes = np.ones(n)
    alive = np.ones(n, dtype=bool)
    dend = Dendrogram(n_leaves=n)
    for step in range(n - 1):
        masked = np.where(alive[:, None] & alive[None, :], M, np.inf)
        best = masked.min()
        ri, rj = np.nonzero(masked == best)
        cand = sorted((min(ids[i], ids[j]), max(ids[i], ids[j]), i, j) for i, j in zip(ri, rj))
        a, b, i, j = cand[0]
        si, sj = sizes[i], sizes[j]
        row = (si * M[i] + sj * M[j]) / (si + sj)
        M[i, :] = row
        M[:, i] = row
        M[i, i] = np.inf
        alive[j] = False
        sizes[i] = si + sj
        new_id = n + step
        ids[i] = new_id
        dend.merges.append(Merge(a=int(a), b=int(b), value=float(best), new_id=new_id, size=int(si + sj)))
    return dend


def brute_total_knn(n: int) -> float:
    return float(n * (n - 1))


def brute_total_assign(n: int, k: int) -> float:
    return float(n * k)


def brute_total_medoid(n: int) -> float:
    return float(n * (n - 1))


def brute_total_hier(n: int) -> float:
    return float(n * (n - 1) // 2)


def brute_total_mmi(n: int, d: int) -> float:
    return float(n * d)


# ---------------------------------------------------------------------------
# accuracy metrics
# ---------------------------------------------------------------------------


def knn_accuracy(exact: Sequence[Sequence[int]], approx: Sequence[Sequence[int]]) -> float:
    if len(exact) != len(approx):
        raise ValueError(f"Neighbour lists cover {len(exact)} vs {len(approx)} points")
    if not exact:
        return 1.0
    hits = sum(1 for e, a in zip(exact, approx) if set(e) == set(a))
    return hits / len(exact)


def kmeans_accuracy(exact: Sequence[int], approx: Sequence[int]) -> float:
    e = np.asarray(exact)
    a = np.asarray(approx)
    if e.shape != a.shape:
        raise ValueError(f"Label vectors differ in shape: {e.shape} vs {a.shape}")
    if e.size == 0:
        return 1.0
    return float(np.mean(e == a))


def mmi_accuracy(exact: int, approx: int) -> float:
    return 1.0 if int(exact) == int(approx) else 0.0


def tree_distances(dend: Dendrogram) -> np.ndarray:
    """Leaf-to-leaf path lengths (edge counts) in the merge tree."""
    n = dend.n_leaves
    total = 2 * n - 1
    depth = np.zeros(total, dtype=np.int64)
    for m in reversed(dend.merges):
        depth[m.a] = depth[m.new_id] + 1
        depth[m.b] = depth[m.new_id] + 1
    leaves: Dict[int, np.ndarray] = {i: np.array([i]) for i in range(n)}
    D = np.zeros((n, n), dtype=np.int64)
    for m in dend.merges:
        left, right = leaves.pop(m.a), leaves.pop(m.b)
        block = depth[left][:, None] + depth[right][None, :] - 2 * depth[m.new_id]
        D[np.ix_(left, right)] = block
        D[np.ix_(right, left)] = block.T
        leaves[m.new_id] = np.concatenate([left, right])
    return D


def random_tree(n: int, rng: np.random.Generator) -> Dendrogram:
    """Uniform random recursive merging of n leaves."""
    if n < 2:
        raise ValueError(f"Need n >= 2 leaves, got {n}")
    live = list(range(n))
    sizes = {i: 1 for i in range(n)}
    dend = Dendrogram(n_leaves=n)
    for step in range(n - 1):
        i, j = sorted(rng.choice(len(live), size=2, replace=False).tolist())
        a, b = live[i], live[j]
        new_id = n + step
        sizes[new_id] = sizes.pop(a) + sizes.pop(b)
        live.pop(j)
        live.pop(i)
        live.append(new_id)
        dend.merges.append(Merge(a=min(a, b), b=max(a, b), value=float(step), new_id=new_id, size=sizes[new_id]))
    return dend


def _upper_abs_diff(A: np.ndarray, B: np.ndarray) -> float:
    iu = np.triu_indices(A.shape[0], k=1)
    return float(np.abs(A[iu] - B[iu]).sum())


def tree_accuracy(exact: Dendrogram, approx: Dendrogram, random_trees: int = 32, seed: int = 0) -> float:
    if exact.n_leaves != approx.n_leaves:
        raise ValueError(f"Leaf sets differ: {exact.n_leaves} vs {approx.n_leaves} leaves")
    if random_trees < 1:
        raise ValueError(f"random_trees must be >= 1, got {random_trees}")
    n = exact.n_leaves
    Dx = tree_distances(exact)
    num = _upper_abs_diff(Dx, tree_distances(approx))
    rng = np.random.default_rng(seed)
    den = float(np.mean([_upper_abs_diff(Dx, tree_distances(random_tree(n, rng))) for _ in range(random_trees)]))
    if den == 0.0:
        return 1.0 if num == 0.0 else 0.0
    return float(min(max(1.0 - num / den, 0.0), 1.0))
