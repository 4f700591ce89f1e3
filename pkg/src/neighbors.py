# src/neighbors.py
from __future__ import annotations

from dataclasses import dataclass, field
import logging
import math
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

from joblib import Parallel, delayed
import numpy as np

from src.bandit import ArmState, BanditConfig, EvalLedger, run_best_k
from src.data_io import as_dense_matrix
from src.estimators import (
    SmoothWrap,
    exact_abs_mean,
    exact_mean,
    sample_abs_coord,
    sample_sq_coord,
    sqrt_wrap,
)
from src.oracle import MEDOID_METRICS, brute_assign
from src.sparse import SparseVector, sparse_exact, sparse_sample

logger = logging.getLogger(__name__)

KNN_MODES = ("dense", "sparse")
GRANULARITIES = ("row", "coordinate")

# per-coordinate sample term and exact per-coordinate mean for each medoid metric
_MEDOID_TERMS = {
    "l1": (sample_abs_coord, exact_abs_mean),
    "l2sq": (sample_sq_coord, exact_mean),
    "l2": (sample_sq_coord, exact_mean),
}


@dataclass
class KnnResult:
    neighbors: List[List[int]]
    ledger: EvalLedger
    pulls: int = 0
    exact_evals: int = 0

    @property
    def n(self) -> int:
        return len(self.neighbors)


@dataclass
class Assignment:
    labels: np.ndarray
    centroids: np.ndarray
    inertia: float
    ledger: EvalLedger = field(default_factory=EvalLedger)
    n_iter: int = 0
    inertia_history: List[float] = field(default_factory=list)


@dataclass
class MedoidResult:
    medoid: int
    estimates: Dict[int, float]
    ledger: EvalLedger
    pulls: int = 0
    exact_evals: int = 0


def point_rng(seed: int, *spawn: int) -> np.random.Generator:
    # stable per-point stream regardless of execution order
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=tuple(int(s) for s in spawn)))


class IndexDraw:
    """
    Index sampler for one bandit: uniform with replacement, or walking a
    lazily created per-arm permutation when sampling without replacement.
    """

    def __init__(self, size: int, replacement: str = "with"):
        self.size = size
        self.without = replacement == "without"
        self.perms: Dict[int, np.ndarray] = {}
        self.cursor: Dict[int, int] = {}

    def __call__(self, arm: int, rng: np.random.Generator) -> int:
        if not self.without:
            return int(rng.integers(self.size))
        perm = self.perms.get(arm)
        if perm is None:
            perm = self.perms[arm] = rng.permutation(self.size)
        pos = self.cursor.get(arm, 0)
        if pos >= self.size:
            raise RuntimeError(f"Arm {arm} exhausted its {self.size} indices")
        self.cursor[arm] = pos + 1
        return int(perm[pos])


def _run_parallel(fn: Callable[[int], Any], items: Sequence[int], threads: int) -> List[Any]:
    if threads > 1:
        return Parallel(n_jobs=threads, prefer="threads")(delayed(fn)(i) for i in items)
    return [fn(i) for i in items]


def _dense_knn_point(X: np.ndarray, i: int, k: int, cfg: BanditConfig) -> Tuple[List[int], EvalLedger, int, int]:
    n, d = X.shape
    q = X[i]
    draw = IndexDraw(d, cfg.replacement)
    arms = [
        ArmState(id=j, max_pulls=d, key=(i, j), denominator=float(d))
        for j in range(n)
        if j != i
    ]

    def puller(j: int, rng: np.random.Generator) -> float:
        return sample_sq_coord(X[j], q, draw(j, rng))

    def exact_eval(j: int) -> float:
        return exact_mean(X[j], q)

    res = run_best_k(arms, k, cfg, puller, exact_eval, rng=point_rng(cfg.seed, i))
    return res.ids, res.ledger, res.pulls, res.exact_evals


def _sparse_knn_point(
    vectors: Sequence[SparseVector], i: int, k: int, cfg: BanditConfig
) -> Tuple[List[int], EvalLedger, int, int]:
    q = vectors[i]
    arms: List[ArmState] = []
    for j, v in enumerate(vectors):
        if j == i:
            continue
        support = q.nnz + v.nnz
        sides = int(q.nnz > 0) + int(v.nnz > 0)
        arms.append(
            ArmState(
                id=j,
                max_pulls=max(1, math.ceil(support / 2)),
                key=(i, j),
                denominator=float(max(support, 1)),
                touches_per_pull=float(sides),
            )
        )

    def puller(j: int, rng: np.random.Generator) -> float:
        return sparse_sample(q, vectors[j], rng)

    def exact_eval(j: int) -> float:
        return sparse_exact(q, vectors[j])

    res = run_best_k(arms, k, cfg, puller, exact_eval, rng=point_rng(cfg.seed, i))
    return res.ids, res.ledger, res.pulls, res.exact_evals


def knn_graph(data: Any, k: int, config: BanditConfig, mode: str = "dense") -> KnnResult:
    """One best-k bandit per point over the other n-1 points."""
    if mode not in KNN_MODES:
        raise ValueError(f"Unknown knn mode '{mode}' (expected one of {KNN_MODES})")
    if mode == "dense":
        X = as_dense_matrix(data)
        n, d = X.shape
    else:
        vectors = list(data)
        if not vectors:
            raise ValueError("No sparse vectors given")
        n, d = len(vectors), vectors[0].dim
        if any(v.dim != d for v in vectors):
            raise ValueError("Sparse vectors have mixed dimensions")
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    if k >= n:
        raise ValueError(f"k={k} needs at least k+1 points, got n={n}")
    cfg = config.for_problem(n, d)

    if mode == "dense":
        outs = _run_parallel(lambda i: _dense_knn_point(X, i, k, cfg), range(n), cfg.threads)
    else:
        empty = sum(1 for v in vectors if v.nnz == 0)
        if empty:
            logger.warning("%d sparse vectors have no nonzero entries", empty)
        outs = _run_parallel(lambda i: _sparse_knn_point(vectors, i, k, cfg), range(n), cfg.threads)

    return KnnResult(
        neighbors=[o[0] for o in outs],
        ledger=EvalLedger.merge_all([o[1] for o in outs]),
        pulls=sum(o[2] for o in outs),
        exact_evals=sum(o[3] for o in outs),
    )


def _assign_point(
    X: np.ndarray, C: np.ndarray, i: int, cfg: BanditConfig, round_id: int
) -> Tuple[int, EvalLedger]:
    d = X.shape[1]
    q = X[i]
    draw = IndexDraw(d, cfg.replacement)
    arms = [
        ArmState(id=c, max_pulls=d, key=(round_id, i, c), denominator=float(d))
        for c in range(C.shape[0])
    ]

    def puller(c: int, rng: np.random.Generator) -> float:
        return sample_sq_coord(C[c], q, draw(c, rng))

    def exact_eval(c: int) -> float:
        return exact_mean(C[c], q)

    res = run_best_k(arms, 1, cfg, puller, exact_eval, rng=point_rng(cfg.seed, round_id, i))
    return res.ids[0], res.ledger


def _inertia(X: np.ndarray, C: np.ndarray, labels: np.ndarray) -> float:
    return float(((X - C[labels]) ** 2).sum())


def assign_step(data: Any, centroids: Any, config: BanditConfig, round_id: int = 0) -> Assignment:
    X = as_dense_matrix(data)
    C = as_dense_matrix(centroids)
    if C.shape[1] != X.shape[1]:
        raise ValueError(f"Centroid dimension {C.shape[1]} does not match data dimension {X.shape[1]}")
    if C.shape[0] < 1:
        raise ValueError("Need at least one centroid")
    cfg = config.for_problem(X.shape[0], X.shape[1])
    outs = _run_parallel(lambda i: _assign_point(X, C, i, cfg, round_id), range(X.shape[0]), cfg.threads)
    labels = np.array([o[0] for o in outs], dtype=np.int64)
    return Assignment(
        labels=labels,
        centroids=C.copy(),
        inertia=_inertia(X, C, labels),
        ledger=EvalLedger.merge_all([o[1] for o in outs]),
    )


def _exact_assign(X: np.ndarray, C: np.ndarray, round_id: int) -> Assignment:
    n, k = X.shape[0], C.shape[0]
    ledger = EvalLedger()
    for i in range(n):
        for c in range(k):
            key = (round_id, i, c)
            ledger.register(key, float(X.shape[1]))
            ledger.mark_exact(key)
    labels = brute_assign(X, C)
    return Assignment(labels=labels, centroids=C.copy(), inertia=_inertia(X, C, labels), ledger=ledger)


def _update_centroids(X: np.ndarray, labels: np.ndarray, C: np.ndarray) -> np.ndarray:
    out = C.copy()
    empty = []
    for c in range(C.shape[0]):
        mask = labels == c
        if mask.any():
            out[c] = X[mask].mean(axis=0)
        else:
            empty.append(c)
    if empty:
        # empty clusters move onto the points farthest from their current centroid
        dist = ((X - C[labels]) ** 2).sum(axis=1)
        far = np.argsort(-dist, kind="stable")
        for c, p in zip(empty, far):
            out[c] = X[p]
            logger.warning("Cluster %d empty; re-seeded at point %d", c, int(p))
    return out


def lloyd(
    data: Any,
    k: int,
    max_iters: int,
    config: BanditConfig,
    init_centroids: Optional[Any] = None,
    exact: bool = False,
) -> Assignment:
    """
    Bandit assignment step alternated with the exact mean update.

    Stops when labels repeat or after `max_iters` centroid updates; with
    max_iters=0 the initial assignment is returned.
    """
    X = as_dense_matrix(data)
    n = X.shape[0]
    if k < 1 or k > n:
        raise ValueError(f"k must lie in [1, n={n}], got {k}")
    if max_iters < 0:
        raise ValueError(f"max_iters must be >= 0, got {max_iters}")
    if init_centroids is None:
        rng = np.random.default_rng(config.seed)
        C = X[np.sort(rng.choice(n, size=k, replace=False))].copy()
    else:
        C = as_dense_matrix(init_centroids).copy()
        if C.shape != (k, X.shape[1]):
            raise ValueError(f"init_centroids must have shape {(k, X.shape[1])}, got {C.shape}")

    def step(cent: np.ndarray, round_id: int) -> Assignment:
        if exact:
            return _exact_assign(X, cent, round_id)
        return assign_step(X, cent, config, round_id=round_id)

    cur = step(C, 0)
    ledger = cur.ledger
    history = [cur.inertia]
    n_iter = 0
    while n_iter < max_iters:
        C = _update_centroids(X, cur.labels, cur.centroids)
        n_iter += 1
        nxt = step(C, n_iter)
        ledger.absorb(nxt.ledger)
        history.append(nxt.inertia)
        stable = np.array_equal(nxt.labels, cur.labels)
        cur = nxt
        if stable:
            break
    logger.debug("lloyd finished after %d updates, inertia %.6g", n_iter, cur.inertia)
    return Assignment(
        labels=cur.labels,
        centroids=cur.centroids,
        inertia=cur.inertia,
        ledger=ledger,
        n_iter=n_iter,
        inertia_history=history,
    )


def _pilot_lower(X: np.ndarray, rng: np.random.Generator, size: int = 32) -> float:
    # lower edge of the squared-distance range used by the sqrt wrap
    n = X.shape[0]
    m = min(size, n * (n - 1) // 2)
    a = rng.integers(n, size=m)
    b = (a + 1 + rng.integers(n - 1, size=m)) % n
    vals = ((X[a] - X[b]) ** 2).sum(axis=1)
    return max(0.5 * float(vals.min()), 1e-12)


def medoid(
    data: Any,
    config: BanditConfig,
    metric: str = "l1",
    granularity: str = "row",
    wrap: Optional[SmoothWrap] = None,
    pull_log: Optional[List[Dict[str, Any]]] = None,
) -> MedoidResult:
    """
    Point with the smallest average distance to all other points.

    A row pull draws one other point and returns the full row distance. A
    coordinate pull draws a point and a coordinate and returns that single
    coordinate term, so arm means are in per-coordinate units there.
    """
    X = as_dense_matrix(data)
    n, d = X.shape
    if n < 2:
        raise ValueError(f"Medoid needs n >= 2 points, got {n}")
    if metric not in MEDOID_METRICS:
        raise ValueError(f"Unknown medoid metric '{metric}' (expected one of {MEDOID_METRICS})")
    if granularity not in GRANULARITIES:
        raise ValueError(f"Unknown granularity '{granularity}' (expected one of {GRANULARITIES})")
    cfg = config.for_problem(n, d)
    rng = np.random.default_rng(cfg.seed)
    if metric == "l2" and wrap is None:
        lower = _pilot_lower(X, rng)
        wrap = sqrt_wrap(lower=lower / d if granularity == "coordinate" else lower)

    term, coord_mean = _MEDOID_TERMS[metric]

    def mean_to_others(i: int) -> float:
        # per-coordinate mean over the other n-1 points; the i-th term is zero
        return sum(coord_mean(X[i], X[j]) for j in range(n) if j != i) / (n - 1)

    if granularity == "row":
        arms = [
            ArmState(id=i, max_pulls=n - 1, key=("medoid", i), denominator=1.0, weight=float(n - 1))
            for i in range(n)
        ]
        draw = IndexDraw(n - 1, cfg.replacement)

        def puller(i: int, gen: np.random.Generator) -> float:
            j = draw(i, gen)
            j = j + 1 if j >= i else j
            return d * coord_mean(X[i], X[j])

        def exact_eval(i: int) -> float:
            return d * mean_to_others(i)

    else:
        arms = [
            ArmState(id=i, max_pulls=(n - 1) * d, key=("medoid", i), denominator=float(d), weight=float(n - 1))
            for i in range(n)
        ]
        draw = IndexDraw((n - 1) * d, cfg.replacement)

        def puller(i: int, gen: np.random.Generator) -> float:
            j, t = divmod(draw(i, gen), d)
            j = j + 1 if j >= i else j
            return term(X[i], X[j], t)

        def exact_eval(i: int) -> float:
            return mean_to_others(i)

    res = run_best_k(arms, 1, cfg, puller, exact_eval, rng=rng, wrap=wrap, pull_log=pull_log)
    return MedoidResult(
        medoid=res.ids[0],
        estimates={a.id: a.mean for a in arms},
        ledger=res.ledger,
        pulls=res.pulls,
        exact_evals=res.exact_evals,
    )
