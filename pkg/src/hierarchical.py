# src/hierarchical.py
from __future__ import annotations

from dataclasses import dataclass, field
import logging
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.spatial.distance import cdist

from src.bandit import ArmState, BanditConfig, EvalLedger, run_best_k
from src.data_io import as_dense_matrix
from src.estimators import RunningEstimate

logger = logging.getLogger(__name__)

Pair = Tuple[int, int]


@dataclass
class ClusterPairArm:
    a: int
    b: int
    members_a: np.ndarray
    members_b: np.ndarray

    def __post_init__(self) -> None:
        if len(self.members_a) == 0 or len(self.members_b) == 0:
            raise ValueError(f"Cluster pair ({self.a}, {self.b}) has an empty side")
        if np.intersect1d(self.members_a, self.members_b).size:
            raise ValueError(f"Clusters {self.a} and {self.b} overlap")

    @property
    def pair(self) -> Pair:
        return (self.a, self.b)

    def max_pulls(self, d: int) -> int:
        return d * len(self.members_a) * len(self.members_b)


@dataclass
class Merge:
    a: int
    b: int
    value: float
    new_id: int
    size: int
    approximate: bool = False

    def as_dict(self) -> Dict[str, Any]:
        return {
            "a": self.a,
            "b": self.b,
            "value": float(self.value),
            "new_id": self.new_id,
            "size": self.size,
            "approximate": self.approximate,
        }


@dataclass
class Dendrogram:
    n_leaves: int
    merges: List[Merge] = field(default_factory=list)

    def validate(self) -> None:
        n = self.n_leaves
        if len(self.merges) != n - 1:
            raise ValueError(f"Expected {n - 1} merges for {n} leaves, got {len(self.merges)}")
        live = set(range(n))
        for step, m in enumerate(self.merges):
            if m.new_id != n + step:
                raise ValueError(f"Merge {step} has new id {m.new_id}, expected {n + step}")
            if m.a not in live or m.b not in live or m.a == m.b:
                raise ValueError(f"Merge {step} joins unavailable clusters ({m.a}, {m.b})")
            live -= {m.a, m.b}
            live.add(m.new_id)

    def to_linkage_rows(self) -> List[Tuple[int, int, float, int]]:
        return [(m.a, m.b, float(m.value), m.size) for m in self.merges]

    def as_dict(self) -> Dict[str, Any]:
        return {"n_leaves": self.n_leaves, "merges": [m.as_dict() for m in self.merges]}

    @classmethod
    def from_dict(cls, obj: Dict[str, Any]) -> "Dendrogram":
        merges = [
            Merge(
                a=int(m["a"]),
                b=int(m["b"]),
                value=float(m["value"]),
                new_id=int(m["new_id"]),
                size=int(m["size"]),
                approximate=bool(m.get("approximate", False)),
            )
            for m in obj["merges"]
        ]
        return cls(n_leaves=int(obj["n_leaves"]), merges=merges)


@dataclass
class HierResult:
    dendrogram: Dendrogram
    ledger: EvalLedger
    arms_created: int
    pulls: int
    exact_evals: int


def pair_sample(arm: ClusterPairArm, data: np.ndarray, rng: np.random.Generator) -> float:
    """Random x in C, y in C', coordinate t; returns (x_t - y_t)^2."""
    if len(arm.members_a) == 0 or len(arm.members_b) == 0:
        raise ValueError(f"Cluster pair ({arm.a}, {arm.b}) has an empty side")
    x = arm.members_a[rng.integers(len(arm.members_a))]
    y = arm.members_b[rng.integers(len(arm.members_b))]
    t = rng.integers(data.shape[1])
    diff = data[x, t] - data[y, t]
    return float(diff * diff)


def pair_exact(data: np.ndarray, members_a: Sequence[int], members_b: Sequence[int]) -> float:
    """Average-linkage mean of per-coordinate squared distances between two clusters."""
    A = data[np.asarray(members_a, dtype=np.int64)]
    B = data[np.asarray(members_b, dtype=np.int64)]
    if A.size == 0 or B.size == 0:
        raise ValueError("pair_exact needs two nonempty clusters")
    return float(cdist(A, B, metric="sqeuclidean").mean() / data.shape[1])


def arm_set_update(active: Dict[Pair, Any], winner: Pair, new_id: int) -> Tuple[List[Pair], List[Pair]]:
    """
    Arms to drop and pairs to add once `winner` merges into `new_id`.

    Every arm touching either merged cluster is dropped; the new cluster is
    paired with each survivor.
    """
    if winner not in active:
        raise RuntimeError(f"Winner {winner} is not an active arm")
    ca, cb = winner
    clusters = {c for pair in active for c in pair}
    deleted = [p for p in active if ca in p or cb in p]
    survivors = sorted(clusters - {ca, cb})
    added = [(c, new_id) for c in survivors]
    return deleted, added


def _pooled_estimate(
    left: Optional[ArmState], right: Optional[ArmState], size_a: int, size_b: int, cap: int
) -> Optional[RunningEstimate]:
    if left is None or right is None or left.pulls == 0 or right.pulls == 0:
        return None
    la, lb = left.pulls, right.pulls
    mean = (size_a * left.mean + size_b * right.mean) / (size_a + size_b)
    diff = left.mean - right.mean
    m2 = left.m2 + right.m2 + diff * diff * la * lb / (la + lb)
    count = min(la + lb, cap - 1) if cap > 1 else 0
    if count < 1:
        return None
    return RunningEstimate(count=count, mean=mean, m2=m2 * count / (la + lb))


def cluster(
    data: Any,
    config: BanditConfig,
    pool_new_arms: bool = False,
    exact_merge_values: bool = False,
) -> HierResult:
    """
    Average-linkage agglomeration with one best-1 bandit per merge step.

    Arm estimates persist across steps. The recorded merge value is the
    winner's current mean (flagged approximate) unless `exact_merge_values`
    asks for one exact evaluation of each winner.
    """
    X = as_dense_matrix(data)
    n, d = X.shape
    if n < 2:
        raise ValueError(f"Hierarchical clustering needs n >= 2 points, got {n}")
    cfg = config.for_problem(n, d)
    rng = np.random.default_rng(cfg.seed)
    ledger = EvalLedger()

    members: Dict[int, np.ndarray] = {i: np.array([i], dtype=np.int64) for i in range(n)}
    arms: Dict[Pair, ArmState] = {}
    by_id: Dict[int, ArmState] = {}
    counter = {"next": 0, "pulls": 0, "exact": 0}

    def new_arm(a: int, b: int, est: Optional[RunningEstimate] = None) -> ArmState:
        payload = ClusterPairArm(a=a, b=b, members_a=members[a], members_b=members[b])
        st = ArmState(
            id=counter["next"],
            max_pulls=payload.max_pulls(d),
            key=("hier", counter["next"]),
            denominator=float(d),
            weight=float(len(members[a]) * len(members[b])),
            payload=payload,
        )
        if est is not None:
            st.est = est
        counter["next"] += 1
        arms[(a, b)] = st
        by_id[st.id] = st
        return st

    for i in range(n):
        for j in range(i + 1, n):
            new_arm(i, j)

    def puller(arm_id: int, gen: np.random.Generator) -> float:
        return pair_sample(by_id[arm_id].payload, X, gen)

    def exact_eval(arm_id: int) -> float:
        p = by_id[arm_id].payload
        return pair_exact(X, p.members_a, p.members_b)

    dend = Dendrogram(n_leaves=n)
    for step in range(n - 1):
        active = sorted(arms.values(), key=lambda s: s.id)
        res = run_best_k(active, 1, cfg, puller, exact_eval, ledger=ledger, rng=rng)
        counter["pulls"] += res.pulls
        counter["exact"] += res.exact_evals
        win = by_id[res.ids[0]]
        if exact_merge_values and not win.exact:
            win.est.mean = exact_eval(win.id)
            win.exact = True
            ledger.mark_exact(win.key)
            counter["exact"] += 1
        ca, cb = win.payload.pair
        new_id = n + step
        deleted, added = arm_set_update(arms, (ca, cb), new_id)

        old = {p: arms[p] for p in deleted}
        for p in deleted:
            del by_id[arms.pop(p).id]
        size_a, size_b = len(members[ca]), len(members[cb])
        members[new_id] = np.concatenate([members.pop(ca), members.pop(cb)])
        for c, _ in added:
            est = None
            if pool_new_arms:
                left = old.get((min(c, ca), max(c, ca)))
                right = old.get((min(c, cb), max(c, cb)))
                est = _pooled_estimate(left, right, size_a, size_b, d * len(members[c]) * (size_a + size_b))
            new_arm(c, new_id, est)

        dend.merges.append(
            Merge(
                a=ca,
                b=cb,
                value=win.mean,
                new_id=new_id,
                size=size_a + size_b,
                approximate=not win.exact,
            )
        )
        logger.debug("merge %d: (%d, %d) -> %d value=%.6g", step, ca, cb, new_id, win.mean)

    return HierResult(
        dendrogram=dend,
        ledger=ledger,
        arms_created=counter["next"],
        pulls=counter["pulls"],
        exact_evals=counter["exact"],
    )
