# src/bandit.py
from __future__ import annotations

from dataclasses import asdict, dataclass, field, replace
import heapq
import logging
import math
from typing import Any, Callable, Dict, Hashable, List, Optional, Sequence, Tuple, Union

import numpy as np

from src.estimators import (
    ConfidenceBound,
    RunningEstimate,
    SIGMA_FLOOR,
    SmoothWrap,
    confidence,
    delta_confidence,
    update,
)

logger = logging.getLogger(__name__)

OBJECTIVES = ("minimize", "maximize")
SIGMA_MODES = ("per-arm", "global", "fixed")
REPLACEMENT_MODES = ("with", "without")


@dataclass
class BanditConfig:
    delta: float = 0.01
    epsilon: float = 0.0
    warmup_pulls: Optional[int] = None  # None = max(2, ceil(log2(n_arms)))
    sigma_mode: str = "per-arm"
    sigma: Optional[float] = None  # only read in "fixed" mode
    replacement: str = "with"
    seed: int = 0
    objective: str = "minimize"
    theory_delta: bool = False
    pull_budget: Optional[int] = None
    threads: int = 1

    def __post_init__(self) -> None:
        if not (0.0 < self.delta < 1.0):
            raise ValueError(f"delta must lie in (0, 1), got {self.delta}")
        if self.epsilon < 0:
            raise ValueError(f"epsilon must be >= 0, got {self.epsilon}")
        if self.warmup_pulls is not None and self.warmup_pulls < 1:
            raise ValueError(f"warmup_pulls must be >= 1, got {self.warmup_pulls}")
        if self.sigma_mode not in SIGMA_MODES:
            raise ValueError(f"Unknown sigma_mode '{self.sigma_mode}' (expected one of {SIGMA_MODES})")
        if self.sigma_mode == "fixed" and (self.sigma is None or self.sigma <= 0):
            raise ValueError("sigma_mode='fixed' needs a positive sigma value")
        if self.replacement not in REPLACEMENT_MODES:
            raise ValueError(f"Unknown replacement mode '{self.replacement}'")
        if self.objective not in OBJECTIVES:
            raise ValueError(f"Unknown objective '{self.objective}'")
        if self.pull_budget is not None and self.pull_budget < 0:
            raise ValueError(f"pull_budget must be >= 0, got {self.pull_budget}")
        if self.threads < 1:
            raise ValueError(f"threads must be >= 1, got {self.threads}")

    def resolve_warmup(self, n_arms: int) -> int:
        if self.warmup_pulls is not None:
            return self.warmup_pulls
        return max(2, math.ceil(math.log2(max(n_arms, 1))))

    def for_problem(self, n: int, d: int) -> "BanditConfig":
        """Resolve theory-mode delta = 2/(n^3 d) for a concrete problem size."""
        if not self.theory_delta:
            return self
        return replace(self, delta=min(2.0 / (float(n) ** 3 * float(d)), 0.5))

    def as_dict(self) -> Dict[str, Any]:
        return asdict(self)


@dataclass
class LedgerEntry:
    touches: float
    denominator: float
    weight: float = 1.0
    exact: bool = False

    @property
    def effective(self) -> float:
        if self.exact:
            return self.weight
        return min(self.weight, self.touches / self.denominator)


class EvalLedger:
    """
    Effective-evaluation counters.

    Each entry is one evaluated unit (a point pair, a cluster pair, a feature)
    with a normalizer; `weight` is what one exact evaluation of the unit costs
    (1 for a point pair).
    """

    def __init__(self) -> None:
        self.entries: Dict[Hashable, LedgerEntry] = {}
        self.coord_touches: float = 0.0

    def register(self, key: Hashable, denominator: float, weight: float = 1.0) -> None:
        if denominator <= 0:
            raise ValueError(f"Ledger denominator must be positive for {key!r}, got {denominator}")
        if key not in self.entries:
            self.entries[key] = LedgerEntry(touches=0.0, denominator=float(denominator), weight=float(weight))

    def touch(self, key: Hashable, n: float = 1.0) -> None:
        self.entries[key].touches += n
        self.coord_touches += n

    def mark_exact(self, key: Hashable) -> None:
        e = self.entries[key]
        if not e.exact:
            e.exact = True
            self.coord_touches += e.denominator * e.weight

    def effective(self, key: Hashable) -> float:
        return self.entries[key].effective

    @property
    def pair_denominators(self) -> Dict[Hashable, float]:
        return {k: e.denominator for k, e in self.entries.items()}

    @property
    def effective_total(self) -> float:
        return math.fsum(e.effective for e in self.entries.values())

    @property
    def brute_total(self) -> float:
        return math.fsum(e.weight for e in self.entries.values())

    def absorb(self, other: "EvalLedger") -> "EvalLedger":
        """In-place merge: touches add up, exactness is sticky."""
        for key, e in other.entries.items():
            cur = self.entries.get(key)
            if cur is None:
                self.entries[key] = LedgerEntry(e.touches, e.denominator, e.weight, e.exact)
            else:
                cur.touches += e.touches
                cur.exact = cur.exact or e.exact
        self.coord_touches += other.coord_touches
        return self

    def merge(self, other: "EvalLedger") -> "EvalLedger":
        return EvalLedger().absorb(self).absorb(other)

    @classmethod
    def merge_all(cls, ledgers: Sequence["EvalLedger"]) -> "EvalLedger":
        out = cls()
        for led in ledgers:
            out.absorb(led)
        return out

    def summary(self) -> Dict[str, float]:
        denoms = self.pair_denominators
        return {
            "coord_touches": float(self.coord_touches),
            "effective_total": float(self.effective_total),
            "units": len(denoms),
            "mean_denominator": math.fsum(denoms.values()) / len(denoms) if denoms else 0.0,
            "exact_units": sum(1 for e in self.entries.values() if e.exact),
        }


@dataclass
class Snapshot:
    # replaces the arm's estimate outright (estimators that are not running means)
    mean: float
    half_width: float


PullResult = Union[float, Snapshot]
Puller = Callable[[int, np.random.Generator], PullResult]
ExactEval = Callable[[int], float]


@dataclass
class ArmState:
    id: int
    max_pulls: int
    est: RunningEstimate = field(default_factory=RunningEstimate)
    exact: bool = False
    key: Hashable = None
    denominator: float = 1.0
    weight: float = 1.0
    touches_per_pull: float = 1.0
    snapshot_half_width: Optional[float] = None
    payload: Any = None

    def __post_init__(self) -> None:
        if self.max_pulls < 1:
            raise ValueError(f"max_pulls must be positive for arm {self.id}, got {self.max_pulls}")
        if self.key is None:
            self.key = self.id

    @property
    def pulls(self) -> int:
        return self.est.count

    @property
    def mean(self) -> float:
        return self.est.mean

    @property
    def m2(self) -> float:
        return self.est.m2


@dataclass
class BanditResult:
    ids: List[int]
    states: List[ArmState]
    ledger: EvalLedger
    pulls: int = 0
    exact_evals: int = 0
    budget_exhausted: bool = False
    accepted_by: List[str] = field(default_factory=list)

    def state(self, arm_id: int) -> ArmState:
        for s in self.states:
            if s.id == arm_id:
                return s
        raise KeyError(arm_id)


def make_arms(
    ids: Sequence[int],
    max_pulls: int,
    denominator: float = 1.0,
    weight: float = 1.0,
    touches_per_pull: float = 1.0,
    key_fn: Optional[Callable[[int], Hashable]] = None,
) -> List[ArmState]:
    return [
        ArmState(
            id=int(i),
            max_pulls=max_pulls,
            key=key_fn(i) if key_fn else None,
            denominator=denominator,
            weight=weight,
            touches_per_pull=touches_per_pull,
        )
        for i in ids
    ]


def select_next(bounds: Sequence[Tuple[int, ConfidenceBound]], objective: str = "minimize") -> int:
    """Least LCB (minimize) or greatest UCB (maximize); ties go to the lowest id."""
    if not bounds:
        raise RuntimeError("select_next called with no active arms")
    if objective == "minimize":
        return min(bounds, key=lambda it: (it[1].lcb, it[0]))[0]
    if objective == "maximize":
        return min(bounds, key=lambda it: (-it[1].ucb, it[0]))[0]
    raise ValueError(f"Unknown objective '{objective}'")


def _pooled_sigma(arms: Sequence[ArmState]) -> float:
    m2 = math.fsum(a.m2 for a in arms if a.snapshot_half_width is None)
    dof = sum(a.pulls - 1 for a in arms if a.snapshot_half_width is None and a.pulls >= 2)
    if dof <= 0:
        return SIGMA_FLOOR
    return max(math.sqrt(m2 / dof), SIGMA_FLOOR)


def run_best_k(
    arms: Sequence[ArmState],
    k: int,
    config: BanditConfig,
    puller: Puller,
    exact_eval: ExactEval,
    ledger: Optional[EvalLedger] = None,
    rng: Optional[np.random.Generator] = None,
    wrap: Optional[SmoothWrap] = None,
    pull_log: Optional[List[Dict[str, Any]]] = None,
) -> BanditResult:
    """
    Modified UCB best-k identification with exact fallback at max_pulls.

    Arms may arrive already warmed up (their states are reused, not reset).
    With config.epsilon > 0 a slot is also filled once the current best arm's
    interval is narrower than epsilon times its upper bound.
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    if len(arms) < k:
        raise ValueError(f"Need at least k={k} arms, got {len(arms)}")
    by_id: Dict[int, ArmState] = {}
    for a in arms:
        if a.id in by_id:
            raise ValueError(f"Duplicate arm id {a.id}")
        by_id[a.id] = a

    rng = rng if rng is not None else np.random.default_rng(config.seed)
    ledger = ledger if ledger is not None else EvalLedger()
    for a in arms:
        ledger.register(a.key, a.denominator, a.weight)

    sign = 1.0 if config.objective == "minimize" else -1.0
    counters = {"step": 0, "pulls": 0, "exact": 0}

    def log_event(event: str, arm: ArmState, sample: Optional[float] = None) -> None:
        if pull_log is None:
            return
        b = bound(arm) if arm.pulls > 0 or arm.exact else None
        pull_log.append(
            {
                "step": counters["step"],
                "event": event,
                "arm": arm.id,
                "sample": sample,
                "lcb": None if b is None else b.lcb,
                "ucb": None if b is None else b.ucb,
                "exact": arm.exact,
            }
        )

    def pull(arm: ArmState) -> None:
        out = puller(arm.id, rng)
        if isinstance(out, Snapshot):
            arm.est.count += 1
            arm.est.mean = float(out.mean)
            arm.snapshot_half_width = float(out.half_width)
            sample = float(out.mean)
        else:
            sample = float(out)
            update(arm.est, sample)
        ledger.touch(arm.key, arm.touches_per_pull)
        counters["step"] += 1
        counters["pulls"] += 1
        log_event("pull", arm, sample)
        if arm.pulls >= arm.max_pulls:
            # ceiling reached: the sampled interval is no longer trusted
            evaluate_exactly(arm)

    def evaluate_exactly(arm: ArmState) -> None:
        arm.est.mean = float(exact_eval(arm.id))
        arm.exact = True
        ledger.mark_exact(arm.key)
        counters["step"] += 1
        counters["exact"] += 1
        log_event("exact", arm)

    fixed_sigma: Optional[float] = config.sigma if config.sigma_mode == "fixed" else None

    def bound(arm: ArmState) -> ConfidenceBound:
        if arm.snapshot_half_width is not None and not arm.exact:
            h = arm.snapshot_half_width
            return ConfidenceBound(lcb=arm.mean - h, ucb=arm.mean + h)
        if wrap is not None:
            return delta_confidence(arm.est, wrap, config.delta, exact=arm.exact, sigma=fixed_sigma)
        return confidence(arm.est, config.delta, exact=arm.exact, sigma=fixed_sigma)

    def signed(arm: ArmState) -> Tuple[float, float]:
        b = bound(arm)
        if sign > 0:
            return b.lcb, b.ucb
        return -b.ucb, -b.lcb

    # warm-up, capped at each arm's own ceiling
    warmup = config.resolve_warmup(len(arms))
    for a in arms:
        while not a.exact and a.pulls < min(warmup, a.max_pulls):
            pull(a)
        if not a.exact and a.pulls >= a.max_pulls:
            # carried-over arm already at its ceiling
            evaluate_exactly(a)

    if config.sigma_mode == "global":
        # pooled spread is frozen once warm-up is over
        fixed_sigma = _pooled_sigma(arms)

    heap: List[Tuple[float, int, int]] = []
    version: Dict[int, int] = {}
    active = set(by_id)

    def push(arm: ArmState) -> None:
        version[arm.id] = version.get(arm.id, 0) + 1
        heapq.heappush(heap, (signed(arm)[0], arm.id, version[arm.id]))

    def clean_top() -> Optional[Tuple[float, int, int]]:
        while heap:
            lo, aid, ver = heap[0]
            if aid in active and version[aid] == ver:
                return heap[0]
            heapq.heappop(heap)
        return None

    for a in arms:
        version[a.id] = 1
        heap.append((signed(a)[0], a.id, 1))
    heapq.heapify(heap)

    result: List[int] = []
    accepted_by: List[str] = []
    budget_exhausted = False

    def accept(arm: ArmState, reason: str) -> None:
        result.append(arm.id)
        accepted_by.append(reason)
        active.discard(arm.id)
        log_event("accept", arm)

    while len(result) < k:
        top = clean_top()
        if top is None:
            break
        heapq.heappop(heap)
        a = by_id[top[1]]
        lo_a, hi_a = signed(a)
        other = clean_top()

        if other is None or hi_a < other[0]:
            # certification: no remaining arm can beat a
            assert other is None or hi_a < other[0]
            accept(a, "certified")
            continue
        if config.epsilon > 0 and (hi_a - lo_a) <= config.epsilon * abs(hi_a):
            accept(a, "approximate")
            continue
        if config.pull_budget is not None and counters["pulls"] >= config.pull_budget:
            budget_exhausted = True
            remaining = sorted(active, key=lambda i: (sign * by_id[i].mean, i))
            filled = remaining[: k - len(result)]
            for i in filled:
                accept(by_id[i], "budget")
            logger.warning(
                "Pull budget %d exhausted; %d slots filled by current means", config.pull_budget, len(filled)
            )
            break

        if a.exact:
            b = by_id[other[1]]
            if b.exact:
                # equal exact values: lower id wins
                accept(a, "tie")
                continue
            heapq.heappop(heap)
            pull(b)
            push(b)
            push(a)
            continue

        pull(a)
        push(a)

    logger.debug(
        "best-%d over %d arms: pulls=%d exact=%d result=%s",
        k,
        len(arms),
        counters["pulls"],
        counters["exact"],
        result,
    )
    return BanditResult(
        ids=result,
        states=list(arms),
        ledger=ledger,
        pulls=counters["pulls"],
        exact_evals=counters["exact"],
        budget_exhausted=budget_exhausted,
        accepted_by=accepted_by,
    )


def run_best_approx(
    arms: Sequence[ArmState],
    config: BanditConfig,
    puller: Puller,
    exact_eval: ExactEval,
    **kwargs: Any,
) -> Tuple[int, BanditResult]:
    # epsilon = 0 reduces to the exact best-1 search
    res = run_best_k(arms, 1, config, puller, exact_eval, **kwargs)
    return res.ids[0], res
