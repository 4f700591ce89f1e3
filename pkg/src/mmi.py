# src/mmi.py
from __future__ import annotations

from dataclasses import dataclass, field, replace
import logging
import math
from typing import Dict, List, Optional, Sequence

import numpy as np
from scipy.stats import norm
from sklearn.neighbors import KDTree

from src.bandit import ArmState, BanditConfig, BanditResult, EvalLedger, Snapshot, run_best_k

logger = logging.getLogger(__name__)

LOG_UNIT_BALL = {1: math.log(2.0), 2: math.log(math.pi)}
# below this many rows the nearest-neighbour terms are too coupled for a usable spread estimate
MIN_WARMUP_ROWS = 16


@dataclass
class MMIConfig:
    r_floor: float = 1e-12
    c1_offset: float = 0.0
    c2_offset: float = 0.0
    # multiply log R by the space dimension (textbook form); off = plain mean of log R
    dim_scaled: bool = False
    standardize: bool = True

    def __post_init__(self) -> None:
        if self.r_floor <= 0:
            raise ValueError(f"r_floor must be positive, got {self.r_floor}")

    def dim_factor(self, dim: int) -> float:
        return float(dim) if self.dim_scaled else 1.0


def kl_constant(dim: int, count: int, cfg: Optional[MMIConfig] = None) -> float:
    """c_d(dim, l) = log(l-1) + Euler-Mascheroni + log V_dim."""
    cfg = cfg or MMIConfig()
    if dim not in LOG_UNIT_BALL:
        raise ValueError(f"Only 1-D and 2-D spaces are supported, got dim={dim}")
    if count < 2:
        raise ValueError(f"Need at least 2 samples, got {count}")
    offset = cfg.c1_offset if dim == 1 else cfg.c2_offset
    return math.log(count - 1) + float(np.euler_gamma) + LOG_UNIT_BALL[dim] + offset


def nn_distances(samples: np.ndarray) -> np.ndarray:
    pts = np.asarray(samples, dtype=np.float64)
    if pts.ndim == 1:
        pts = pts.reshape(-1, 1)
    dist, _ = KDTree(pts).query(pts, k=2)
    return dist[:, 1]


def kl_entropy(samples: Sequence, cfg: Optional[MMIConfig] = None) -> float:
    cfg = cfg or MMIConfig()
    pts = np.asarray(samples, dtype=np.float64)
    if pts.ndim == 1:
        pts = pts.reshape(-1, 1)
    count, dim = pts.shape
    if count < 2:
        raise ValueError(f"Kozachenko-Leonenko entropy needs >= 2 samples, got {count}")
    r = np.maximum(nn_distances(pts), cfg.r_floor)
    return cfg.dim_factor(dim) * float(np.log(r).mean()) + kl_constant(dim, count, cfg)


def full_mi(w: np.ndarray, z: np.ndarray, cfg: Optional[MMIConfig] = None) -> float:
    cfg = cfg or MMIConfig()
    w = np.asarray(w, dtype=np.float64)
    z = np.asarray(z, dtype=np.float64)
    joint = np.column_stack([w, z])
    return kl_entropy(w, cfg) + kl_entropy(z, cfg) - kl_entropy(joint, cfg)


@dataclass
class MIArmState:
    """
    Per-feature sampled rows with cached nearest-neighbour distances in the
    feature, target and joint spaces. Entries with no neighbour yet hold inf
    and contribute 0 to the log sums.
    """

    feature: int
    capacity: int
    rows: List[int] = field(default_factory=list)
    order: Optional[np.ndarray] = None
    w: np.ndarray = None
    z: np.ndarray = None
    nn_w: np.ndarray = None
    nn_z: np.ndarray = None
    nn_joint: np.ndarray = None
    log_w: np.ndarray = None
    log_z: np.ndarray = None
    log_joint: np.ndarray = None
    u: np.ndarray = None
    logsum_w: float = 0.0
    logsum_z: float = 0.0
    logsum_joint: float = 0.0
    sum_u2: float = 0.0

    def __post_init__(self) -> None:
        cap = self.capacity
        for name in ("w", "z", "log_w", "log_z", "log_joint", "u"):
            if getattr(self, name) is None:
                setattr(self, name, np.zeros(cap))
        for name in ("nn_w", "nn_z", "nn_joint"):
            if getattr(self, name) is None:
                setattr(self, name, np.full(cap, np.inf))

    @property
    def count(self) -> int:
        return len(self.rows)


def mi_arm_pull(
    state: MIArmState,
    feature_col: np.ndarray,
    target: np.ndarray,
    rng: np.random.Generator,
    cfg: Optional[MMIConfig] = None,
) -> MIArmState:
    """Add one unsampled row (without replacement) and refresh cached NN distances in O(l)."""
    cfg = cfg or MMIConfig()
    c = state.count
    if c >= state.capacity:
        raise RuntimeError(f"Feature {state.feature}: all {state.capacity} rows consumed; arm is exact")
    if state.order is None:
        state.order = rng.permutation(state.capacity)
    row = int(state.order[c])
    wp, zp = float(feature_col[row]), float(target[row])
    jf = cfg.dim_factor(2)

    if c > 0:
        dw = np.abs(state.w[:c] - wp)
        dz = np.abs(state.z[:c] - zp)
        dj = np.hypot(dw, dz)
        changed = np.zeros(c, dtype=bool)
        for nn, logs, dist, attr in (
            (state.nn_w, state.log_w, dw, "logsum_w"),
            (state.nn_z, state.log_z, dz, "logsum_z"),
            (state.nn_joint, state.log_joint, dj, "logsum_joint"),
        ):
            hit = dist < nn[:c]
            if hit.any():
                idx = np.flatnonzero(hit)
                nn[idx] = dist[idx]
                new_logs = np.log(np.maximum(dist[idx], cfg.r_floor))
                setattr(state, attr, getattr(state, attr) + float((new_logs - logs[idx]).sum()))
                logs[idx] = new_logs
                changed |= hit
        if changed.any():
            idx = np.flatnonzero(changed)
            old_u = state.u[idx]
            new_u = state.log_w[idx] + state.log_z[idx] - jf * state.log_joint[idx]
            state.sum_u2 += float((new_u * new_u - old_u * old_u).sum())
            state.u[idx] = new_u
        own = (float(dw.min()), float(dz.min()), float(dj.min()))
    else:
        own = (math.inf, math.inf, math.inf)

    state.w[c], state.z[c] = wp, zp
    state.nn_w[c], state.nn_z[c], state.nn_joint[c] = own
    lw, lz, lj = (0.0 if math.isinf(r) else math.log(max(r, cfg.r_floor)) for r in own)
    state.log_w[c], state.log_z[c], state.log_joint[c] = lw, lz, lj
    state.logsum_w += lw
    state.logsum_z += lz
    state.logsum_joint += lj
    u = lw + lz - jf * lj
    state.u[c] = u
    state.sum_u2 += u * u
    state.rows.append(row)
    return state


def mi_estimate(state: MIArmState, cfg: Optional[MMIConfig] = None) -> float:
    cfg = cfg or MMIConfig()
    ell = state.count
    if ell < 2:
        raise ValueError(f"MI estimate needs >= 2 sampled rows, got {ell}")
    jf = cfg.dim_factor(2)
    mean_u = (state.logsum_w + state.logsum_z - jf * state.logsum_joint) / ell
    return mean_u + 2.0 * kl_constant(1, ell, cfg) - kl_constant(2, ell, cfg)


def mi_half_width(state: MIArmState, delta: float, cfg: Optional[MMIConfig] = None) -> float:
    """CLT plug-in: z_{1-delta/2} * s / sqrt(l), s = spread of per-sample log contributions."""
    cfg = cfg or MMIConfig()
    ell = state.count
    if ell < 2:
        return math.inf
    jf = cfg.dim_factor(2)
    sum_u = state.logsum_w + state.logsum_z - jf * state.logsum_joint
    var = max(state.sum_u2 - sum_u * sum_u / ell, 0.0) / (ell - 1)
    s = max(math.sqrt(var), 1e-12)
    return float(norm.ppf(1.0 - delta / 2.0)) * s / math.sqrt(ell)


def recompute_state(state: MIArmState, cfg: Optional[MMIConfig] = None) -> Dict[str, object]:
    """From-scratch NN distances and log sums over the sampled rows."""
    cfg = cfg or MMIConfig()
    c = state.count
    w, z = state.w[:c], state.z[:c]
    nn_w = nn_distances(w)
    nn_z = nn_distances(z)
    nn_joint = nn_distances(np.column_stack([w, z]))
    return {
        "nn_w": nn_w,
        "nn_z": nn_z,
        "nn_joint": nn_joint,
        "logsum_w": float(np.log(np.maximum(nn_w, cfg.r_floor)).sum()),
        "logsum_z": float(np.log(np.maximum(nn_z, cfg.r_floor)).sum()),
        "logsum_joint": float(np.log(np.maximum(nn_joint, cfg.r_floor)).sum()),
    }


def standardize_columns(x: np.ndarray) -> np.ndarray:
    sd = x.std(axis=0)
    sd = np.where(sd > 0, sd, 1.0)
    return (x - x.mean(axis=0)) / sd


@dataclass
class MMIResult:
    feature: int
    estimates: Dict[int, float]
    pulls: Dict[int, int]
    exact: Dict[int, bool]
    ledger: EvalLedger
    bandit: BanditResult

    @property
    def effective_samples(self) -> float:
        return self.ledger.effective_total


def select_feature(
    data: np.ndarray,
    target: np.ndarray,
    config: BanditConfig,
    mmi_config: Optional[MMIConfig] = None,
    exclude: Sequence[int] = (),
    pull_log: Optional[List[Dict[str, object]]] = None,
) -> MMIResult:
    """Best-1 maximize bandit over feature arms; one pull samples one more row for that feature."""
    cfg = mmi_config or MMIConfig()
    X = np.asarray(data, dtype=np.float64)
    y = np.asarray(target, dtype=np.float64).ravel()
    if X.ndim != 2:
        raise ValueError(f"Expected an (n x d) matrix, got shape {X.shape}")
    n, d = X.shape
    if n < 2 or d < 1:
        raise ValueError(f"Need n >= 2 rows and d >= 1 features, got n={n}, d={d}")
    if y.size != n:
        raise ValueError(f"Target length {y.size} does not match n={n}")
    if float(np.ptp(y)) == 0.0:
        raise ValueError("Target has zero spread; no feature can be informative about a constant target")
    features = [j for j in range(d) if j not in set(exclude)]
    if not features:
        raise ValueError("No candidate features left after exclusions")

    if cfg.standardize:
        X = standardize_columns(X)
        y = standardize_columns(y.reshape(-1, 1)).ravel()

    run_cfg = config.for_problem(n, len(features))
    run_cfg = replace(
        run_cfg,
        objective="maximize",
        warmup_pulls=min(n, max(MIN_WARMUP_ROWS, run_cfg.resolve_warmup(len(features)))),
    )
    states = {j: MIArmState(feature=j, capacity=n) for j in features}
    arms = [
        ArmState(id=j, max_pulls=n, key=("feature", j), denominator=1.0, weight=float(n))
        for j in features
    ]

    def puller(fid: int, rng: np.random.Generator) -> Snapshot:
        st = mi_arm_pull(states[fid], X[:, fid], y, rng, cfg)
        if st.count < 2:
            return Snapshot(mean=0.0, half_width=math.inf)
        return Snapshot(mean=mi_estimate(st, cfg), half_width=mi_half_width(st, run_cfg.delta, cfg))

    def exact_eval(fid: int) -> float:
        return full_mi(X[:, fid], y, cfg)

    res = run_best_k(arms, 1, run_cfg, puller, exact_eval, pull_log=pull_log)
    logger.debug("MMI selected feature %d after %d pulls", res.ids[0], res.pulls)
    return MMIResult(
        feature=res.ids[0],
        estimates={a.id: a.mean for a in arms},
        pulls={a.id: a.pulls for a in arms},
        exact={a.id: a.exact for a in arms},
        ledger=res.ledger,
        bandit=res,
    )
