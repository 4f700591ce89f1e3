#!/usr/bin/env python3
"""
Scaled acceptance sweep. Each check prints [OK]/[WARN] and the whole run is
written as one JSON report.

  python -m src.eval_acceptance --seeds 100
  python -m src.eval_acceptance --quick
"""
from __future__ import annotations

import argparse
from dataclasses import replace
import logging
import math
from pathlib import Path
import sys
import time
from typing import Any, Callable, Dict, List

import numpy as np

from src.bandit import BanditConfig, make_arms, run_best_k
from src.data_io import gen_synthetic
from src.estimators import RunningEstimate, batch_estimate, update
from src.hierarchical import cluster, pair_exact
from src.mmi import MIArmState, mi_arm_pull, recompute_state, select_feature
from src.neighbors import assign_step, knn_graph
from src.oracle import (
    AccuracyReport,
    brute_assign,
    brute_hier,
    brute_knn,
    brute_knn_sparse,
    brute_total_knn,
    brute_total_mmi,
    kmeans_accuracy,
    knn_accuracy,
    mmi_accuracy,
    pairwise_mean_sq,
    tree_accuracy,
)
from src.report import dump_report
from src.sparse import SparseVector, enumerate_mean, sparse_exact

ROOT = Path(__file__).resolve().parents[1]
DEFAULT_OUT = ROOT / "data" / "results" / "acceptance_report.json"


def binomial_floor(target: float, trials: int) -> float:
    # one-sided 3-sigma tolerance below the target rate
    return target - 3.0 * math.sqrt(target * (1.0 - target) / max(trials, 1))


def check_knn_accuracy(scale: Dict[str, int], seeds: int) -> Dict[str, Any]:
    scores = []
    for s in range(seeds):
        fx = gen_synthetic("blobs", {"n": scale["knn_n"], "d": scale["knn_d"], "centers": 5}, seed=s)
        res = knn_graph(fx.data, 5, BanditConfig(seed=s))
        scores.append(knn_accuracy(brute_knn(fx.data, 5), res.neighbors))
    rep = AccuracyReport.from_trials("knn", scores)
    return {"accuracy": rep.as_dict(), "passed": rep.score >= binomial_floor(0.99, seeds)}


def check_assign_accuracy(scale: Dict[str, int], seeds: int) -> Dict[str, Any]:
    scores = []
    k = scale["kmeans_k"]
    for s in range(seeds):
        fx = gen_synthetic("blobs", {"n": scale["kmeans_n"], "d": scale["kmeans_d"], "centers": k}, seed=s)
        rng = np.random.default_rng(s)
        C = fx.data[rng.choice(fx.data.shape[0], size=k, replace=False)]
        asg = assign_step(fx.data, C, BanditConfig(seed=s))
        scores.append(kmeans_accuracy(brute_assign(fx.data, C), asg.labels))
    rep = AccuracyReport.from_trials("kmeans", scores)
    return {"accuracy": rep.as_dict(), "passed": rep.score >= binomial_floor(0.99, seeds)}


def check_mmi_accuracy(scale: Dict[str, int], seeds: int) -> Dict[str, Any]:
    scores = []
    for s in range(seeds):
        fx = gen_synthetic("mmi-planted", {"n": scale["mmi_n"], "d": scale["mmi_d"], "planted": s % scale["mmi_d"]}, seed=s)
        res = select_feature(fx.data, fx.target, BanditConfig(seed=s))
        scores.append(mmi_accuracy(fx.truth["planted"], res.feature))
    rep = AccuracyReport.from_trials("mmi", scores)
    return {"accuracy": rep.as_dict(), "passed": rep.score >= binomial_floor(0.99, seeds)}


def check_tree_accuracy(scale: Dict[str, int], seeds: int) -> Dict[str, Any]:
    scores = []
    for s in range(seeds):
        fx = gen_synthetic(
            "blobs",
            {"n": scale["hier_n"], "d": scale["hier_d"], "centers": 4, "subclusters": 3, "spread": 1.0},
            seed=s,
        )
        res = cluster(fx.data, BanditConfig(seed=s))
        scores.append(tree_accuracy(brute_hier(fx.data), res.dendrogram, seed=s))
    rep = AccuracyReport.from_trials("hier", scores)
    return {"accuracy": rep.as_dict(), "passed": rep.score >= 0.9}


def check_pull_bound(scale: Dict[str, int], seeds: int) -> Dict[str, Any]:
    violations = 0
    checked = 0
    for s in range(seeds):
        sigma = 1.0
        fx = gen_synthetic("gap-gaussian", {"n": scale["gap_n"], "d": scale["gap_d"], "sigma": sigma}, seed=s)
        X = fx.data
        n, d = X.shape
        cfg = replace(BanditConfig(seed=s, sigma_mode="fixed", sigma=sigma), theory_delta=True).for_problem(n, d)
        arms = make_arms(range(n), max_pulls=d, denominator=float(d))
        res = run_best_k(
            arms,
            1,
            cfg,
            lambda i, rng: float(X[i, rng.integers(d)]),
            lambda i: float(X[i].mean()),
        )
        warm = cfg.resolve_warmup(n)
        gaps = fx.truth["gaps"]
        for a in arms:
            if a.id == res.ids[0] or gaps[a.id] <= 0:
                continue
            ceiling = min(math.ceil(8 * sigma ** 2 * math.log(n ** 3 * d) / gaps[a.id] ** 2), 2 * d) + warm
            checked += 1
            violations += int(a.pulls > ceiling)
    return {"checked_arms": checked, "violations": violations, "passed": violations == 0}


def check_gain_monotone(scale: Dict[str, int]) -> Dict[str, Any]:
    knn_gains = []
    n = scale["curve_knn_n"]
    for d in scale["curve_dims"]:
        fx = gen_synthetic("blobs", {"n": n, "d": d}, seed=0)
        res = knn_graph(fx.data, 5, BanditConfig(seed=0))
        knn_gains.append(brute_total_knn(n) / res.ledger.effective_total)
    mmi_gains = []
    d = scale["curve_mmi_d"]
    for m in scale["curve_sizes"]:
        fx = gen_synthetic("mmi-planted", {"n": m, "d": d}, seed=0)
        res = select_feature(fx.data, fx.target, BanditConfig(seed=0))
        mmi_gains.append(brute_total_mmi(m, d) / res.ledger.effective_total)

    def increasing(v: List[float]) -> bool:
        return all(b > a for a, b in zip(v, v[1:]))

    return {
        "knn_gains": knn_gains,
        "mmi_gains": mmi_gains,
        "passed": increasing(knn_gains) and increasing(mmi_gains),
    }


def _random_sparse(rng: np.random.Generator, dim: int) -> SparseVector:
    mask = rng.random(dim) < 0.4
    return SparseVector.from_dense(np.where(mask, rng.normal(size=dim), 0.0))


def check_sparse(scale: Dict[str, int]) -> Dict[str, Any]:
    rng = np.random.default_rng(0)
    worst = 0.0
    for _ in range(1000):
        dim = int(rng.integers(1, 9))
        x0, x1 = _random_sparse(rng, dim), _random_sparse(rng, dim)
        worst = max(worst, abs(enumerate_mean(x0, x1) - sparse_exact(x0, x1)))
    fx = gen_synthetic("sparse-blobs", {"n": scale["sparse_n"], "d": scale["sparse_d"]}, seed=0)
    res = knn_graph(fx.data, 5, BanditConfig(seed=0), mode="sparse")
    gain = brute_total_knn(len(fx.data)) / res.ledger.effective_total
    acc = knn_accuracy(brute_knn_sparse(fx.data, 5), res.neighbors)
    return {
        "max_enumeration_error": worst,
        "sparse_gain": gain,
        "sparse_knn_accuracy": acc,
        "passed": worst <= 1e-9 and gain > 1.0,
    }


def check_identities() -> Dict[str, Any]:
    ok_monotone = True
    ok_convex = True
    ok_count = True
    rng = np.random.default_rng(0)
    for n in range(3, 41):
        X = rng.normal(size=(n, 3))
        vals = [m.value for m in brute_hier(X).merges]
        ok_monotone &= all(b >= a - 1e-12 for a, b in zip(vals, vals[1:]))
        idx = rng.permutation(n)
        c, c2, dd = idx[:1], idx[1:2], idx[2:]
        lhs = pair_exact(X, np.concatenate([c, c2]), dd)
        rhs = (len(c) * pair_exact(X, c, dd) + len(c2) * pair_exact(X, c2, dd)) / (len(c) + len(c2))
        ok_convex &= abs(lhs - rhs) <= 1e-9
        res = cluster(X, BanditConfig(seed=n))
        ok_count &= res.arms_created == math.comb(n, 2) + math.comb(n - 1, 2)
    return {"monotone": ok_monotone, "convex": ok_convex, "arm_count": ok_count, "passed": ok_monotone and ok_convex and ok_count}


def check_approximate(scale: Dict[str, int], seeds: int) -> Dict[str, Any]:
    good = 0
    fewer = 0
    for s in range(seeds):
        fx = gen_synthetic("blobs", {"n": scale["approx_n"], "d": scale["approx_d"]}, seed=s)
        exact_run = knn_graph(fx.data, 5, BanditConfig(seed=s))
        approx_run = knn_graph(fx.data, 5, BanditConfig(seed=s, epsilon=0.1))
        D = pairwise_mean_sq(fx.data)
        np.fill_diagonal(D, np.inf)
        kth = np.sort(D, axis=1)[:, 4]
        within = all(D[i, j] <= 1.1 * kth[i] + 1e-12 for i, nb in enumerate(approx_run.neighbors) for j in nb)
        good += int(within)
        fewer += int(approx_run.pulls <= exact_run.pulls)
    rate = good / seeds
    return {"within_rate": rate, "fewer_pulls_runs": fewer, "passed": rate >= 0.99 and fewer == seeds}


def check_incremental() -> Dict[str, Any]:
    rng = np.random.default_rng(0)
    worst_est = 0.0
    for _ in range(50):
        xs = rng.normal(size=int(rng.integers(2, 200)))
        est = RunningEstimate()
        for x in xs:
            update(est, float(x))
        ref = batch_estimate(xs)
        worst_est = max(worst_est, abs(est.mean - ref.mean), abs(est.m2 - ref.m2) / max(1.0, abs(ref.m2)))
    worst_mmi = 0.0
    for t in range(10):
        n = 120
        w, z = rng.normal(size=n), rng.normal(size=n)
        st = MIArmState(feature=0, capacity=n)
        for _ in range(int(rng.integers(2, n))):
            mi_arm_pull(st, w, z, rng)
        ref = recompute_state(st)
        c = st.count
        for key in ("nn_w", "nn_z", "nn_joint"):
            worst_mmi = max(worst_mmi, float(np.max(np.abs(getattr(st, key)[:c] - ref[key]))))
        for key in ("logsum_w", "logsum_z", "logsum_joint"):
            worst_mmi = max(worst_mmi, abs(getattr(st, key) - ref[key]))
    return {"estimator_error": worst_est, "mmi_error": worst_mmi, "passed": worst_est <= 1e-9 and worst_mmi <= 1e-9}


def check_determinism(scale: Dict[str, int]) -> Dict[str, Any]:
    fx = gen_synthetic("blobs", {"n": 60, "d": 100}, seed=3)
    a = knn_graph(fx.data, 3, BanditConfig(seed=3))
    b = knn_graph(fx.data, 3, BanditConfig(seed=3, threads=2))
    same = a.neighbors == b.neighbors and a.ledger.summary() == b.ledger.summary()
    return {"passed": bool(same)}


SCALES = {
    "full": {
        "knn_n": 500, "knn_d": 1000,
        "kmeans_n": 2000, "kmeans_d": 500, "kmeans_k": 20,
        "mmi_n": 2000, "mmi_d": 100,
        "hier_n": 200, "hier_d": 500,
        "gap_n": 20, "gap_d": 500,
        "curve_knn_n": 300, "curve_dims": [512, 1024, 2048, 4096],
        "curve_mmi_d": 50, "curve_sizes": [500, 1000, 2000, 4000],
        "sparse_n": 150, "sparse_d": 2000,
        "approx_n": 80, "approx_d": 400,
    },
    "quick": {
        "knn_n": 100, "knn_d": 300,
        "kmeans_n": 300, "kmeans_d": 200, "kmeans_k": 5,
        "mmi_n": 500, "mmi_d": 10,
        "hier_n": 40, "hier_d": 200,
        "gap_n": 10, "gap_d": 300,
        "curve_knn_n": 100, "curve_dims": [256, 1024, 4096],
        "curve_mmi_d": 10, "curve_sizes": [250, 1000, 4000],
        "sparse_n": 60, "sparse_d": 1000,
        "approx_n": 50, "approx_d": 200,
    },
}


def main() -> None:
    ap = argparse.ArgumentParser(description="Scaled acceptance sweep for the adaptive Monte Carlo applications.")
    ap.add_argument("--seeds", type=int, default=100, help="Seeds per accuracy criterion")
    ap.add_argument("--hier-seeds", dest="hier_seeds", type=int, default=20)
    ap.add_argument("--quick", action="store_true", help="Small sizes and few seeds (smoke run)")
    ap.add_argument("--out_path", default=str(DEFAULT_OUT))
    ap.add_argument("--log-level", dest="log_level", default="WARNING")
    args = ap.parse_args()
    logging.basicConfig(level=getattr(logging, args.log_level.upper(), logging.WARNING))

    scale = SCALES["quick" if args.quick else "full"]
    seeds = 10 if args.quick else args.seeds
    hier_seeds = 3 if args.quick else args.hier_seeds

    checks: Dict[str, Callable[[], Dict[str, Any]]] = {
        "knn_accuracy": lambda: check_knn_accuracy(scale, seeds),
        "assign_accuracy": lambda: check_assign_accuracy(scale, seeds),
        "mmi_accuracy": lambda: check_mmi_accuracy(scale, seeds),
        "tree_accuracy": lambda: check_tree_accuracy(scale, hier_seeds),
        "pull_bound": lambda: check_pull_bound(scale, seeds),
        "gain_monotone": lambda: check_gain_monotone(scale),
        "sparse": lambda: check_sparse(scale),
        "identities": check_identities,
        "approximate": lambda: check_approximate(scale, seeds),
        "incremental": check_incremental,
        "determinism": lambda: check_determinism(scale),
    }

    print("=== acceptance sweep ===")
    results: Dict[str, Any] = {}
    for name, fn in checks.items():
        t0 = time.perf_counter()
        out = fn()
        out["seconds"] = round(time.perf_counter() - t0, 3)
        results[name] = out
        tag = "[OK]" if out["passed"] else "[WARN]"
        print(f"{tag} {name} ({out['seconds']:.1f}s)")

    report = {"scale": "quick" if args.quick else "full", "seeds": seeds, "checks": results}
    out_path = Path(args.out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    out_path.write_text(dump_report(report) + "\n", encoding="utf-8")
    failed = [k for k, v in results.items() if not v["passed"]]
    print(f"Passed {len(results) - len(failed)}/{len(results)} checks")
    print(f"Wrote report to: {out_path}")
    if failed:
        sys.exit(1)


if __name__ == "__main__":
    main()
