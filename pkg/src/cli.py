#!/usr/bin/env python3
"""
Command-line runner for the adaptive Monte Carlo applications.

  python -m src.cli knn --k 5 --oracle --report data/results/knn.json
  python -m src.cli gaincurve --app knn --dims 512,1024,2048,4096

Exit codes: 0 ok, 1 runtime failure (degenerate data), 2 usage error or
unreadable input.
"""
from __future__ import annotations

import argparse
import logging
from pathlib import Path
import sys
import time
from typing import Any, Dict, List, Optional, Sequence, Tuple

from src.bandit import BanditConfig, EvalLedger, REPLACEMENT_MODES, SIGMA_MODES
from src.data_io import SYNTHETIC_KINDS, gen_synthetic, load_dense, load_sparse
from src.hierarchical import cluster
from src.mmi import select_feature
from src.neighbors import GRANULARITIES, KNN_MODES, knn_graph, lloyd, medoid
from src.oracle import (
    AccuracyReport,
    MEDOID_METRICS,
    brute_hier,
    brute_knn,
    brute_knn_sparse,
    brute_medoid,
    brute_mmi,
    brute_total_assign,
    brute_total_hier,
    brute_total_knn,
    brute_total_medoid,
    brute_total_mmi,
    kmeans_accuracy,
    knn_accuracy,
    mmi_accuracy,
    tree_accuracy,
)
from src.report import RunReport, write_gain_csv, write_jsonl, write_linkage_csv, write_report

ROOT = Path(__file__).resolve().parents[1]
DEFAULT_RESULTS = ROOT / "data" / "results"

logger = logging.getLogger(__name__)


class UsageError(Exception):
    """Bad flag combination or unreadable input; maps to exit code 2."""


def parse_int_list(raw: str, flag: str) -> List[int]:
    try:
        vals = [int(v) for v in raw.split(",") if v.strip()]
    except ValueError as exc:
        raise UsageError(f"Could not parse {flag} '{raw}' as a comma-separated integer list") from exc
    if not vals:
        raise UsageError(f"{flag} is empty")
    return vals


def config_from_args(args: argparse.Namespace) -> BanditConfig:
    try:
        return BanditConfig(
            delta=args.delta,
            epsilon=args.epsilon,
            warmup_pulls=args.warmup,
            sigma_mode=args.sigma_mode,
            sigma=args.sigma,
            replacement=args.replacement,
            seed=args.seed,
            theory_delta=args.theory_delta,
            pull_budget=args.pull_budget,
            threads=args.threads,
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def synth_params(args: argparse.Namespace, **overrides: Any) -> Dict[str, Any]:
    params: Dict[str, Any] = {}
    if args.n is not None:
        params["n"] = args.n
    if args.d is not None:
        params["d"] = args.d
    params.update(overrides)
    return params


def load_input(args: argparse.Namespace, default_kind: str, sparse: bool = False, **extra: Any):
    """Returns (data, fixture-or-None, data description)."""
    if args.data:
        path = Path(args.data)
        try:
            data = load_sparse(path) if sparse else load_dense(path)
        except FileNotFoundError as exc:
            raise UsageError(f"Input file not found: {path}") from exc
        except ValueError as exc:
            raise UsageError(f"Could not read {path}: {exc}") from exc
        n = len(data) if sparse else int(data.shape[0])
        d = data[0].dim if sparse else int(data.shape[1])
        return data, None, {"source": str(path), "n": n, "d": d}
    kind = args.synthetic or default_kind
    if kind not in SYNTHETIC_KINDS:
        raise UsageError(f"Unknown synthetic kind '{kind}'")
    fx = gen_synthetic(kind, synth_params(args, **extra), seed=args.seed)
    n = len(fx.data) if kind == "sparse-blobs" else int(fx.data.shape[0])
    d = fx.data[0].dim if kind == "sparse-blobs" else int(fx.data.shape[1])
    return fx.data, fx, {"source": f"synthetic:{kind}", "n": n, "d": d}


def run_knn(args: argparse.Namespace, cfg: BanditConfig) -> RunReport:
    sparse = args.mode == "sparse"
    data, _, desc = load_input(args, "sparse-blobs" if sparse else "blobs", sparse=sparse)
    res = knn_graph(data, args.k, cfg, mode=args.mode)
    accuracy = None
    if args.oracle:
        exact = brute_knn_sparse(data, args.k) if sparse else brute_knn(data, args.k)
        accuracy = AccuracyReport("knn", knn_accuracy(exact, res.neighbors)).as_dict()
    return RunReport.from_ledger(
        app="knn",
        seed=cfg.seed,
        config=cfg.as_dict(),
        data={**desc, "mode": args.mode},
        result={"k": args.k, "neighbors": res.neighbors, "pulls": res.pulls, "exact_evals": res.exact_evals},
        ledger=res.ledger,
        brute_total=brute_total_knn(desc["n"]),
        accuracy=accuracy,
    )


def run_kmeans(args: argparse.Namespace, cfg: BanditConfig) -> RunReport:
    data, _, desc = load_input(args, "blobs", centers=args.k)
    asg = lloyd(data, args.k, args.iters, cfg)
    accuracy = None
    if args.oracle:
        ref = lloyd(data, args.k, args.iters, cfg, exact=True)
        accuracy = AccuracyReport("kmeans", kmeans_accuracy(ref.labels, asg.labels)).as_dict()
    return RunReport.from_ledger(
        app="kmeans",
        seed=cfg.seed,
        config=cfg.as_dict(),
        data=desc,
        result={
            "k": args.k,
            "labels": asg.labels.tolist(),
            "inertia": asg.inertia,
            "n_iter": asg.n_iter,
            "inertia_history": asg.inertia_history,
        },
        ledger=asg.ledger,
        brute_total=brute_total_assign(desc["n"], args.k) * (asg.n_iter + 1),
        accuracy=accuracy,
    )


def run_medoid(args: argparse.Namespace, cfg: BanditConfig) -> Tuple[RunReport, List[Dict[str, Any]]]:
    data, _, desc = load_input(args, "blobs")
    pull_log: List[Dict[str, Any]] = []
    res = medoid(data, cfg, metric=args.metric, granularity=args.granularity, pull_log=pull_log)
    accuracy = None
    if args.oracle:
        exact_id = brute_medoid(data, args.metric)
        accuracy = AccuracyReport("medoid", 1.0 if exact_id == res.medoid else 0.0).as_dict()
    report = RunReport.from_ledger(
        app="medoid",
        seed=cfg.seed,
        config=cfg.as_dict(),
        data={**desc, "metric": args.metric, "granularity": args.granularity},
        result={"medoid": res.medoid, "pulls": res.pulls, "exact_evals": res.exact_evals},
        ledger=res.ledger,
        brute_total=brute_total_medoid(desc["n"]),
        accuracy=accuracy,
    )
    return report, pull_log


def run_hier(args: argparse.Namespace, cfg: BanditConfig) -> RunReport:
    data, _, desc = load_input(args, "blobs", subclusters=2)
    res = cluster(data, cfg, pool_new_arms=args.pool_new_arms)
    dend = res.dendrogram
    accuracy = None
    if args.oracle:
        score = tree_accuracy(brute_hier(data), dend, seed=cfg.seed)
        accuracy = AccuracyReport("hier", score).as_dict()
    if args.linkage_csv:
        write_linkage_csv(Path(args.linkage_csv), dend.to_linkage_rows())
        print(f"[OK] Wrote linkage rows to: {args.linkage_csv}")
    return RunReport.from_ledger(
        app="hier",
        seed=cfg.seed,
        config=cfg.as_dict(),
        data=desc,
        result={
            "dendrogram": dend.as_dict(),
            "arms_created": res.arms_created,
            "pulls": res.pulls,
            "exact_evals": res.exact_evals,
        },
        ledger=res.ledger,
        brute_total=brute_total_hier(desc["n"]),
        accuracy=accuracy,
    )


def run_mmi(args: argparse.Namespace, cfg: BanditConfig) -> Tuple[RunReport, List[Dict[str, Any]]]:
    data, fx, desc = load_input(args, "mmi-planted")
    exclude: Sequence[int] = ()
    if args.target_col is not None:
        if not (0 <= args.target_col < data.shape[1]):
            raise UsageError(f"--target-col {args.target_col} out of range for d={data.shape[1]}")
        target = data[:, args.target_col]
        exclude = (args.target_col,)
    elif fx is not None and fx.target is not None:
        target = fx.target
    else:
        raise UsageError("mmi needs --target-col when reading --data")
    pull_log: List[Dict[str, Any]] = []
    res = select_feature(data, target, cfg, exclude=exclude, pull_log=pull_log)
    accuracy = None
    if args.oracle:
        best, _ = brute_mmi(data, target, exclude=exclude)
        accuracy = AccuracyReport("mmi", mmi_accuracy(best, res.feature)).as_dict()
    n_features = desc["d"] - len(exclude)
    report = RunReport.from_ledger(
        app="mmi",
        seed=cfg.seed,
        config=cfg.as_dict(),
        data={**desc, "target_col": args.target_col},
        result={
            "feature": res.feature,
            "estimates": {str(k): v for k, v in sorted(res.estimates.items())},
            "samples": {str(k): v for k, v in sorted(res.pulls.items())},
            "effective_samples": res.effective_samples,
        },
        ledger=res.ledger,
        brute_total=brute_total_mmi(desc["n"], n_features),
        accuracy=accuracy,
    )
    return report, pull_log


def run_gaincurve(args: argparse.Namespace, cfg: BanditConfig) -> RunReport:
    rows: List[Dict[str, Any]] = []
    total = EvalLedger()
    brute = 0.0
    if args.app == "knn":
        axis, grid = "d", parse_int_list(args.dims, "--dims")
        n = args.n or 300
        for d in grid:
            fx = gen_synthetic("blobs", {"n": n, "d": d}, seed=args.seed)
            res = knn_graph(fx.data, args.k, cfg)
            b = brute_total_knn(n)
            rows.append({axis: d, "gain": b / res.ledger.effective_total, "effective_total": res.ledger.effective_total, "brute_total": b})
            total.absorb(res.ledger)
            brute += b
            print(f"[INFO] d={d} gain={rows[-1]['gain']:.2f}")
    elif args.app == "mmi":
        axis, grid = "n", parse_int_list(args.sizes, "--sizes")
        d = args.d or 50
        for n in grid:
            fx = gen_synthetic("mmi-planted", {"n": n, "d": d}, seed=args.seed)
            res = select_feature(fx.data, fx.target, cfg)
            b = brute_total_mmi(n, d)
            rows.append({axis: n, "gain": b / res.ledger.effective_total, "effective_total": res.ledger.effective_total, "brute_total": b})
            total.absorb(res.ledger)
            brute += b
            print(f"[INFO] n={n} gain={rows[-1]['gain']:.2f}")
    else:
        raise UsageError(f"gaincurve supports --app knn|mmi, got '{args.app}'")

    gains = [r["gain"] for r in rows]
    monotone = all(b > a for a, b in zip(gains, gains[1:]))
    csv_path = Path(args.csv) if args.csv else Path(args.report).with_suffix(".csv")
    write_gain_csv(csv_path, axis, rows)
    print(f"[OK] Wrote gain curve to: {csv_path}")
    return RunReport.from_ledger(
        app="gaincurve",
        seed=cfg.seed,
        config=cfg.as_dict(),
        data={"source": f"synthetic:{'blobs' if args.app == 'knn' else 'mmi-planted'}", "axis": axis, "grid": grid},
        result={"app": args.app, "rows": rows, "monotone": monotone},
        ledger=total,
        brute_total=brute,
    )


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    src = common.add_mutually_exclusive_group()
    src.add_argument("--data", default=None, help="Dense CSV (or sparse triplet file with --mode sparse)")
    src.add_argument("--synthetic", default=None, choices=SYNTHETIC_KINDS, help="Generate a synthetic fixture instead")
    common.add_argument("--n", type=int, default=None, help="Synthetic fixture size")
    common.add_argument("--d", type=int, default=None, help="Synthetic fixture dimension")
    common.add_argument("--delta", type=float, default=0.01)
    common.add_argument("--epsilon", type=float, default=0.0)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--warmup", type=int, default=None, help="Warm-up pulls per arm (default max(2, ceil(log2 arms)))")
    common.add_argument("--sigma-mode", dest="sigma_mode", default="per-arm", choices=SIGMA_MODES)
    common.add_argument("--sigma", type=float, default=None, help="Sigma value for --sigma-mode fixed")
    common.add_argument("--replacement", default="with", choices=REPLACEMENT_MODES)
    common.add_argument("--theory-delta", dest="theory_delta", action="store_true", help="Use delta = 2/(n^3 d)")
    common.add_argument("--pull-budget", dest="pull_budget", type=int, default=None)
    common.add_argument("--threads", type=int, default=1)
    common.add_argument("--oracle", action="store_true", help="Also run brute force and report accuracy")
    common.add_argument("--report", default=None, help="Report JSON path")
    common.add_argument("--pull-log", dest="pull_log", default=None, help="JSONL pull log (medoid, mmi)")
    common.add_argument("--log-level", dest="log_level", default="WARNING")

    ap = argparse.ArgumentParser(description="Adaptive Monte Carlo optimization runner.")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("knn", parents=[common], help="k-nearest-neighbour graph")
    p.add_argument("--k", type=int, default=5)
    p.add_argument("--mode", default="dense", choices=KNN_MODES)

    p = sub.add_parser("kmeans", parents=[common], help="Lloyd iterations with bandit assignment")
    p.add_argument("--k", type=int, default=3)
    p.add_argument("--iters", type=int, default=10)

    p = sub.add_parser("medoid", parents=[common], help="Medoid of the dataset")
    p.add_argument("--metric", default="l1", choices=MEDOID_METRICS)
    p.add_argument("--granularity", default="row", choices=GRANULARITIES)

    p = sub.add_parser("hier", parents=[common], help="Average-linkage hierarchical clustering")
    p.add_argument("--linkage-csv", dest="linkage_csv", default=None)
    p.add_argument("--pool-new-arms", dest="pool_new_arms", action="store_true")

    p = sub.add_parser("mmi", parents=[common], help="Maximum mutual information feature")
    p.add_argument("--target-col", dest="target_col", type=int, default=None)

    p = sub.add_parser("gaincurve", parents=[common], help="Gain vs dimension (knn) or size (mmi)")
    p.add_argument("--app", default="knn", choices=("knn", "mmi"))
    p.add_argument("--dims", default="512,1024,2048,4096")
    p.add_argument("--sizes", default="500,1000,2000,4000")
    p.add_argument("--k", type=int, default=5)
    p.add_argument("--csv", default=None)
    return ap


# single-bandit subcommands that keep a pull log
PULL_LOG_COMMANDS = ("medoid", "mmi")

RUNNERS = {
    "knn": run_knn,
    "kmeans": run_kmeans,
    "medoid": run_medoid,
    "hier": run_hier,
    "mmi": run_mmi,
    "gaincurve": run_gaincurve,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=getattr(logging, str(args.log_level).upper(), logging.WARNING),
        format="%(levelname)s %(name)s: %(message)s",
    )
    if args.report is None:
        args.report = str(DEFAULT_RESULTS / f"{args.command}_report.json")

    print(f"=== {args.command} ===")
    t0 = time.perf_counter()
    try:
        if args.pull_log and args.command not in PULL_LOG_COMMANDS:
            raise UsageError(f"--pull-log is only written by {', '.join(PULL_LOG_COMMANDS)}, not {args.command}")
        cfg = config_from_args(args)
        out = RUNNERS[args.command](args, cfg)
    except UsageError as exc:
        print(f"[ERROR] {exc}")
        return 2
    except (ValueError, RuntimeError) as exc:
        print(f"[ERROR] {exc}")
        return 1

    report, pull_log = out if isinstance(out, tuple) else (out, None)
    report.wall_time = time.perf_counter() - t0
    payload = report.as_dict()
    write_report(Path(args.report), payload)
    if args.pull_log and pull_log is not None:
        write_jsonl(Path(args.pull_log), pull_log)
        print(f"[OK] Wrote {len(pull_log)} pull events to: {args.pull_log}")

    print(f"[INFO] effective evaluations={report.ledger['effective_total']:.2f}")
    if payload["gain"] is not None:
        print(f"[INFO] gain vs brute force={payload['gain']:.2f}x")
    if payload["accuracy"] is not None:
        print(f"[INFO] accuracy={payload['accuracy']['score']:.3f}")
    print(f"[OK] Wrote report to: {args.report}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
