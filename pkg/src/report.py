# src/report.py
from __future__ import annotations

import csv
from dataclasses import dataclass, field
import json
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

from src.bandit import EvalLedger

SCHEMA_VERSION = "1.0"
APPS = ("knn", "kmeans", "medoid", "hier", "mmi", "gaincurve")

# field -> accepted python types; nested blocks are checked by validate_report
REPORT_SCHEMA: Dict[str, Tuple[type, ...]] = {
    "schema_version": (str,),
    "app": (str,),
    "seed": (int,),
    "config": (dict,),
    "data": (dict,),
    "result": (dict,),
    "ledger": (dict,),
    "brute_total": (int, float, type(None)),
    "gain": (int, float, type(None)),
    "accuracy": (dict, type(None)),
    "wall_time": (int, float),
}
LEDGER_FIELDS = ("coord_touches", "effective_total", "units", "exact_units")


def read_jsonl(path: Path) -> List[Dict[str, Any]]:
    rows = []
    with Path(path).open("r", encoding="utf-8") as f:
        for line in f:
            line = line.strip()
            if line:
                rows.append(json.loads(line))
    return rows


def write_jsonl(path: Path, rows: Sequence[Dict[str, Any]]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as f:
        for r in rows:
            f.write(json.dumps(r, sort_keys=True) + "\n")


def gain_of(brute_total: Optional[float], effective_total: float) -> Optional[float]:
    if brute_total is None:
        return None
    if effective_total <= 0:
        return None
    return float(brute_total) / float(effective_total)


@dataclass
class RunReport:
    app: str
    seed: int
    config: Dict[str, Any]
    data: Dict[str, Any]
    result: Dict[str, Any]
    ledger: Dict[str, Any]
    brute_total: Optional[float] = None
    accuracy: Optional[Dict[str, Any]] = None
    wall_time: float = 0.0
    extra: Dict[str, Any] = field(default_factory=dict)

    @classmethod
    def from_ledger(
        cls,
        app: str,
        seed: int,
        config: Dict[str, Any],
        data: Dict[str, Any],
        result: Dict[str, Any],
        ledger: EvalLedger,
        brute_total: Optional[float] = None,
        **kwargs: Any,
    ) -> "RunReport":
        return cls(
            app=app,
            seed=seed,
            config=config,
            data=data,
            result=result,
            ledger=ledger.summary(),
            brute_total=brute_total,
            **kwargs,
        )

    @property
    def gain(self) -> Optional[float]:
        return gain_of(self.brute_total, float(self.ledger.get("effective_total", 0.0)))

    def as_dict(self) -> Dict[str, Any]:
        out = {
            "schema_version": SCHEMA_VERSION,
            "app": self.app,
            "seed": int(self.seed),
            "config": self.config,
            "data": self.data,
            "result": self.result,
            "ledger": self.ledger,
            "brute_total": self.brute_total,
            "gain": self.gain,
            "accuracy": self.accuracy,
            "wall_time": float(self.wall_time),
        }
        out.update(self.extra)
        return out


def validate_report(report: Dict[str, Any]) -> None:
    for key, types in REPORT_SCHEMA.items():
        if key not in report:
            raise ValueError(f"Report missing field '{key}'")
        if not isinstance(report[key], types) or isinstance(report[key], bool):
            raise ValueError(f"Report field '{key}' has type {type(report[key]).__name__}")
    if report["schema_version"] != SCHEMA_VERSION:
        raise ValueError(f"Unsupported schema_version {report['schema_version']}")
    if report["app"] not in APPS:
        raise ValueError(f"Unknown app '{report['app']}'")
    for key in LEDGER_FIELDS:
        if key not in report["ledger"]:
            raise ValueError(f"Ledger block missing '{key}'")
    if report["gain"] is not None and report["gain"] < 0:
        raise ValueError(f"Gain must be >= 0, got {report['gain']}")
    acc = report["accuracy"]
    if acc is not None and not (0.0 <= float(acc.get("score", -1.0)) <= 1.0):
        raise ValueError(f"Accuracy score out of range: {acc.get('score')}")


def dump_report(report: Dict[str, Any]) -> str:
    # sorted keys keep same-seed runs byte-identical apart from wall_time
    return json.dumps(report, indent=2, sort_keys=True, ensure_ascii=False)


def write_report(path: Path, report: Dict[str, Any]) -> Path:
    validate_report(report)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dump_report(report) + "\n", encoding="utf-8")
    return path


def write_gain_csv(path: Path, axis: str, rows: Sequence[Dict[str, Any]]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="") as f:
        w = csv.writer(f)
        w.writerow([axis, "gain", "effective_total", "brute_total"])
        for r in rows:
            w.writerow([r[axis], repr(float(r["gain"])), repr(float(r["effective_total"])), repr(float(r["brute_total"]))])
    return path


def write_linkage_csv(path: Path, rows: Sequence[Tuple[int, int, float, int]]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="") as f:
        w = csv.writer(f)
        w.writerow(["a", "b", "value", "size"])
        for a, b, value, size in rows:
            w.writerow([a, b, repr(float(value)), size])
    return path
