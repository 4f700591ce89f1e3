# src/data_io.py
from __future__ import annotations

import csv
from dataclasses import dataclass, field
import logging
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

import numpy as np

from src.sparse import SparseVector

logger = logging.getLogger(__name__)

SYNTHETIC_KINDS = ("blobs", "gap-gaussian", "mmi-planted", "sparse-blobs")


def as_dense_matrix(values: Any) -> np.ndarray:
    """Validate and return an (n x d) row-major float64 matrix."""
    arr = np.ascontiguousarray(np.asarray(values, dtype=np.float64))
    if arr.ndim == 1:
        arr = arr.reshape(-1, 1)
    if arr.ndim != 2:
        raise ValueError(f"Expected a 2-D matrix, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("Matrix contains non-finite values")
    return arr


def _is_numeric_row(row: Sequence[str]) -> bool:
    try:
        for v in row:
            float(v)
    except ValueError:
        return False
    return True


def load_dense(path: Path) -> np.ndarray:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(path)
    rows: List[List[float]] = []
    width: Optional[int] = None
    with path.open("r", encoding="utf-8", newline="") as f:
        for line_no, row in enumerate(csv.reader(f), start=1):
            if not row or all(not c.strip() for c in row):
                continue
            if line_no == 1 and not _is_numeric_row(row):
                continue  # header
            if width is None:
                width = len(row)
            elif len(row) != width:
                raise ValueError(f"Ragged row at line {line_no}: {len(row)} columns, expected {width}")
            try:
                rows.append([float(v) for v in row])
            except ValueError as exc:
                raise ValueError(f"Could not parse line {line_no} of {path} as numbers") from exc
    if not rows:
        raise ValueError(f"No numeric rows found in {path}")
    return as_dense_matrix(rows)


def write_dense(path: Path, data: np.ndarray, header: Optional[Sequence[str]] = None) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="") as f:
        w = csv.writer(f)
        if header is not None:
            w.writerow(list(header))
        for row in np.asarray(data, dtype=np.float64):
            w.writerow([repr(float(v)) for v in row])


def load_sparse(path: Path) -> List[SparseVector]:
    """Triplet format: header 'n d nnz', then 'row col value' per line, 0-indexed."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(path)
    with path.open("r", encoding="utf-8") as f:
        lines = [ln.strip() for ln in f if ln.strip()]
    if not lines:
        raise ValueError(f"Sparse file appears empty: {path}")
    try:
        n, d, nnz = (int(v) for v in lines[0].split())
    except ValueError as exc:
        raise ValueError(f"Bad sparse header '{lines[0]}' (expected 'n d nnz')") from exc
    vectors = [SparseVector(d) for _ in range(n)]
    seen = set()
    for line_no, ln in enumerate(lines[1:], start=2):
        parts = ln.split()
        if len(parts) != 3:
            raise ValueError(f"Line {line_no}: expected 'row col value', got '{ln}'")
        r, c, v = int(parts[0]), int(parts[1]), float(parts[2])
        if not (0 <= r < n):
            raise ValueError(f"Line {line_no}: row {r} out of range for n={n}")
        if (r, c) in seen:
            raise ValueError(f"Line {line_no}: duplicate entry for (row={r}, col={c})")
        if not np.isfinite(v):
            raise ValueError(f"Line {line_no}: non-finite value")
        seen.add((r, c))
        vectors[r].put(c, v)
    if len(seen) != nnz:
        raise ValueError(f"Header declares nnz={nnz} but file has {len(seen)} entries")
    return vectors


def write_sparse(path: Path, vectors: Sequence[SparseVector]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if not vectors:
        raise ValueError("Nothing to write")
    d = vectors[0].dim
    total = sum(v.nnz for v in vectors)
    with path.open("w", encoding="utf-8") as f:
        f.write(f"{len(vectors)} {d} {total}\n")
        for r, vec in enumerate(vectors):
            for c, val in vec.items():
                f.write(f"{r} {c} {val!r}\n")


@dataclass
class SyntheticFixture:
    kind: str
    data: Any
    labels: Optional[np.ndarray] = None
    target: Optional[np.ndarray] = None
    truth: Dict[str, Any] = field(default_factory=dict)


def _blobs(params: Dict[str, Any], rng: np.random.Generator) -> SyntheticFixture:
    n = int(params.get("n", 100))
    d = int(params.get("d", 50))
    centers = int(params.get("centers", 3))
    spread = float(params.get("spread", 1.0))
    scale = float(params.get("center_scale", 10.0))
    sub = int(params.get("subclusters", 1))
    sub_scale = float(params.get("sub_scale", scale / 4.0))

    top = rng.normal(0.0, scale, size=(centers, d))
    if sub > 1:
        offsets = rng.normal(0.0, sub_scale, size=(centers, sub, d))
        means = (top[:, None, :] + offsets).reshape(centers * sub, d)
    else:
        means = top
    labels = np.arange(n) % means.shape[0]
    data = means[labels] + rng.normal(0.0, spread, size=(n, d))
    return SyntheticFixture(
        kind="blobs",
        data=data,
        labels=labels,
        truth={"means": means, "top_labels": labels // max(sub, 1)},
    )


def _gap_gaussian(params: Dict[str, Any], rng: np.random.Generator) -> SyntheticFixture:
    # rows are arms; row means are set exactly so every gap is known
    n = int(params.get("n", 20))
    d = int(params.get("d", 500))
    gamma = float(params.get("gamma", 2.0))
    sigma = float(params.get("sigma", 1.0))
    base = float(params.get("base", 0.0))
    gaps = np.abs(rng.normal(gamma, 1.0, size=n))
    gaps[0] = 0.0
    means = base + gaps
    noise = rng.normal(0.0, 1.0, size=(n, d))
    noise -= noise.mean(axis=1, keepdims=True)
    noise /= noise.std(axis=1, keepdims=True)
    values = means[:, None] + sigma * noise
    row_means = values.mean(axis=1)
    return SyntheticFixture(
        kind="gap-gaussian",
        data=values,
        truth={"means": row_means, "gaps": row_means - row_means.min(), "sigma": sigma},
    )


def _mmi_planted(params: Dict[str, Any], rng: np.random.Generator) -> SyntheticFixture:
    n = int(params.get("n", 500))
    d = int(params.get("d", 10))
    planted = int(params.get("planted", 0))
    noise = float(params.get("noise", 0.1))
    if not (0 <= planted < d):
        raise ValueError(f"planted feature {planted} out of range for d={d}")
    data = rng.normal(0.0, 1.0, size=(n, d))
    target = data[:, planted] + noise * rng.normal(0.0, 1.0, size=n)
    return SyntheticFixture(kind="mmi-planted", data=data, target=target, truth={"planted": planted})


def _sparse_blobs(params: Dict[str, Any], rng: np.random.Generator) -> SyntheticFixture:
    n = int(params.get("n", 100))
    d = int(params.get("d", 1000))
    centers = int(params.get("centers", 4))
    density = float(params.get("density", 0.07))
    spread = float(params.get("spread", 0.5))
    scale = float(params.get("center_scale", 5.0))
    if not (0.0 < density <= 1.0):
        raise ValueError(f"density must lie in (0, 1], got {density}")
    masks = rng.random((centers, d)) < density
    for m in masks:
        if not m.any():
            m[rng.integers(d)] = True
    center_vals = rng.normal(0.0, scale, size=(centers, d))
    labels = np.arange(n) % centers
    vectors: List[SparseVector] = []
    for lab in labels:
        mask = masks[lab]
        row = np.zeros(d)
        row[mask] = center_vals[lab, mask] + rng.normal(0.0, spread, size=int(mask.sum()))
        vectors.append(SparseVector.from_dense(row))
    return SyntheticFixture(
        kind="sparse-blobs",
        data=vectors,
        labels=labels,
        truth={"density": density, "masks": masks},
    )


def gen_synthetic(kind: str, params: Optional[Dict[str, Any]] = None, seed: int = 0) -> SyntheticFixture:
    """Pure function of (kind, params, seed)."""
    params = dict(params or {})
    rng = np.random.default_rng(seed)
    if kind == "blobs":
        return _blobs(params, rng)
    if kind == "gap-gaussian":
        return _gap_gaussian(params, rng)
    if kind == "mmi-planted":
        return _mmi_planted(params, rng)
    if kind == "sparse-blobs":
        return _sparse_blobs(params, rng)
    raise ValueError(f"Unknown synthetic kind '{kind}' (expected one of {SYNTHETIC_KINDS})")
