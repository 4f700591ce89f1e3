# src/sparse.py
from __future__ import annotations

import logging
from typing import Dict, Iterable, List, Sequence, Tuple

import numpy as np

logger = logging.getLogger(__name__)


class SparseVector:
    """
    Nonzero values in a dense list plus a coordinate -> slot dictionary.

    Membership, value lookup and uniform sampling of a nonzero coordinate are
    all O(1).
    """

    def __init__(self, dim: int, entries: Iterable[Tuple[int, float]] = ()):
        if dim < 1:
            raise ValueError(f"SparseVector dimension must be positive, got {dim}")
        self.dim = int(dim)
        self.values: List[float] = []
        self.coords: List[int] = []
        self.index: Dict[int, int] = {}
        for t, v in entries:
            if int(t) in self.index:
                raise ValueError(f"Duplicate coordinate {t}")
            self.put(t, v)

    def _check(self, t: int) -> None:
        if t < 0 or t >= self.dim:
            raise ValueError(f"Illegal index {t} for vector size {self.dim}")

    @property
    def nnz(self) -> int:
        return len(self.values)

    def put(self, t: int, value: float) -> None:
        t = int(t)
        self._check(t)
        value = float(value)
        slot = self.index.get(t)
        if value == 0.0:
            if slot is None:
                return
            # swap-remove keeps the value list dense
            last = len(self.values) - 1
            if slot != last:
                moved = self.coords[last]
                self.values[slot] = self.values[last]
                self.coords[slot] = moved
                self.index[moved] = slot
            self.values.pop()
            self.coords.pop()
            del self.index[t]
            return
        if slot is None:
            self.index[t] = len(self.values)
            self.values.append(value)
            self.coords.append(t)
        else:
            self.values[slot] = value

    def get(self, t: int) -> float:
        return membership(self, t)[1]

    def to_dense(self) -> np.ndarray:
        out = np.zeros(self.dim, dtype=np.float64)
        if self.coords:
            out[np.asarray(self.coords)] = self.values
        return out

    @classmethod
    def from_dense(cls, row: Sequence[float]) -> "SparseVector":
        arr = np.asarray(row, dtype=np.float64)
        nz = np.flatnonzero(arr)
        return cls(arr.size, zip(nz.tolist(), arr[nz].tolist()))

    def items(self) -> List[Tuple[int, float]]:
        return sorted(zip(self.coords, self.values))

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, SparseVector):
            return NotImplemented
        return self.dim == other.dim and self.items() == other.items()

    def __repr__(self) -> str:
        return f"SparseVector(dim={self.dim}, nnz={self.nnz})"


def _sample_slot(x: SparseVector, rng: np.random.Generator) -> int:
    if x.nnz == 0:
        raise ValueError("Cannot sample a nonzero coordinate of an all-zero vector")
    return int(rng.integers(x.nnz))


def sample_nonzero(x: SparseVector, rng: np.random.Generator) -> int:
    return x.coords[_sample_slot(x, rng)]


def membership(x: SparseVector, t: int) -> Tuple[bool, float]:
    x._check(t)
    slot = x.index.get(t)
    if slot is None:
        return False, 0.0
    return True, x.values[slot]


def _side_term(src: SparseVector, other: SparseVector, rng: np.random.Generator) -> float:
    slot = _sample_slot(src, rng)
    # one membership lookup per side: the own value comes straight from the slot
    present, theirs = membership(other, src.coords[slot])
    diff = src.values[slot] - theirs
    # coordinate missing from the other side is counted twice (no 1/2 factor)
    scale = src.nnz / (2.0 * src.dim) * (1.0 if present else 2.0)
    return scale * diff * diff


def sparse_sample(x0: SparseVector, x1: SparseVector, rng: np.random.Generator) -> float:
    """One draw of the unbiased sparse squared-distance estimator (per-coordinate units)."""
    if x0.dim != x1.dim:
        raise ValueError(f"Dimension mismatch: {x0.dim} vs {x1.dim}")
    total = 0.0
    if x0.nnz:
        total += _side_term(x0, x1, rng)
    if x1.nnz:
        total += _side_term(x1, x0, rng)
    return total


def sparse_term(x0: SparseVector, x1: SparseVector, t0: int, t1: int) -> float:
    """Estimator value for a fixed draw (t0 from x0's support, t1 from x1's); used by enumeration checks."""
    total = 0.0
    for src, other, t in ((x0, x1, t0), (x1, x0, t1)):
        if src.nnz == 0:
            continue
        _, own = membership(src, t)
        present, theirs = membership(other, t)
        scale = src.nnz / (2.0 * src.dim) * (1.0 if present else 2.0)
        total += scale * (own - theirs) ** 2
    return total


def sparse_exact(x0: SparseVector, x1: SparseVector) -> float:
    if x0.dim != x1.dim:
        raise ValueError(f"Dimension mismatch: {x0.dim} vs {x1.dim}")
    total = 0.0
    for t, v in zip(x0.coords, x0.values):
        _, w = membership(x1, t)
        total += (v - w) ** 2
    for t, w in zip(x1.coords, x1.values):
        if t not in x0.index:
            total += w * w
    return total / x0.dim


def enumerate_mean(x0: SparseVector, x1: SparseVector) -> float:
    """Exact expectation of sparse_sample by walking every (t0, t1) draw pair."""
    c0 = x0.coords or [None]
    c1 = x1.coords or [None]
    vals = [sparse_term(x0, x1, a, b) for a in c0 for b in c1]
    return float(np.mean(vals))
