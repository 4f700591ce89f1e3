# src/estimators.py
from __future__ import annotations

from dataclasses import dataclass
import math
from typing import Callable, Iterable, Sequence

import numpy as np


SIGMA_FLOOR = 1e-12


@dataclass(frozen=True)
class ConfidenceBound:
    lcb: float
    ucb: float

    @property
    def width(self) -> float:
        return self.ucb - self.lcb

    @property
    def center(self) -> float:
        return 0.5 * (self.lcb + self.ucb)


@dataclass
class RunningEstimate:
    """
    Welford accumulator for an arm's sample mean and spread.

    `mean` after l updates equals the batch mean of the l samples; `m2` is the
    running sum of squared deviations.
    """

    count: int = 0
    mean: float = 0.0
    m2: float = 0.0

    @property
    def sigma_hat(self) -> float:
        if self.count < 2:
            return SIGMA_FLOOR
        return max(math.sqrt(max(self.m2, 0.0) / (self.count - 1)), SIGMA_FLOOR)

    def copy(self) -> "RunningEstimate":
        return RunningEstimate(count=self.count, mean=self.mean, m2=self.m2)


@dataclass(frozen=True)
class SmoothWrap:
    g: Callable[[float], float]
    g_prime: Callable[[float], float]
    g_prime_bound: float
    g_second_bound: float


def update(est: RunningEstimate, sample: float) -> RunningEstimate:
    # f_{l+1} = l/(l+1) f_l + sample/(l+1), written in Welford form
    est.count += 1
    delta = sample - est.mean
    est.mean += delta / est.count
    est.m2 += delta * (sample - est.mean)
    return est


def batch_estimate(samples: Iterable[float]) -> RunningEstimate:
    arr = np.asarray(list(samples), dtype=np.float64)
    if arr.size == 0:
        return RunningEstimate()
    mean = float(arr.mean())
    return RunningEstimate(count=int(arr.size), mean=mean, m2=float(((arr - mean) ** 2).sum()))


def half_width(sigma: float, delta: float, count: int) -> float:
    if count < 1:
        raise RuntimeError("Confidence requested before any pull; warm the arm up first.")
    return math.sqrt(2.0 * sigma * sigma * math.log(2.0 / delta) / count)


def confidence(
    est: RunningEstimate,
    delta: float,
    exact: bool = False,
    sigma: float | None = None,
) -> ConfidenceBound:
    if exact:
        return ConfidenceBound(lcb=est.mean, ucb=est.mean)
    s = est.sigma_hat if sigma is None else max(sigma, SIGMA_FLOOR)
    c = half_width(s, delta, est.count)
    return ConfidenceBound(lcb=est.mean - c, ucb=est.mean + c)


def delta_confidence(
    est: RunningEstimate,
    wrap: SmoothWrap,
    delta: float,
    exact: bool = False,
    sigma: float | None = None,
) -> ConfidenceBound:
    center = float(wrap.g(est.mean))
    if not math.isfinite(center):
        raise ValueError(f"g(mean) is not finite at mean={est.mean}")
    if exact:
        return ConfidenceBound(lcb=center, ucb=center)
    s = est.sigma_hat if sigma is None else max(sigma, SIGMA_FLOOR)
    c = half_width(s, delta, est.count)
    # first-order delta term plus second-order bias guard
    h = abs(float(wrap.g_prime(est.mean))) * c + wrap.g_second_bound * c * c / 2.0
    return ConfidenceBound(lcb=center - h, ucb=center + h)


def sqrt_wrap(lower: float = 1e-6) -> SmoothWrap:
    """g = sqrt on [lower, inf); derivative bounds taken at `lower`."""
    if lower <= 0:
        raise ValueError(f"sqrt wrap needs a positive lower range bound, got {lower}")

    def g(v: float) -> float:
        return math.sqrt(max(v, 0.0))

    def g_prime(v: float) -> float:
        return 0.5 / math.sqrt(max(v, lower))

    return SmoothWrap(
        g=g,
        g_prime=g_prime,
        g_prime_bound=0.5 / math.sqrt(lower),
        g_second_bound=0.25 * lower ** -1.5,
    )


def identity_wrap() -> SmoothWrap:
    return SmoothWrap(g=lambda v: v, g_prime=lambda v: 1.0, g_prime_bound=1.0, g_second_bound=0.0)


def _check_coord(x: Sequence[float], t: int) -> None:
    if t < 0 or t >= len(x):
        raise IndexError(f"Coordinate {t} out of range for dimension {len(x)}")


def sample_sq_coord(x: Sequence[float], y: Sequence[float], t: int) -> float:
    _check_coord(x, t)
    diff = float(x[t]) - float(y[t])
    return diff * diff


def sample_abs_coord(x: Sequence[float], y: Sequence[float], t: int) -> float:
    _check_coord(x, t)
    return abs(float(x[t]) - float(y[t]))


def exact_mean(x: Sequence[float], y: Sequence[float]) -> float:
    xa = np.asarray(x, dtype=np.float64)
    ya = np.asarray(y, dtype=np.float64)
    if xa.shape != ya.shape:
        raise ValueError(f"Dimension mismatch: {xa.shape} vs {ya.shape}")
    diff = xa - ya
    return float(np.dot(diff, diff) / diff.size)


def exact_abs_mean(x: Sequence[float], y: Sequence[float]) -> float:
    xa = np.asarray(x, dtype=np.float64)
    ya = np.asarray(y, dtype=np.float64)
    if xa.shape != ya.shape:
        raise ValueError(f"Dimension mismatch: {xa.shape} vs {ya.shape}")
    return float(np.abs(xa - ya).mean())
