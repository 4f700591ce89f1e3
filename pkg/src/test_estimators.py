# src/test_estimators.py
import math

import numpy as np
import pytest

from src.estimators import (
    RunningEstimate,
    SIGMA_FLOOR,
    SmoothWrap,
    batch_estimate,
    confidence,
    delta_confidence,
    exact_abs_mean,
    exact_mean,
    half_width,
    identity_wrap,
    sample_abs_coord,
    sample_sq_coord,
    sqrt_wrap,
    update,
)


def test_coordinate_samples() -> None:
    assert sample_sq_coord([1.0, 2.0], [1.0, 2.0], 1) == 0.0
    assert sample_sq_coord([1.0, 0.0], [0.0, 0.0], 0) == 1.0
    assert sample_abs_coord([3.0, 4.0], [0.0, 0.0], 1) == 4.0
    with pytest.raises(IndexError):
        sample_sq_coord([1.0], [2.0], 1)


def test_exact_mean_is_coordinate_average() -> None:
    assert exact_mean([3.0, 4.0], [0.0, 0.0]) == 12.5
    assert exact_mean([2.5], [1.0]) == 2.25
    x = np.arange(6, dtype=float)
    y = x[::-1].copy()
    enumerated = np.mean([sample_sq_coord(x, y, t) for t in range(x.size)])
    assert exact_mean(x, y) == pytest.approx(enumerated, rel=1e-12)
    assert exact_abs_mean(x, y) == pytest.approx(np.mean([sample_abs_coord(x, y, t) for t in range(6)]))
    with pytest.raises(ValueError):
        exact_mean([1.0, 2.0], [1.0])


def test_update_examples() -> None:
    est = RunningEstimate()
    update(est, 5.0)
    assert est.mean == 5.0 and est.count == 1
    est = RunningEstimate(count=1, mean=2.0)
    update(est, 4.0)
    assert est.mean == 3.0


def test_streaming_matches_batch() -> None:
    rng = np.random.default_rng(0)
    samples = rng.uniform(0.0, 1.0, size=1000)
    est = RunningEstimate()
    for s in samples:
        update(est, float(s))
    ref = batch_estimate(samples)
    assert est.count == ref.count == 1000
    assert est.mean == pytest.approx(ref.mean, rel=1e-9)
    assert est.sigma_hat == pytest.approx(ref.sigma_hat, rel=1e-9)
    assert ref.sigma_hat == pytest.approx(np.std(samples, ddof=1), rel=1e-9)


def test_sigma_floor() -> None:
    assert RunningEstimate().sigma_hat == SIGMA_FLOOR
    assert batch_estimate([3.0]).sigma_hat == SIGMA_FLOOR
    assert batch_estimate([2.0, 2.0, 2.0]).sigma_hat == SIGMA_FLOOR


def test_half_width_plug_in() -> None:
    # log(2 / delta) = 2 when delta = 2 / e^2
    delta = 2.0 / math.e ** 2
    assert half_width(1.0, delta, 4) == pytest.approx(1.0)
    assert half_width(1.0, 0.01, 40) == pytest.approx(half_width(1.0, 0.01, 10) / 2.0)
    with pytest.raises(RuntimeError):
        half_width(1.0, 0.01, 0)


def test_confidence_exact_has_zero_width() -> None:
    est = batch_estimate([1.0, 5.0, 9.0])
    b = confidence(est, 0.01, exact=True)
    assert b.width == 0.0 and b.lcb == est.mean
    b = confidence(est, 0.01, sigma=1.0)
    assert b.center == pytest.approx(est.mean)
    assert b.width == pytest.approx(2.0 * half_width(1.0, 0.01, 3))
    with pytest.raises(RuntimeError):
        confidence(RunningEstimate(), 0.01)


def test_identity_wrap_reduces_to_confidence() -> None:
    est = batch_estimate([0.5, 1.5, 2.0, 4.0])
    plain = confidence(est, 0.05)
    wrapped = delta_confidence(est, identity_wrap(), 0.05)
    assert wrapped.lcb == pytest.approx(plain.lcb)
    assert wrapped.ucb == pytest.approx(plain.ucb)


def test_sqrt_wrap_half_width() -> None:
    est = batch_estimate([3.0, 5.0])  # mean 4
    wrap = sqrt_wrap(lower=1.0)
    c = half_width(est.sigma_hat, 0.01, est.count)
    b = delta_confidence(est, wrap, 0.01)
    assert b.center == pytest.approx(2.0)
    expected = 0.25 * c + wrap.g_second_bound * c * c / 2.0
    assert (b.ucb - b.lcb) / 2.0 == pytest.approx(expected)
    exact = delta_confidence(est, wrap, 0.01, exact=True)
    assert exact.lcb == exact.ucb == 2.0


def test_delta_confidence_rejects_non_finite_center() -> None:
    wrap = SmoothWrap(g=lambda v: float("inf"), g_prime=lambda v: 1.0, g_prime_bound=1.0, g_second_bound=0.0)
    with pytest.raises(ValueError):
        delta_confidence(batch_estimate([1.0, 2.0]), wrap, 0.01)
    with pytest.raises(ValueError):
        sqrt_wrap(lower=0.0)


def test_monotone_wrap_preserves_argmin() -> None:
    rng = np.random.default_rng(3)
    X = rng.normal(size=(12, 8))
    vals = np.array([exact_mean(X[0], X[j]) for j in range(1, 12)])
    wrap = sqrt_wrap()
    assert int(np.argmin(vals)) == int(np.argmin([wrap.g(v) for v in vals]))


def test_coverage_on_gaussian_samples() -> None:
    rng = np.random.default_rng(11)
    delta, trials, ell = 0.05, 10_000, 8
    draws = rng.normal(loc=2.0, scale=1.5, size=(trials, ell))
    hits = 0
    for row in draws:
        b = confidence(batch_estimate(row), delta, sigma=1.5)
        hits += b.lcb <= 2.0 <= b.ucb
    floor = (1 - delta) - 3 * math.sqrt(delta * (1 - delta) / trials)
    assert hits / trials >= floor, hits


if __name__ == "__main__":
    test_coordinate_samples()
    test_exact_mean_is_coordinate_average()
    test_update_examples()
    test_streaming_matches_batch()
    test_sigma_floor()
    test_half_width_plug_in()
    test_confidence_exact_has_zero_width()
    test_identity_wrap_reduces_to_confidence()
    test_sqrt_wrap_half_width()
    test_delta_confidence_rejects_non_finite_center()
    test_monotone_wrap_preserves_argmin()
    test_coverage_on_gaussian_samples()
    print("[OK] estimator tests passed")
