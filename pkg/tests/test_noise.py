import math

import numpy as np
import pytest

from src.data.noise import (
    NoiseSource,
    PrivacyParams,
    compose_budget,
    laplace_sample,
    laplace_sum_tail_bound,
    rr_error_bound,
)


def test_privacy_params_validation():
    with pytest.raises(ValueError):
        PrivacyParams(0.0)
    with pytest.raises(ValueError):
        PrivacyParams(1.0, 1.0)


def test_zero_noise_hook(zero_noise):
    assert laplace_sample(3.0, zero_noise) == 0.0
    np.testing.assert_array_equal(zero_noise.laplace(2.0, size=5), np.zeros(5))


def test_laplace_rejects_bad_scale(noise):
    with pytest.raises(ValueError):
        laplace_sample(0.0, noise)


def test_same_seed_same_draws():
    a = NoiseSource(seed=99).laplace(1.0, size=20)
    b = NoiseSource(seed=99).laplace(1.0, size=20)
    np.testing.assert_array_equal(a, b)


def test_spawned_sources_are_independent_and_reproducible():
    first = [s.laplace(1.0, size=5) for s in NoiseSource(seed=3).spawn(3)]
    second = [s.laplace(1.0, size=5) for s in NoiseSource(seed=3).spawn(3)]
    for a, b in zip(first, second):
        np.testing.assert_array_equal(a, b)
    assert not np.allclose(first[0], first[1])


def test_open_uniform_stays_inside_unit_interval(noise):
    draws = noise.open_uniform(size=10_000)
    assert draws.min() > 0 and draws.max() < 1


@pytest.mark.slow
def test_laplace_median_and_variance():
    b = 2.0
    draws = NoiseSource(seed=1).laplace(b, size=100_000)
    assert np.median(np.abs(draws)) == pytest.approx(b * math.log(2), rel=0.05)
    assert np.var(draws) == pytest.approx(2 * b**2, rel=0.10)


def test_tail_bound_examples():
    assert laplace_sum_tail_bound(50, 1.0, 50.0) == pytest.approx(math.exp(-50 / 6))
    assert laplace_sum_tail_bound(50, 1.0, 50.0) == pytest.approx(2.4037e-4, rel=1e-3)
    assert laplace_sum_tail_bound(50, 1.0, 100.0) == pytest.approx(5.778e-8, rel=1e-3)


def test_tail_bound_validation():
    with pytest.raises(ValueError):
        laplace_sum_tail_bound(0, 1.0, 1.0)


@pytest.mark.slow
def test_tail_bound_monte_carlo():
    k = 20
    alpha = math.sqrt(6 * k * math.log(20))
    draws = NoiseSource(seed=5).laplace(1.0, size=(100_000, k))
    frequency = float(np.mean(draws.sum(axis=1) >= alpha))
    assert frequency <= laplace_sum_tail_bound(k, 1.0, alpha)


@pytest.mark.slow
def test_tail_bound_soundness_over_parameter_grid():
    rng = np.random.default_rng(11)
    src = NoiseSource(seed=11)
    trials = 20_000
    for _ in range(20):
        k = int(rng.integers(1, 30))
        b = float(rng.uniform(0.2, 3.0))
        alpha = float(rng.uniform(0.5, 3.0)) * math.sqrt(k) * b
        weights = rng.random(k)
        sums = src.laplace(b, size=(trials, k)) @ weights
        frequency = float(np.mean(sums >= alpha))
        stderr = math.sqrt(max(frequency * (1 - frequency), 1e-12) / trials)
        assert frequency <= laplace_sum_tail_bound(k, b, alpha) + 3 * stderr


def test_rr_error_bound_closed_form():
    value = rr_error_bound(190, 2.0**40, 0.01, 1.0, small_class=True)
    assert value == pytest.approx(math.sqrt(6 * 190 * math.log(2.0**40 / 0.01)))
    assert value == pytest.approx(192.0, abs=0.1)


def test_rr_error_bound_scaling():
    assert rr_error_bound(50, 1000, 0.05, math.inf) == 0.0
    one = rr_error_bound(50, 1000, 0.05, 1.0)
    two = rr_error_bound(50, 1000, 0.05, 2.0)
    assert two == pytest.approx(one / 2)


def test_rr_error_bound_general_branch_is_larger():
    small = rr_error_bound(30, 1e12, 0.05, 1.0, small_class=True)
    general = rr_error_bound(30, 1e12, 0.05, 1.0)
    assert general == pytest.approx(small * math.sqrt(math.log(30 / 0.05)))


def test_compose_budget_examples():
    report = compose_budget(100, 0.01, math.exp(-1))
    assert report.epsilon == pytest.approx(0.2 + 2 * math.expm1(0.01))
    assert report.epsilon == pytest.approx(0.2201, abs=1e-4)
    assert compose_budget(0, 0.01, 0.1).epsilon == 0.0


def test_compose_budget_monotone_in_eps0():
    values = [compose_budget(50, eps0, 1e-6).epsilon for eps0 in (1.0, 0.1, 0.01, 0.001)]
    assert values == sorted(values, reverse=True)
    assert values[-1] < 0.1


def test_compose_budget_monotone_in_rounds():
    values = [compose_budget(B, 0.01, 1e-6).epsilon for B in (0, 1, 10, 100, 1000)]
    assert values == sorted(values)
    assert len(set(values)) == len(values)


def test_private_report_serialization():
    report = compose_budget(1, 0.1, 0.01)
    assert report.as_dict()["private"] is True
