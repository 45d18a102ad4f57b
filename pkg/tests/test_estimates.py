import math

import numpy as np
import pytest

from expansion.errors import InvalidArgument
from expansion.estimates import (
    CoefficientEstimate,
    RunningStats,
    sample_mean,
    shard_generators,
    sum_estimates,
    uniform_cube_sampler,
)


def test_independent_errors_add_in_quadrature():
    total = CoefficientEstimate(1.0, 0.3, 100) + CoefficientEstimate(2.0, 0.4, 50)
    assert total.value == pytest.approx(3.0)
    assert total.std_error == pytest.approx(0.5)
    assert total.samples == 150


def test_scaled_uses_absolute_factor_for_error():
    scaled = CoefficientEstimate(2.0, 0.1).scaled(-3.0)
    assert scaled.value == pytest.approx(-6.0)
    assert scaled.std_error == pytest.approx(0.3)


def test_truncation_merge_keeps_the_larger_cap():
    left = CoefficientEstimate.exact(1.0, order=2, variant="printed")
    right = CoefficientEstimate.exact(1.0, order=3)
    assert (left + right).truncation == {"order": 3, "variant": "printed"}
    assert sum_estimates([left, right]).value == pytest.approx(2.0)


def test_within_has_a_floor_for_exact_values():
    assert CoefficientEstimate.exact(0.5).within(0.5)
    assert not CoefficientEstimate.exact(0.5).within(0.5001)
    assert CoefficientEstimate(0.5, 0.01).within(0.52)


def test_running_stats_merge_matches_numpy():
    rng = np.random.default_rng(7)
    values = rng.normal(size=1001)
    stats = RunningStats()
    for chunk in np.array_split(values, 7):
        stats.push_batch(chunk)
    assert stats.count == 1001
    assert stats.mean == pytest.approx(values.mean())
    assert stats.variance == pytest.approx(values.var(ddof=1))


def test_sample_mean_depends_on_seed_and_shards_not_workers():
    sampler = uniform_cube_sampler(1.0, (2,))

    def integrand(points):
        return (np.linalg.norm(points, axis=-1) < 1.0).astype(float)

    serial = sample_mean(integrand, sampler, 40_000, seed=3, shards=4, workers=1, volume=4.0)
    threaded = sample_mean(integrand, sampler, 40_000, seed=3, shards=4, workers=4, volume=4.0)
    assert serial == threaded
    assert serial.samples == 40_000
    assert serial.within(math.pi, sigmas=4.0)


def test_sample_mean_rejects_empty_budget():
    with pytest.raises(InvalidArgument):
        sample_mean(lambda x: x, uniform_cube_sampler(1.0, (1,)), 0, seed=1)


def test_shard_generators_are_independent_streams():
    first, second = shard_generators(11, 2)
    assert first.uniform() != second.uniform()
    with pytest.raises(InvalidArgument):
        shard_generators(11, 0)
