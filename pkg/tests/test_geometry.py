import math

import numpy as np
import pytest

from expansion.errors import InadmissibleConfiguration, InvalidArgument
from expansion.geometry import (
    BoxMetric,
    SphereSpecies,
    ball_volume,
    check_admissible,
    free_volume,
    free_volume_1d,
    free_volume_bounds,
    mayer,
    shell_volume,
)

SPECIES = SphereSpecies(r=0.1, R=0.5)


def test_ball_volume_low_dimensions():
    assert ball_volume(1, 0.3) == pytest.approx(0.6)
    assert ball_volume(2, 2) == pytest.approx(4 * math.pi)
    assert ball_volume(3, 1) == pytest.approx(4.18879, rel=1e-5)


def test_ball_volume_is_homogeneous_and_increasing():
    assert ball_volume(3, 2.0) == pytest.approx(8 * ball_volume(3, 1.0))
    assert ball_volume(4, 1.1) > ball_volume(4, 1.0)


def test_ball_volume_rejects_bad_arguments():
    with pytest.raises(InvalidArgument):
        ball_volume(0, 1.0)
    with pytest.raises(InvalidArgument):
        ball_volume(2, -0.1)


def test_shell_volume():
    assert shell_volume(3, 1, 0.1) == pytest.approx(2.52166, rel=1e-5)
    assert shell_volume(1, 1, 0.5) == pytest.approx(2.0)
    assert shell_volume(2, 0.7, 0.7) == pytest.approx(ball_volume(2, 1.4))
    with pytest.raises(InvalidArgument):
        shell_volume(3, 0.1, 0.2)


@pytest.mark.parametrize("r, R", [(0.5, 0.5), (0.6, 0.5), (0.0, 0.5)])
def test_species_needs_small_radius_below_big(r, R):
    with pytest.raises(InvalidArgument):
        SphereSpecies(r=r, R=R)


def test_minimum_image_displacement_range():
    metric = BoxMetric(d=2, L=4.0)
    rng = np.random.default_rng(3)
    x = rng.uniform(0, 4, size=(500, 2))
    y = rng.uniform(0, 4, size=(500, 2))
    diff = metric.displacement(x, y)
    assert np.all(diff > -2.0) and np.all(diff <= 2.0)
    assert np.allclose(metric.distance(x, y), metric.distance(y, x))


def test_periodic_box_needs_finite_side():
    with pytest.raises(InvalidArgument):
        BoxMetric(d=1, L=math.inf, periodic=True)


def test_mayer_values_and_open_boundary():
    metric = BoxMetric(d=3, L=10.0)
    p = np.array([1.0, 1.0, 1.0])
    assert mayer("ll", p, p, metric, SPECIES) == -1
    assert mayer("ss", np.zeros(3), np.array([0.2, 0.0, 0.0]), metric, SPECIES) == 0
    assert mayer("ls", np.zeros(3), np.array([0.55, 0.0, 0.0]), metric, SPECIES) == -1


def test_mayer_wraps_around_the_box():
    metric = BoxMetric(d=1, L=10.0)
    assert mayer("ss", [0.05], [9.95], metric, SPECIES) == -1
    assert mayer("ss", [0.05], [9.95], BoxMetric.flat(1), SPECIES) == 0


def test_mayer_is_symmetric():
    metric = BoxMetric(d=2, L=3.0)
    rng = np.random.default_rng(7)
    for _ in range(50):
        x, y = rng.uniform(0, 3, size=(2, 2))
        for kind in ("ll", "ss", "ls"):
            assert mayer(kind, x, y, metric, SPECIES) == mayer(kind, y, x, metric, SPECIES)


def test_check_admissible_rejects_overlapping_bigs():
    metric = BoxMetric(d=2, L=5.0)
    check_admissible([[0.0, 0.0], [1.5, 0.0]], metric, SPECIES)
    with pytest.raises(InadmissibleConfiguration):
        check_admissible([[0.0, 0.0], [0.9, 0.0]], metric, SPECIES)


def test_free_volume_without_bigs_is_exact():
    metric = BoxMetric(d=2, L=5.0)
    estimate = free_volume([], metric, SPECIES, samples=1000, seed=1)
    assert estimate.value == 25.0
    assert estimate.std_error == 0.0


def test_free_volume_single_ball_subtraction():
    metric = BoxMetric(d=2, L=5.0)
    estimate = free_volume([[2.5, 2.5]], metric, SPECIES, samples=200_000, seed=11)
    assert estimate.within(25.0 - ball_volume(2, 0.6), sigmas=3.0)


def test_free_volume_respects_configuration_bounds():
    metric = BoxMetric(d=2, L=3.0)
    centers = [[0.5, 0.5], [1.5, 0.5], [0.9, 1.6]]
    estimate = free_volume(centers, metric, SPECIES, samples=200_000, seed=5, shards=4)
    lower, upper = free_volume_bounds(3, metric, SPECIES)
    slack = 3 * estimate.std_error
    assert lower - slack <= estimate.value <= upper + slack


def test_free_volume_independent_of_worker_count():
    metric = BoxMetric(d=2, L=3.0)
    one = free_volume([[1.0, 1.0]], metric, SPECIES, samples=20_000, seed=9, shards=4, workers=1)
    many = free_volume([[1.0, 1.0]], metric, SPECIES, samples=20_000, seed=9, shards=4, workers=3)
    assert one == many


def test_free_volume_1d_exact_and_within_bounds():
    L, exclusion = 10.0, 0.6
    assert free_volume_1d([], L, exclusion) == L
    assert free_volume_1d([3.0], L, exclusion) == pytest.approx(L - 1.2)
    # overlapping exclusion zones and an arc wrapping past zero
    assert free_volume_1d([0.2, 1.0], L, exclusion) == pytest.approx(L - 2.0)
    metric = BoxMetric(d=1, L=L)
    lower, upper = free_volume_bounds(2, metric, SPECIES)
    assert lower <= free_volume_1d([0.2, 1.0], L, exclusion) <= upper
