import math

import pytest

from expansion.errors import InvalidArgument, ResourceLimit
from expansion.oracle import (
    TinyInstance,
    brute_Z,
    brute_Z_empty,
    brute_Z_int,
    brute_Z_p,
    circle_rod_volume,
    log_z_hat,
    sandwich_test,
    segment_rod_volume,
    spanning_tree_count,
    tree_graph_check,
)
from expansion.params import ConvergenceParams, Truncation

SANDWICH_CP = ConvergenceParams(a=0.2, b=0.2, c=0.5)
SANDWICH_TRUNCATION = Truncation(
    order=2, cloud_max=0, big_order=1, samples=50_000, shards=2, a_inf_variant="restricted",
    excluded_volume_reading="2r",
)


def test_rod_volumes():
    assert circle_rod_volume(10.0, 0, 0.1) == 1.0
    assert circle_rod_volume(10.0, 2, 0.1) == pytest.approx(10.0 * 9.8)
    assert segment_rod_volume([5.0], 2, 0.1) == pytest.approx(4.9**2)
    # one rod on either of two arcs
    assert segment_rod_volume([2.0, 3.0], 1, 0.1) == pytest.approx(5.0)


def test_empty_partition_function_on_circle():
    inst = TinyInstance(d=1, L=10.0, r=0.05, R=0.25, n_small=2, n_big=0)
    assert brute_Z_empty(inst).value == pytest.approx(0.98)
    assert brute_Z(inst).value == pytest.approx(0.98 / 2)


def test_one_big_partition_function():
    inst = TinyInstance(d=1, L=10.0, r=0.05, R=0.25, n_small=2, n_big=1)
    assert brute_Z_int(inst).value == pytest.approx(9.3**2 / 100)
    assert brute_Z_p(inst, [3.0]).value == pytest.approx(brute_Z_int(inst).value)
    assert log_z_hat(inst).value == pytest.approx(math.log(0.8649 / 0.98) / 10.0)


def test_two_bigs_without_smalls():
    inst = TinyInstance(d=1, L=10.0, r=0.05, R=0.25, n_small=0, n_big=2)
    assert brute_Z_int(inst).value == pytest.approx(0.9, abs=1e-8)


def test_two_dimensional_bigs_by_monte_carlo():
    inst = TinyInstance(d=2, L=3.0, r=0.1, R=0.3, n_small=0, n_big=2, samples=100_000, seed=4)
    value = brute_Z_int(inst)
    assert abs(value.value - (1 - math.pi * 0.6**2 / 9.0)) <= 4 * value.error


def test_tiny_instance_limits():
    with pytest.raises(ResourceLimit):
        TinyInstance(d=1, L=10.0, r=0.05, R=0.25, n_small=5, n_big=0)
    with pytest.raises(InvalidArgument):
        TinyInstance(d=3, L=10.0, r=0.05, R=0.25, n_small=1, n_big=0)
    with pytest.raises(InvalidArgument):
        TinyInstance(d=1, L=1.0, r=0.05, R=0.25, n_small=2, n_big=2)


@pytest.mark.parametrize(
    "n_big, L",
    [(0, 10.0), (1, 20.0), (2, 20.0)],
)
def test_sandwich_holds_on_tiny_instances(n_big, L):
    inst = TinyInstance(d=1, L=L, r=0.02, R=0.25, n_small=2, n_big=n_big)
    report = sandwich_test(inst, SANDWICH_TRUNCATION, seed=11, cp=SANDWICH_CP, sigmas=4.0)
    assert not report.skipped, report.reason
    assert report.holds, report.to_dict()
    assert report.lower <= report.upper


def test_sandwich_skips_outside_domain():
    inst = TinyInstance(d=1, L=2.0, r=0.05, R=0.25, n_small=4, n_big=1)
    report = sandwich_test(inst, SANDWICH_TRUNCATION, seed=11, cp=ConvergenceParams())
    assert report.skipped
    assert not report.holds
    assert report.margins


def test_spanning_tree_counts():
    assert spanning_tree_count(3, 0b111) == 3
    assert spanning_tree_count(4, 0b111111) == 16
    assert spanning_tree_count(3, 0b001) == 0


@pytest.mark.parametrize("n", [2, 3, 4, 5])
def test_tree_graph_bound_holds(n):
    report = tree_graph_check(n, 10_000, seed=n)
    assert report.violations == 0
    assert report.max_ratio <= 1.0


def test_tree_graph_check_cap():
    with pytest.raises(ResourceLimit):
        tree_graph_check(7, 10, seed=0)


def test_canonical_remainder_of_two_bigs():
    inst = TinyInstance(d=1, L=20.0, r=0.02, R=0.25, n_small=2, n_big=2)
    report = sandwich_test(inst, SANDWICH_TRUNCATION, seed=11, cp=SANDWICH_CP, sigmas=4.0)
    # two rods of length 2R alone: log(1 - 2R * 2 / L) / L against the first-order -2R * 2 / L^2
    assert report.remainder == pytest.approx(abs(math.log(0.95) / 20.0 + 1 / 400), rel=1e-3)
