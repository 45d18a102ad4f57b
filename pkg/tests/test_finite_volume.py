import numpy as np
import pytest

from expansion.errors import InvalidArgument, ResourceLimit
from expansion.estimates import CoefficientEstimate
from expansion.finite_volume import (
    A_lambda,
    B1_star_lambda,
    B_empty_lambda,
    beta_lambda,
    periodic_cluster_integral,
)
from expansion.geometry import BoxMetric, SphereSpecies
from expansion.integrals import A_inf, B1_inf, beta_n_exact_1d

R_SMALL = 0.05
A = 2 * R_SMALL
SPECIES = SphereSpecies(r=R_SMALL, R=0.25)


def _box(L):
    return BoxMetric(d=1, L=L, periodic=True)


def _exact_clusters():
    # hard rods: c_2 = -2a, c_3 = 9a^2
    return {
        1: CoefficientEstimate.exact(1.0),
        2: CoefficientEstimate.exact(-2 * A),
        3: CoefficientEstimate.exact(9 * A**2),
    }


def test_first_order_box_coefficient_series_in_one_over_volume():
    c, V = -2 * A, 10.0
    estimate = B_empty_lambda(1, _box(V), R_SMALL, 10, 0, cluster_integrals=_exact_clusters())
    assert estimate.value == pytest.approx(c - c**2 / (2 * V) + c**3 / (3 * V**2))


def test_tree_like_covers_give_the_limit_coefficient():
    estimate = B_empty_lambda(2, _box(10.0), R_SMALL, 10, 0, cluster_integrals=_exact_clusters(), excess=0)
    assert estimate.value == pytest.approx(beta_n_exact_1d(2, A))


def test_box_coefficient_converges_like_one_over_volume():
    limit = beta_n_exact_1d(1, A)
    gaps = [
        abs(B_empty_lambda(1, _box(L), R_SMALL, 10, 0, cluster_integrals=_exact_clusters()).value - limit)
        for L in (10.0, 100.0)
    ]
    assert gaps[1] == pytest.approx(gaps[0] / 10, rel=0.05)


def test_box_coefficient_caps():
    with pytest.raises(ResourceLimit):
        B_empty_lambda(4, _box(10.0), R_SMALL, 10, 0)
    with pytest.raises(InvalidArgument):
        B_empty_lambda(1, BoxMetric.flat(1), R_SMALL, 10, 0)


def test_A_lambda_zero_without_bigs():
    assert A_lambda(1, 0.0, _box(10.0), R_SMALL, 10, 0).value == 0.0
    with pytest.raises(InvalidArgument):
        A_lambda(1, 1.2, _box(10.0), R_SMALL, 10, 0)


def test_A_lambda_first_order():
    rho = 0.06
    estimate = A_lambda(1, rho, _box(10.0), R_SMALL, 10, 0, cluster_integrals=_exact_clusters(), excess=0)
    assert estimate.value == pytest.approx(-2 * A * ((1 - rho) ** -2 - 1))


def test_periodic_pair_integral_is_exact():
    assert periodic_cluster_integral(2, _box(10.0), R_SMALL, 10, 0).value == pytest.approx(-2 * A)
    assert periodic_cluster_integral(1, _box(10.0), R_SMALL, 10, 0).value == 1.0


def test_beta_lambda_matches_limit_in_a_large_box():
    estimate = beta_lambda(1, _box(10.0), R_SMALL, 50_000, seed=2)
    assert estimate.within(beta_n_exact_1d(1, A), sigmas=4.0)


def test_B1_box_prefactor_is_the_free_volume_ratio():
    box = _box(10.0)
    clusters = _exact_clusters()
    alone = B1_star_lambda(1, box, SPECIES, 0, 20_000, seed=6, cluster_integrals=clusters)
    with_big = B1_star_lambda(1, box, SPECIES, 1, 20_000, seed=6, cluster_integrals=clusters)
    free = 10.0 - 2 * (SPECIES.R + SPECIES.r)
    assert with_big.value == pytest.approx(alone.value * (10.0 / free) ** 2)

    lower = B1_star_lambda(1, box, SPECIES, 1, 20_000, seed=6, bound="lower", cluster_integrals=clusters)
    # d=1 bracket: 4a(R+r) + a^2 > 0
    assert with_big.value > lower.value > 0


def test_B1_box_rejects_bad_bound_and_full_exclusion():
    with pytest.raises(InvalidArgument):
        B1_star_lambda(1, _box(10.0), SPECIES, 1, 10, 0, bound="both")
    with pytest.raises(InvalidArgument):
        B1_star_lambda(1, _box(1.0), SPECIES, 2, 10, 0)


def test_one_big_box_coefficient_gap_scales_as_one_over_volume():
    # same seed for the graph term: the gap is the free-volume ratio plus B_empty - beta
    beta = CoefficientEstimate.exact(beta_n_exact_1d(1, A))
    limit = B1_inf(1, 1, R_SMALL, SPECIES.R, 0.0, 100_000, seed=21, beta=beta)
    sizes = np.array([10.0, 20.0, 40.0])
    gaps = [abs(B1_star_lambda(1, _box(L), SPECIES, 1, 100_000, seed=21).value - limit.value) for L in sizes]
    slope = np.polyfit(np.log(sizes), np.log(gaps), 1)[0]
    assert slope == pytest.approx(-1.0, abs=0.3)


@pytest.mark.parametrize("variant", ["printed", "restricted"])
def test_A_lambda_tends_to_the_limit_of_its_variant(variant):
    rho = 0.06
    limit = A_inf(2, rho, 1, R_SMALL, 10, 0, variant=variant, cluster_integrals=_exact_clusters())
    gaps = [
        abs(A_lambda(2, rho, _box(L), R_SMALL, 10, 0, cluster_integrals=_exact_clusters(), variant=variant).value - limit.value)
        for L in (10.0, 100.0, 1000.0)
    ]
    assert gaps[2] < gaps[1] < gaps[0]
    assert gaps[2] < 1e-2 * abs(limit.value)


def test_A_lambda_variants_differ_at_second_order():
    rho = 0.06
    box = _box(1000.0)
    printed = A_lambda(2, rho, box, R_SMALL, 10, 0, cluster_integrals=_exact_clusters(), excess=0)
    restricted = A_lambda(2, rho, box, R_SMALL, 10, 0, cluster_integrals=_exact_clusters(), excess=0, variant="restricted")
    b3, b4 = (1 - rho) ** -3 - 1, (1 - rho) ** -4 - 1
    assert printed.value == pytest.approx(9 * A**2 * (b3 - 3 * b4) / 2)
    assert restricted.value == pytest.approx((9 * A**2 * b3 - 3 * (2 * A) ** 2 * b4) / 2)
    with pytest.raises(InvalidArgument):
        A_lambda(2, rho, box, R_SMALL, 10, 0, variant="other")
