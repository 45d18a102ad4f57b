import math

import pytest
from scipy.integrate import dblquad, quad

from expansion.errors import InvalidArgument, ResourceLimit
from expansion.estimates import CoefficientEstimate, sum_estimates
from expansion.integrals import (
    A_inf,
    B1_inf,
    B_star,
    C_factor,
    C_factor_terms,
    beta_n,
    beta_n_exact_1d,
    child_seed,
    connected_cluster_integral,
    cover_sum,
    one_big_graph_integral,
    one_big_term,
    single_white_slice,
)

R_SMALL = 0.05
R_BIG = 0.25
A = 2 * R_SMALL
SAMPLES = 100_000


def _agree(left, right, sigmas=4.0):
    return abs(left.value - right.value) <= sigmas * math.hypot(left.std_error, right.std_error) + 1e-9


def test_beta_exact_hard_rods():
    assert beta_n_exact_1d(1, 0.1) == pytest.approx(-0.2)
    assert beta_n_exact_1d(2, 0.1) == pytest.approx(-0.015)
    with pytest.raises(InvalidArgument):
        beta_n_exact_1d(0, 0.1)


@pytest.mark.parametrize("n", [1, 2, 3])
def test_beta_monte_carlo_matches_hard_rods(n):
    estimate = beta_n(n, 1, R_SMALL, SAMPLES, seed=child_seed(1, "beta", n), shards=2)
    assert estimate.within(beta_n_exact_1d(n, A), sigmas=4.0)


def test_beta_order_cap():
    with pytest.raises(ResourceLimit):
        beta_n(5, 1, R_SMALL, 10, seed=0)


def test_connected_cluster_integrals_in_one_dimension():
    assert connected_cluster_integral(1, 1, R_SMALL, 10, 0).value == 1.0
    assert connected_cluster_integral(2, 1, R_SMALL, 10, 0).value == pytest.approx(-2 * A)
    # three rods: three paths at 4a^2 each, minus the hexagon 3a^2
    c3 = connected_cluster_integral(3, 1, R_SMALL, SAMPLES, seed=4, shards=2)
    assert c3.within(9 * A**2, sigmas=4.0)


def test_cover_sums_small_k():
    assert [(tuple(map(sorted, c)), phi) for c, phi in cover_sum(1).collections] == [(([1, 2],), 1)]
    second = cover_sum(2)
    assert len(second) == 4
    assert sorted(phi for _, phi in second.collections) == [-1, -1, -1, 1]
    with pytest.raises(ResourceLimit):
        cover_sum(6)


def test_unordered_covers_resum_to_the_irreducible_coefficient():
    clusters = {2: -2 * A, 3: 9 * A**2}
    total = sum(phi * math.prod(clusters[len(v)] for v in collection) for collection, phi in cover_sum(2).collections)
    # 9a^2 - 3 (2a)^2 over 2!
    assert total / 2 == pytest.approx(beta_n_exact_1d(2, A))


def test_A_inf_vanishes_without_bigs_and_validates_density():
    assert A_inf(1, 0.0, 1, R_SMALL, 10, 0).value == 0.0
    with pytest.raises(InvalidArgument):
        A_inf(1, 1.0, 1, R_SMALL, 10, 0)


def test_A_inf_first_order_closed_form():
    clusters = {1: CoefficientEstimate.exact(1.0), 2: CoefficientEstimate.exact(-2 * A)}
    rho = 0.1
    estimate = A_inf(1, rho, 1, R_SMALL, 10, 0, cluster_integrals=clusters)
    assert estimate.value == pytest.approx(-2 * A * ((1 - rho) ** -2 - 1))
    restricted = A_inf(1, rho, 1, R_SMALL, 10, 0, variant="restricted", cluster_integrals=clusters)
    assert restricted.value == pytest.approx(estimate.value)


def test_B1_prefactor_separates_the_bounds():
    beta = CoefficientEstimate.exact(beta_n_exact_1d(1, A))
    upper = B1_inf(1, 1, R_SMALL, R_BIG, 0.5, 20_000, seed=3, bound="upper", beta=beta)
    lower = B1_inf(1, 1, R_SMALL, R_BIG, 0.5, 20_000, seed=3, bound="lower", beta=beta)
    ratio = ((1 - 0.5 * 2 * R_BIG) / (1 - 0.5 * 2 * (R_BIG + R_SMALL))) ** 2
    assert upper.value == pytest.approx(lower.value * ratio)
    assert upper.value > lower.value > 0


def test_B1_rejects_unknown_bound_and_high_order():
    with pytest.raises(InvalidArgument):
        B1_inf(1, 1, R_SMALL, R_BIG, 0.1, 10, 0, bound="middle")
    with pytest.raises(ResourceLimit):
        B1_inf(4, 1, R_SMALL, R_BIG, 0.1, 10, 0)


def test_one_big_slices_have_closed_forms():
    shell = 2 * (R_BIG + R_SMALL)
    assert one_big_term(1, 0, 1, R_SMALL, R_BIG, 10, 0).value == pytest.approx(-shell)
    first = one_big_term(1, 1, 1, R_SMALL, R_BIG, SAMPLES, seed=8, shards=2)
    assert first.within(-beta_n_exact_1d(1, A) * shell, sigmas=4.0)


def test_one_big_triangle_matches_quadrature():
    h = R_BIG + R_SMALL
    # -1 on the strip |q1 - q2| < a inside the square |q1|, |q2| < h
    quadrature, _ = dblquad(lambda y, x: -1.0, -h, h, lambda x: max(-h, x - A), lambda x: min(h, x + A))
    assert quadrature == pytest.approx(-(4 * A * h - A**2))
    triangle = one_big_graph_integral(1, 1, R_SMALL, R_BIG, SAMPLES, seed=14, shards=2)
    assert triangle.within(quadrature, sigmas=4.0)


def test_B1_first_order_closed_form():
    h = R_BIG + R_SMALL
    beta = CoefficientEstimate.exact(beta_n_exact_1d(1, A))
    estimate = B1_inf(1, 1, R_SMALL, R_BIG, 0.0, SAMPLES, seed=14, beta=beta, shards=2)
    # -2 beta_1 (2h) + triangle
    assert estimate.within(4 * A * h + A**2, sigmas=4.0)


@pytest.mark.parametrize("key", [(1, 0), (1, 1), (2, 0)])
def test_single_big_factor_matches_one_big_slices(key):
    l, k = key
    terms = C_factor_terms([[0.0]], 1, R_SMALL, R_BIG, 2, 1, SAMPLES, seed=9, shards=2)
    slice_ = one_big_term(l, k, 1, R_SMALL, R_BIG, SAMPLES, seed=10, shards=2)
    assert _agree(terms[key], slice_)


@pytest.mark.parametrize("s", [1, 2])
def test_single_big_factor_matches_B1_term_by_term(s):
    beta = CoefficientEstimate.exact(beta_n_exact_1d(s, A))
    b1 = B1_inf(s, 1, R_SMALL, R_BIG, 0.0, SAMPLES, seed=13, beta=beta, shards=2)
    terms = C_factor_terms([[0.0]], 1, R_SMALL, R_BIG, s + 1, s, SAMPLES, seed=9, shards=2)
    slices = sum_estimates([term for (l, k), term in terms.items() if l + k == s + 1])
    assert _agree(b1.scaled(1 / (s + 1)), slices)


def test_far_apart_bigs_have_no_shared_whites():
    terms = C_factor_terms([[0.0], [5.0]], 1, R_SMALL, R_BIG, 2, 1, 1_000, seed=2)
    assert all(term.value == 0.0 and term.std_error == 0.0 for term in terms.values())


def test_single_white_slice_is_the_lens():
    lens = single_white_slice([[0.0]], 0, 1, R_SMALL, R_BIG, SAMPLES, seed=12)
    assert lens.within(-2 * (R_BIG + R_SMALL), sigmas=4.0)


@pytest.mark.parametrize("k", [0, 1])
def test_single_white_slice_matches_two_big_factor(k):
    bigs = [[0.0], [0.3]]
    terms = C_factor_terms(bigs, 1, R_SMALL, R_BIG, 1, 1, SAMPLES, seed=15, shards=2)
    slice_ = single_white_slice(bigs, k, 1, R_SMALL, R_BIG, SAMPLES, seed=16)
    assert _agree(terms[(1, k)], slice_)


def test_C_factor_caps_and_zero_density():
    assert C_factor([[0.0]], 0.0, 0.1, 1, R_SMALL, R_BIG, 2, 1, 10, 0).value == 0.0
    with pytest.raises(ResourceLimit):
        C_factor_terms([[0.0]], 1, R_SMALL, R_BIG, 4, 2, 10, 0)
    with pytest.raises(ResourceLimit):
        C_factor_terms([[0.0], [1.0], [2.0], [3.0]], 1, R_SMALL, R_BIG, 1, 0, 10, 0)
    with pytest.raises(InvalidArgument):
        C_factor_terms([], 1, R_SMALL, R_BIG, 1, 0, 10, 0)


def test_B_star_without_clouds_is_the_big_irreducible_coefficient():
    estimate = B_star(1, 0.0, 0.1, 1, R_SMALL, R_BIG, 2, (2, 1), SAMPLES, seed=5)
    assert estimate.within(beta_n_exact_1d(1, 2 * R_BIG), sigmas=4.0)
    assert estimate.truncation["cloud_max"] == 2
    with pytest.raises(ResourceLimit):
        B_star(3, 0.1, 0.1, 1, R_SMALL, R_BIG, 1, (1, 0), 10, 0)


def test_B_star_single_cloud_matches_quadrature():
    rho_r, rho_R = 0.5, 0.1
    h = R_BIG + R_SMALL
    x = rho_r / (1 - rho_R * 2 * R_BIG)

    def lens(p):
        lo, hi = max(-h, p - h), min(h, p + h)
        return quad(lambda q: 1.0, lo, hi)[0] if hi > lo else 0.0

    # one cloud on both bigs, bigs apart: x lens - 2a x^2 lens for cutoffs (1, 1)
    clouds, _ = quad(lens, 2 * R_BIG, 2 * h)
    expected = -4 * R_BIG + 2 * clouds * x * (1 - 2 * A * x)
    estimate = B_star(1, rho_r, rho_R, 1, R_SMALL, R_BIG, 1, (1, 1), 4_000, seed=17, inner_samples=2_000)
    assert estimate.within(expected, sigmas=4.0)


def test_child_seed_is_deterministic_and_keyed():
    assert child_seed(7, "beta", 1) == child_seed(7, "beta", 1)
    assert child_seed(7, "beta", 1) != child_seed(7, "beta", 2)
    assert child_seed(7, "beta", 1) != child_seed(8, "beta", 1)
