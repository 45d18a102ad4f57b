import math

import pytest

from expansion.errors import InvalidArgument
from expansion.geometry import ball_volume
from expansion.params import ConvergenceParams, ModelParams, Truncation, excluded_volume


def test_finite_params_densities():
    params = ModelParams.finite(d=1, r=0.05, R=0.25, L=10.0, n_small=3, n_big=2)
    assert params.is_finite
    assert params.volume == pytest.approx(10.0)
    assert params.small_density == pytest.approx(0.3)
    assert params.big_density == pytest.approx(0.2)
    assert params.metric.periodic


def test_limit_params_have_infinite_volume():
    params = ModelParams.limit(d=3, r=0.1, R=1.0, rho_small=0.2, rho_big=0.01)
    assert not params.is_finite
    assert math.isinf(params.volume)
    assert params.small_density == 0.2
    assert params.big_density == 0.01


def test_available_small_density_divides_by_free_fraction():
    params = ModelParams.limit(d=1, r=0.05, R=0.25, rho_small=0.1, rho_big=0.5)
    fraction = 0.5 * ball_volume(1, 0.3)
    assert params.excluded_fraction(0.3) == pytest.approx(fraction)
    assert params.available_small_density(0.3) == pytest.approx(0.1 / (1 - fraction))


def test_available_density_rejects_full_exclusion():
    params = ModelParams.limit(d=1, r=0.05, R=0.25, rho_small=0.1, rho_big=2.0)
    with pytest.raises(InvalidArgument):
        params.available_small_density(0.3)


@pytest.mark.parametrize(
    "kwargs",
    [
        {"d": 0, "r": 0.1, "R": 0.2},
        {"d": 1, "r": 0.3, "R": 0.2},
        {"d": 1, "r": 0.1, "R": 0.2, "L": 0.3},
        {"d": 1, "r": 0.1, "R": 0.2, "rho_small": -1.0},
    ],
)
def test_model_params_validation(kwargs):
    with pytest.raises(InvalidArgument):
        ModelParams(**kwargs)


def test_truncation_validation_and_caps():
    t = Truncation(order=2, l_max=2, k_max=1, cloud_max=0, big_order=1)
    assert t.caps() == {"order": 2, "l_max": 2, "k_max": 1, "cloud_max": 0, "big_order": 1}
    with pytest.raises(InvalidArgument):
        Truncation(big_order=3)
    with pytest.raises(InvalidArgument):
        Truncation(a_inf_variant="guess")
    with pytest.raises(InvalidArgument):
        Truncation(excluded_volume_reading="2rR")


def test_convergence_params_are_non_negative():
    with pytest.raises(InvalidArgument):
        ConvergenceParams(a=-0.1)


def test_excluded_volume_readings():
    species = ModelParams.limit(d=2, r=0.1, R=1.0, rho_small=0, rho_big=0).species
    assert excluded_volume(2, species, "2R") == pytest.approx(math.pi * 4.0)
    assert excluded_volume(2, species, "2r") == pytest.approx(math.pi * 0.04)
