"""
Assembly of the free-energy bounds.

The free energy per unit volume is split as

    f = ideal - F0 - (W1 + A + F1 + F2)

where F0 is the pure small-sphere series and the bracket is (1/|Λ|) log Ẑ,
the effective big-sphere part. W1 is the available-volume term, A the
adjustment series, F1 the one-big series and F2 the many-big series. The two
bounds differ only in the radius used for the volume the bigs take away:
R + r gives the upper bound on f, R the lower one.

Every report carries the truncation caps it was computed at; assembling a
report from terms at different caps is an error.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Any, Dict, List, Mapping, Sequence, Tuple

import numpy as np
from scipy.special import gammaln
from scipy.stats import linregress

from expansion.errors import InvalidArgument, NotInDomain, ResourceLimit
from expansion.estimates import CoefficientEstimate, sum_estimates
from expansion.finite_volume import A_lambda, B1_star_lambda, B_empty_lambda, box_cluster_integrals
from expansion.geometry import ball_volume, shell_volume
from expansion.integrals import (
    A_INF_MAX_K,
    B1_MAX_ORDER,
    A_inf,
    B1_inf,
    B_star,
    beta_n,
    child_seed,
    cluster_integral_table,
)
from expansion.params import ConvergenceParams, ModelParams, Truncation, excluded_volume
from expansion.polymers import KPReport, kp_check

logger = logging.getLogger(__name__)

BOUND_KINDS = ("upper", "lower")
MODES = ("limit", "finite")


@dataclass(frozen=True)
class FreeEnergyReport:
    ideal: float
    F0: CoefficientEstimate
    W1: CoefficientEstimate
    A_term: CoefficientEstimate
    F1: CoefficientEstimate
    F2: CoefficientEstimate
    bound_kind: str
    mode: str = "limit"
    truncation: Dict[str, Any] = field(default_factory=dict)

    @property
    def log_z_hat(self) -> CoefficientEstimate:
        """(1/|Λ|) log Ẑ, the big-sphere part of the bound."""
        return sum_estimates([self.W1, self.A_term, self.F1, self.F2])

    @property
    def value(self) -> float:
        return self.ideal - self.F0.value - self.log_z_hat.value

    @property
    def std_error(self) -> float:
        return math.hypot(self.F0.std_error, self.log_z_hat.std_error)

    def summary(self) -> str:
        return (
            f"{self.bound_kind} bound ({self.mode}): f = {self.value:.6g} +- {self.std_error:.2g} "
            f"[ideal {self.ideal:.6g}, F0 {self.F0.value:.6g}, W1 {self.W1.value:.6g}, "
            f"A {self.A_term.value:.6g}, F1 {self.F1.value:.6g}, F2 {self.F2.value:.6g}]"
        )

    def to_dict(self) -> Dict[str, Any]:
        return {
            "bound_kind": self.bound_kind,
            "mode": self.mode,
            "value": self.value,
            "std_error": self.std_error,
            "ideal": self.ideal,
            "F0": self.F0.to_dict(),
            "W1": self.W1.to_dict(),
            "A_term": self.A_term.to_dict(),
            "F1": self.F1.to_dict(),
            "F2": self.F2.to_dict(),
            "log_z_hat": self.log_z_hat.value,
            "truncation": dict(sorted(self.truncation.items())),
        }


@dataclass(frozen=True)
class ConvergenceReport:
    holds: bool
    margins: Dict[str, float]
    kp: KPReport

    def failed(self) -> List[str]:
        return [name for name, margin in self.margins.items() if margin < 0]

    def to_dict(self) -> Dict[str, Any]:
        return {"holds": self.holds, "margins": dict(self.margins), "kp": self.kp.to_dict()}


@dataclass(frozen=True)
class DensityCurvePoint:
    R: float
    bound: float
    log_bound: float
    effective_rho_small: float
    shell: float

    def to_dict(self) -> Dict[str, float]:
        return {
            "R": self.R,
            "bound": self.bound,
            "log_bound": self.log_bound,
            "effective_rho_small": self.effective_rho_small,
            "shell": self.shell,
        }


def falling_factorial_weight(V: float, N: int, n: int) -> float:
    """(N-1)(N-2)...(N-n)/V^n for n < N, else 0."""
    if V <= 0:
        raise InvalidArgument(f"volume must be positive, got {V}")
    if N < 0 or n < 1:
        raise InvalidArgument(f"need N >= 0 and n >= 1, got N={N}, n={n}")
    if n >= N:
        return 0.0
    return math.exp(gammaln(N) - gammaln(N - n) - n * math.log(V))


def F0(
    rho_r: float,
    order: int,
    coeffs: Mapping[int, CoefficientEstimate],
    excluded: float,
    cp: ConvergenceParams = ConvergenceParams(),
    allow_outside_domain: bool = False,
) -> CoefficientEstimate:
    """
    Pure small-sphere series sum_{n <= order} beta_n rho_r^(n+1)/(n+1).

    ``excluded`` is the excluded volume in the polymer convergence condition;
    the series is only trusted below rho* = c e^(-2(b+c)-1) / (2 |B_excl|).
    """
    if rho_r < 0:
        raise InvalidArgument(f"density must be non-negative, got {rho_r}")
    missing = [n for n in range(1, order + 1) if n not in coeffs]
    if missing:
        raise InvalidArgument(f"beta table lacks orders {missing} needed for order {order}")
    rho_star = cp.c * math.exp(-2 * (cp.b + cp.c) - 1) / (2 * excluded)
    if rho_r >= rho_star:
        message = f"rho_r = {rho_r:.4g} outside the small-sphere domain rho* = {rho_star:.4g}"
        if not allow_outside_domain:
            raise NotInDomain(message, {"rho_star": rho_star - rho_r})
        logger.warning("%s; evaluating anyway", message)
    if rho_r == 0:
        return CoefficientEstimate.exact(0.0, order=order)
    terms = [coeffs[n].scaled(rho_r ** (n + 1) / (n + 1)) for n in range(1, order + 1)]
    total = sum_estimates(terms)
    return CoefficientEstimate(total.value, total.std_error, total.samples, {"order": order})


def convergence_check(params: ModelParams, cp: ConvergenceParams, reading: str = "2R") -> ConvergenceReport:
    """
    Margins of the two big-sphere conditions and the polymer condition:

        c1: a - e^(b+c) |shell| x - e^a |B_2R| rho_R
        c2: b - e^a |shell| rho_R

    with x the small density over the volume left at radius R + r.
    """
    d, r, R = params.d, params.r, params.R
    shell = shell_volume(d, R, r)
    x = params.available_small_density(R + r)
    rho_R = params.big_density
    lhs1 = math.exp(cp.b + cp.c) * shell * x + math.exp(cp.a) * ball_volume(d, 2 * R) * rho_R
    lhs2 = math.exp(cp.a) * shell * rho_R
    kp = kp_check(params, cp, reading)
    margins = {"c1": cp.a - lhs1, "c2": cp.b - lhs2, "cond1": kp.margin}
    holds = margins["c1"] >= 0 and margins["c2"] >= 0 and kp.holds
    logger.debug("Convergence margins: %s", margins)
    return ConvergenceReport(holds=holds, margins=margins, kp=kp)


def assemble_report(
    ideal: float,
    terms: Mapping[str, CoefficientEstimate],
    bound_kind: str,
    mode: str,
    caps: Mapping[str, Any],
) -> FreeEnergyReport:
    """
    Join the four series terms into one report.

    Each term must carry the same values as ``caps`` for every cap key it
    records; a term computed at other cutoffs is rejected.
    """
    if bound_kind not in BOUND_KINDS:
        raise InvalidArgument(f"bound kind must be one of {BOUND_KINDS}, got {bound_kind!r}")
    if mode not in MODES:
        raise InvalidArgument(f"mode must be one of {MODES}, got {mode!r}")
    for name in ("F0", "W1", "A_term", "F1", "F2"):
        if name not in terms:
            raise InvalidArgument(f"missing series term {name}")
        recorded = terms[name].truncation
        clash = {key: recorded[key] for key in caps if key in recorded and recorded[key] != caps[key]}
        if clash:
            raise InvalidArgument(f"term {name} was computed at {clash}, report truncation is {dict(caps)}")
    tagged = {name: terms[name].with_truncation(**caps) for name in ("F0", "W1", "A_term", "F1", "F2")}
    return FreeEnergyReport(
        ideal=ideal,
        F0=tagged["F0"],
        W1=tagged["W1"],
        A_term=tagged["A_term"],
        F1=tagged["F1"],
        F2=tagged["F2"],
        bound_kind=bound_kind,
        mode=mode,
        truncation=dict(caps),
    )


def free_energy_bounds(
    params: ModelParams,
    cp: ConvergenceParams,
    truncation: Truncation,
    seed: int,
    allow_outside_domain: bool = False,
) -> Tuple[FreeEnergyReport, FreeEnergyReport]:
    """
    Lower and upper free-energy reports at matched seeds and truncation.

    Raises:
        NotInDomain: a convergence condition fails and no override is given.
        ResourceLimit: the series order exceeds the coefficient caps.
    """
    if truncation.order > B1_MAX_ORDER:
        raise ResourceLimit(f"series order {truncation.order} exceeds the one-big cap of {B1_MAX_ORDER}")
    check = convergence_check(params, cp, truncation.excluded_volume_reading)
    if not check.holds:
        message = f"convergence conditions fail: {', '.join(check.failed())}"
        if not allow_outside_domain:
            raise NotInDomain(message, check.margins)
        logger.warning("%s; evaluating anyway", message)

    caps = truncation.caps()
    if params.is_finite:
        shared = _finite_shared_terms(params, cp, truncation, seed, allow_outside_domain)
        ideal = _finite_ideal(params)
        mode = "finite"
    else:
        shared = _limit_shared_terms(params, cp, truncation, seed, allow_outside_domain)
        ideal = _limit_ideal(params)
        mode = "limit"

    reports = {}
    for bound in BOUND_KINDS:
        radius = params.R + params.r if bound == "upper" else params.R
        if params.is_finite:
            terms = _finite_bound_terms(params, truncation, seed, radius, bound, shared)
        else:
            terms = _limit_bound_terms(params, truncation, seed, radius, bound, shared)
        terms["F0"] = shared["F0"]
        terms["F2"] = shared["F2"]
        reports[bound] = assemble_report(ideal, terms, bound, mode, caps)
        logger.info("%s", reports[bound].summary())
    return reports["lower"], reports["upper"]


def admissible_density_curve(
    r: float,
    R_grid: Sequence[float],
    rho_r: float,
    alpha: float,
    b: float,
    c: float,
    d: int = 3,
) -> List[DensityCurvePoint]:
    """
    Largest rho_R |B_2R| allowed by the two big-sphere conditions when
    a = alpha |shell| rho~_r:

        e^-a min{(alpha - e^(b+c)) |shell| rho~_r, b |B_2R| / |shell|}

    rho~_r = rho_r / (1 - rho_R |B_{R+r}|) is updated once from the bound
    obtained at rho_R = 0. At rho_r = 0 only the second branch applies.
    Points are returned with the logarithm of the bound, which stays finite
    where the bound itself underflows.
    """
    if alpha <= math.exp(b + c):
        raise InvalidArgument(f"alpha must exceed e^(b+c) = {math.exp(b + c):.4g}, got {alpha}")
    if rho_r < 0:
        raise InvalidArgument(f"density must be non-negative, got {rho_r}")
    grid = [float(R) for R in R_grid]
    if any(R <= r for R in grid):
        raise InvalidArgument("every grid radius must exceed the small radius")
    if any(later <= earlier for earlier, later in zip(grid, grid[1:])):
        raise InvalidArgument("the radius grid must be increasing")

    points = []
    for R in grid:
        shell = shell_volume(d, R, r)
        big_ball = ball_volume(d, 2 * R)
        log_bound = _log_curve_bound(shell, big_ball, rho_r, alpha, b, c)
        # one fixed-point step for the effective density
        remaining = 1.0 - math.exp(log_bound) / big_ball * ball_volume(d, R + r)
        effective = rho_r / remaining if remaining > 0 else rho_r
        log_bound = _log_curve_bound(shell, big_ball, effective, alpha, b, c)
        points.append(
            DensityCurvePoint(
                R=R, bound=math.exp(log_bound), log_bound=log_bound, effective_rho_small=effective, shell=shell
            )
        )
    logger.info("Admissible density curve: %d radii, alpha=%g, rho_r=%g", len(points), alpha, rho_r)
    return points


def surface_decay_fit(points: Sequence[DensityCurvePoint], rho_r: float) -> Dict[str, float]:
    """Least-squares line of log bound against |shell| rho_r: slope, intercept and R^2."""
    if len(points) < 3:
        raise InvalidArgument("the fit needs at least three curve points")
    x = np.array([p.shell * rho_r for p in points])
    y = np.array([p.log_bound for p in points])
    fit = linregress(x, y)
    return {"slope": float(fit.slope), "intercept": float(fit.intercept), "r_squared": float(fit.rvalue**2)}


# ---------------------------------------------------------------------------
# Private helpers
# ---------------------------------------------------------------------------


def _log_curve_bound(shell: float, big_ball: float, rho: float, alpha: float, b: float, c: float) -> float:
    a = alpha * shell * rho
    b_branch = math.log(b * big_ball / shell) if b > 0 else -math.inf
    if rho == 0:
        return b_branch - a
    a_branch = math.log((alpha - math.exp(b + c)) * shell * rho)
    return min(a_branch, b_branch) - a


def _limit_ideal(params: ModelParams) -> float:
    return sum(rho * (math.log(rho) - 1) for rho in (params.rho_small, params.rho_big) if rho > 0)


def _finite_ideal(params: ModelParams) -> float:
    # -(1/|Λ|) log(|Λ|^N / N!) for each species
    V = params.volume
    total = 0.0
    for N in (params.n_small, params.n_big):
        total -= N * math.log(V) - gammaln(N + 1)
    return total / V


def _limit_shared_terms(
    params: ModelParams, cp: ConvergenceParams, truncation: Truncation, seed: int, allow_outside_domain: bool
) -> Dict[str, Any]:
    d, r = params.d, params.r
    t = truncation
    betas = {
        n: beta_n(n, d, r, t.samples, child_seed(seed, "beta", n), t.shards, t.workers) for n in range(1, t.order + 1)
    }
    excluded = excluded_volume(d, params.species, t.excluded_volume_reading)
    f0 = F0(params.rho_small, t.order, betas, excluded, cp, allow_outside_domain)
    clusters = cluster_integral_table(
        min(t.order, A_INF_MAX_K) + 1, d, r, t.samples, child_seed(seed, "clusters"), t.shards, t.workers
    )
    f2 = _big_series(params, params.rho_small, params.rho_big, truncation, seed, _limit_big_weight(params))
    return {"F0": f0, "betas": betas, "clusters": clusters, "F2": f2}


def _limit_bound_terms(
    params: ModelParams, truncation: Truncation, seed: int, radius: float, bound: str, shared: Dict[str, Any]
) -> Dict[str, CoefficientEstimate]:
    d, r, R = params.d, params.r, params.R
    t = truncation
    rho_r, rho_R = params.rho_small, params.rho_big
    fraction = params.excluded_fraction(radius)
    if fraction >= 1:
        raise InvalidArgument(f"big spheres exclude the whole volume at radius {radius}")
    w1 = CoefficientEstimate.exact(rho_r * math.log1p(-fraction))
    if rho_r == 0:
        zero = CoefficientEstimate.exact(0.0)
        return {"W1": w1, "A_term": zero, "F1": zero}

    a_terms = [
        A_inf(
            k, fraction, d, r, t.samples, child_seed(seed, "A", k), t.a_inf_variant,
            cluster_integrals=shared["clusters"],
        ).scaled(rho_r ** (k + 1) / (k + 1))
        for k in range(1, min(t.order, A_INF_MAX_K) + 1)
    ]
    f1_terms = []
    if rho_R > 0:
        for s in range(1, t.order + 1):
            coefficient = B1_inf(
                s, d, r, R, rho_R, t.samples, child_seed(seed, "B1", s), bound,
                beta=shared["betas"][s], shards=t.shards, workers=t.workers,
            )
            f1_terms.append(coefficient.scaled(rho_R * rho_r ** (s + 1) / (s + 1)))
    return {"W1": w1, "A_term": sum_estimates(a_terms), "F1": sum_estimates(f1_terms)}


def _finite_shared_terms(
    params: ModelParams, cp: ConvergenceParams, truncation: Truncation, seed: int, allow_outside_domain: bool
) -> Dict[str, Any]:
    t = truncation
    box = params.metric
    V, N_r = params.volume, params.n_small
    clusters = box_cluster_integrals(
        t.order + 1, box, params.r, t.samples, child_seed(seed, "box-clusters"), t.shards, t.workers
    )
    terms = []
    for k in range(1, t.order + 1):
        weight = falling_factorial_weight(V, N_r, k)
        if weight == 0:
            continue
        coefficient = B_empty_lambda(k, box, params.r, t.samples, seed, cluster_integrals=clusters)
        terms.append(coefficient.scaled(N_r / V * weight / (k + 1)))
    f0 = sum_estimates(terms)
    rho_r, rho_R = params.small_density, params.big_density
    f2 = _big_series(params, rho_r, rho_R, truncation, seed, _finite_big_weight(params))
    return {"F0": f0, "clusters": clusters, "F2": f2}


def _finite_bound_terms(
    params: ModelParams, truncation: Truncation, seed: int, radius: float, bound: str, shared: Dict[str, Any]
) -> Dict[str, CoefficientEstimate]:
    t = truncation
    box = params.metric
    V, N_r, N_R = params.volume, params.n_small, params.n_big
    fraction = params.excluded_fraction(radius)
    if fraction >= 1:
        raise InvalidArgument(f"big spheres exclude the whole box at radius {radius}")
    w1 = CoefficientEstimate.exact(N_r / V * math.log1p(-fraction))
    a_terms, f1_terms = [], []
    for k in range(1, t.order + 1):
        weight = falling_factorial_weight(V, N_r, k)
        if weight == 0:
            continue
        if fraction > 0:
            coefficient = A_lambda(
                k, fraction, box, params.r, t.samples, seed, cluster_integrals=shared["clusters"], variant=t.a_inf_variant
            )
            a_terms.append(coefficient.scaled(N_r / V * weight / (k + 1)))
        if N_R > 0:
            coefficient = B1_star_lambda(
                k, box, params.species, N_R, t.samples, child_seed(seed, "B1", k), bound,
                cluster_integrals=shared["clusters"], shards=t.shards, workers=t.workers,
            )
            f1_terms.append(coefficient.scaled(N_R / V * N_r / V * weight / (k + 1)))
    return {"W1": w1, "A_term": sum_estimates(a_terms), "F1": sum_estimates(f1_terms)}


def _limit_big_weight(params: ModelParams):
    return lambda n: params.rho_big ** (n + 1) / (n + 1)


def _finite_big_weight(params: ModelParams):
    V, N_R = params.volume, params.n_big
    return lambda n: N_R / V * falling_factorial_weight(V, N_R, n) / (n + 1)


def _big_series(
    params: ModelParams, rho_r: float, rho_R: float, truncation: Truncation, seed: int, weight_of
) -> CoefficientEstimate:
    t = truncation
    terms = []
    for n in range(1, t.big_order + 1):
        weight = weight_of(n)
        if weight == 0:
            continue
        coefficient = B_star(
            n, rho_r, rho_R, params.d, params.r, params.R, t.cloud_max, (t.l_max, t.k_max),
            t.samples, child_seed(seed, "B*", n), inner_samples=t.inner_samples,
            shards=t.shards, workers=t.workers,
        )
        terms.append(coefficient.scaled(weight))
    return sum_estimates(terms)
