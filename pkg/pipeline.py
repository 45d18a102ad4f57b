"""
Run orchestrator for the hard-sphere cluster-bounds toolkit.

Each subcommand computes one family of tables, writes them through the
ArtifactService, records the run state and optionally posts a Slack summary.
Parameter points outside the convergence domain are recorded as skips, not
failures.
"""

import dataclasses
import logging
import math
import time
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional

import numpy as np

from config import Config
from expansion import __version__, graphs
from expansion.errors import NotInDomain
from expansion.geometry import ball_volume
from expansion.integrals import (
    A_INF_MAX_K,
    B1_MAX_ORDER,
    A_inf,
    B1_inf,
    B_star,
    C_factor_terms,
    beta_n,
    beta_n_exact_1d,
    child_seed,
    one_big_term,
)
from expansion.oracle import TinyInstance, brute_Z_empty, sandwich_test, tree_graph_check
from expansion.params import ConvergenceParams, ModelParams
from expansion.polymers import QuadratureSpec, activity_table, cluster_log_Z, kp_check
from expansion.series import (
    F0,
    admissible_density_curve,
    convergence_check,
    free_energy_bounds,
    surface_decay_fit,
)
from services.artifact_service import ArtifactService
from services.notification_service import ArtifactSummary, SlackNotifier

logger = logging.getLogger(__name__)

SUBCOMMANDS = ("graphs", "beta", "coeffs", "free-energy", "domain", "verify")
VERIFY_SUITES = ("sandwich", "tree-graph", "tonks", "kp")

COEFF_HEADER = ["name", "index", "bound", "value", "std_error", "samples", "truncation"]
SWEEP_HEADER = [
    "rho_r", "rho_R", "lower", "upper", "lower_error", "upper_error",
    "margin_c1", "margin_c2", "margin_cond1", "status",
]
VERIFY_HEADER = ["suite", "case", "passed", "observed", "expected", "tolerance"]


@dataclass
class RunResult:
    """Tracks what a run wrote, skipped and failed."""

    subcommand: str
    artifacts: List[ArtifactSummary] = field(default_factory=list)
    skipped: List[str] = field(default_factory=list)
    failures: List[str] = field(default_factory=list)
    elapsed: float = 0.0

    @property
    def ok(self) -> bool:
        return not self.failures

    def summary(self) -> str:
        parts = [f"{self.subcommand}: {len(self.artifacts)} artifacts in {self.elapsed:.1f}s"]
        if self.skipped:
            parts.append(f"{len(self.skipped)} skipped")
        if self.failures:
            parts.append(f"{len(self.failures)} failed")
        return ", ".join(parts)


def run(subcommand: str, options: Optional[Dict[str, Any]] = None, notify_slack: bool = False) -> RunResult:
    """
    Run one subcommand.

    Args:
        subcommand: One of SUBCOMMANDS.
        options: Subcommand options (grid sizes, n ranges, suites); missing
            keys fall back to Config.
        notify_slack: Post a summary to Slack after the run.

    Returns:
        RunResult with artifacts, skips and failures.

    Raises:
        ToolkitError: invalid arguments, precision failures and resource
            limits propagate to the caller.
    """
    if subcommand not in SUBCOMMANDS:
        raise ValueError(f"unknown subcommand {subcommand!r}; expected one of {', '.join(SUBCOMMANDS)}")
    options = dict(options or {})
    result = RunResult(subcommand=subcommand)
    artifacts = ArtifactService(Config.OUTPUT_DIR, {**Config.snapshot(), "options": options}, __version__)
    started = time.monotonic()
    logger.info("Running %s (seed %d)", subcommand, Config.SEED)

    handler = {
        "graphs": _run_graphs,
        "beta": _run_beta,
        "coeffs": _run_coeffs,
        "free-energy": _run_free_energy,
        "domain": _run_domain,
        "verify": _run_verify,
    }[subcommand]
    handler(options, artifacts, result)

    result.elapsed = time.monotonic() - started
    artifacts.save_run_state(Config.RUN_STATE_FILE, subcommand)

    logger.info("Run complete: %s", result.summary())
    for failure in result.failures:
        logger.error("  - %s", failure)

    failed_with_hook = bool(result.failures) and Config.SLACK_NOTIFY_ON_FAILURE and bool(Config.SLACK_WEBHOOK_URL)
    if notify_slack or Config.SLACK_ENABLED or failed_with_hook:
        _notify(result)
    return result


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def _run_graphs(options: Dict[str, Any], artifacts: ArtifactService, result: RunResult) -> None:
    n_top = int(options.get("n") or 5)
    rows = []
    for n in range(2, n_top + 1):
        connected = len(graphs.enum_connected(n, Config.GRAPH_N_MAX))
        two_connected = len(graphs.enum_two_connected(n, Config.GRAPH_N_MAX))
        rows.append([n, connected, two_connected])
        logger.info("n=%d: %d connected, %d two-connected", n, connected, two_connected)
    _record(result, artifacts.write_csv("graph_counts.csv", ["n", "connected", "two_connected"], rows), len(rows))

    listings = {
        f"two_connected_{n}": [g.to_text() for g in graphs.enum_two_connected(n, Config.GRAPH_N_MAX)]
        for n in range(2, min(n_top, 4) + 1)
    }
    listings["big_two_connected_2_1"] = [g.to_text() for g, _ in graphs.enum_big_two_connected(2, 1, Config.BIPARTITE_MAX)]
    _record(result, artifacts.write_json("graph_listings.json", listings), sum(len(v) for v in listings.values()))


def _run_beta(options: Dict[str, Any], artifacts: ArtifactService, result: RunResult) -> None:
    d = int(options.get("d") or Config.MODEL_DIMENSION)
    n_max = int(options.get("n_max") or 3)
    rows = []
    for n in range(1, n_max + 1):
        estimate = beta_n(
            n, d, Config.SMALL_RADIUS, Config.MC_SAMPLES, child_seed(Config.SEED, "beta", n),
            Config.MC_SHARDS, Config.MC_WORKERS,
        )
        exact = beta_n_exact_1d(n, 2 * Config.SMALL_RADIUS) if d == 1 else math.nan
        rows.append([n, d, estimate.value, estimate.std_error, estimate.samples, exact])
        if d == 1 and not estimate.within(exact, sigmas=3.0):
            result.failures.append(f"beta_{n}: {estimate.value:.6g} +- {estimate.std_error:.2g}, exact {exact:.6g}")
    header = ["n", "d", "value", "std_error", "samples", "exact_1d"]
    _record(result, artifacts.write_csv("beta_table.csv", header, rows), len(rows))


def _run_coeffs(options: Dict[str, Any], artifacts: ArtifactService, result: RunResult) -> None:
    params = Config.model_params()
    t = Config.truncation()
    d, r, R = params.d, params.r, params.R
    seed = Config.SEED
    rows: List[list] = []

    def add(name: str, index: Any, bound: str, estimate) -> None:
        rows.append([name, index, bound, estimate.value, estimate.std_error, estimate.samples, estimate.truncation])

    for bound, radius in (("upper", R + r), ("lower", R)):
        fraction = params.excluded_fraction(radius)
        for k in range(1, min(t.order, A_INF_MAX_K) + 1):
            add("A_inf", k, bound, A_inf(k, fraction, d, r, t.samples, child_seed(seed, "A", k), t.a_inf_variant))
        for s in range(1, min(t.order, B1_MAX_ORDER) + 1):
            add("B1_inf", s, bound, B1_inf(s, d, r, R, params.rho_big, t.samples, child_seed(seed, "B1", s), bound))

    for (l, k), term in sorted(C_factor_terms([[0.0] * d], d, r, R, t.l_max, t.k_max, t.samples, seed).items()):
        add("C_single_big", f"{l},{k}", "", term)
        add("one_big_term", f"{l},{k}", "", one_big_term(l, k, d, r, R, t.samples, child_seed(seed, "one-big", l, k)))

    for n in range(1, t.big_order + 1):
        estimate = B_star(
            n, params.rho_small, params.rho_big, d, r, R, t.cloud_max, (t.l_max, t.k_max),
            t.samples, child_seed(seed, "B*", n), inner_samples=t.inner_samples,
            shards=t.shards, workers=t.workers,
        )
        add("B_star", n, "", estimate)

    _record(result, artifacts.write_csv("coefficients.csv", COEFF_HEADER, rows), len(rows))


def _run_free_energy(options: Dict[str, Any], artifacts: ArtifactService, result: RunResult) -> None:
    cp = Config.convergence_params()
    t = Config.truncation()
    if options.get("finite"):
        points = [Config.model_params(finite=True)]
    else:
        points = [
            ModelParams.limit(Config.MODEL_DIMENSION, Config.SMALL_RADIUS, Config.BIG_RADIUS, rho_r, rho_R)
            for rho_r in _grid(options.get("rho_small"), Config.RHO_SMALL, int(options.get("grid") or 1))
            for rho_R in _grid(options.get("rho_big"), Config.RHO_BIG, int(options.get("grid") or 1))
        ]

    rows, reports = [], []
    for params in points:
        label = f"rho_r={params.small_density:.4g}, rho_R={params.big_density:.4g}"
        margins = convergence_check(params, cp, t.excluded_volume_reading).margins
        try:
            lower, upper = free_energy_bounds(params, cp, t, Config.SEED, Config.ALLOW_OUTSIDE_DOMAIN)
        except NotInDomain as err:
            result.skipped.append(f"{label}: {err}")
            rows.append(_sweep_row(params, None, None, margins, "not-in-domain"))
            continue
        status = "ok" if upper.value + 3 * upper.std_error >= lower.value - 3 * lower.std_error else "misordered"
        if status != "ok":
            result.failures.append(f"{label}: upper {upper.value:.6g} < lower {lower.value:.6g}")
        rows.append(_sweep_row(params, lower, upper, margins, status))
        reports.append({"params": params.to_dict(), "lower": lower.to_dict(), "upper": upper.to_dict()})

    _record(result, artifacts.write_csv("free_energy_sweep.csv", SWEEP_HEADER, rows), len(rows))
    _record(result, artifacts.write_json("free_energy_reports.json", reports), len(reports))


def _run_domain(options: Dict[str, Any], artifacts: ArtifactService, result: RunResult) -> None:
    cp = Config.convergence_params()
    params = Config.model_params(finite=bool(options.get("finite")))
    check = convergence_check(params, cp, Config.EXCLUDED_VOLUME_READING)
    _record(result, artifacts.write_json("domain_margins.json", check.to_dict()), len(check.margins))

    r = Config.SMALL_RADIUS
    R_grid = list(np.geomspace(float(options.get("r_min") or 10 * r), float(options.get("r_max") or 100 * r), 25))
    curve = admissible_density_curve(
        r, R_grid, Config.RHO_SMALL, Config.KP_ALPHA, cp.b, cp.c, d=Config.MODEL_DIMENSION
    )
    header = ["R", "bound", "log_bound", "effective_rho_small", "shell"]
    rows = [[p.R, p.bound, p.log_bound, p.effective_rho_small, p.shell] for p in curve]
    _record(result, artifacts.write_csv("density_curve.csv", header, rows), len(rows))
    if Config.RHO_SMALL > 0:
        fit = surface_decay_fit(curve[len(curve) // 2:], Config.RHO_SMALL)
        logger.info("Surface decay fit: slope %.4g, R^2 %.4f", fit["slope"], fit["r_squared"])
        _record(result, artifacts.write_json("density_curve_fit.json", fit), 1)


def _run_verify(options: Dict[str, Any], artifacts: ArtifactService, result: RunResult) -> None:
    suites = options.get("suites") or list(VERIFY_SUITES)
    rows: List[list] = []
    for suite in suites:
        check = {
            "sandwich": _verify_sandwich,
            "tree-graph": _verify_tree_graph,
            "tonks": _verify_tonks,
            "kp": _verify_kp,
        }[suite]
        for case, passed, observed, expected, tolerance in check(result):
            rows.append([suite, case, passed, observed, expected, tolerance])
            if not passed:
                result.failures.append(f"{suite}/{case}: observed {observed}, expected {expected}")
    _record(result, artifacts.write_csv("verify.csv", VERIFY_HEADER, rows), len(rows))


# ---------------------------------------------------------------------------
# Verification suites
# ---------------------------------------------------------------------------


def _verify_sandwich(result: RunResult) -> List[tuple]:
    cp = ConvergenceParams(a=0.2, b=0.2, c=0.5)
    t = dataclasses.replace(
        Config.truncation(), order=2, cloud_max=0, big_order=1, a_inf_variant="restricted",
        excluded_volume_reading="2r",
    )
    cases = [
        TinyInstance(d=1, L=10.0, r=0.02, R=0.25, n_small=2, n_big=0),
        TinyInstance(d=1, L=20.0, r=0.02, R=0.25, n_small=2, n_big=1),
        TinyInstance(d=1, L=20.0, r=0.02, R=0.25, n_small=2, n_big=2),
    ]
    checks = []
    for inst in cases:
        case = f"N_R={inst.n_big},N_r={inst.n_small},L={inst.L:g}"
        report = sandwich_test(inst, t, Config.SEED, cp)
        if report.skipped:
            result.skipped.append(f"sandwich {case}: {report.reason}")
            continue
        checks.append((case, report.holds, report.exact, f"[{report.lower:.6g}, {report.upper:.6g}]", report.tolerance))
    return checks


def _verify_tree_graph(result: RunResult) -> List[tuple]:
    checks = []
    for n in range(2, 6):
        report = tree_graph_check(n, 10_000, child_seed(Config.SEED, "tree", n))
        checks.append((f"n={n}", report.violations == 0, report.max_ratio, "<= 1", 0.0))
    return checks


def _verify_tonks(result: RunResult) -> List[tuple]:
    a = 2 * Config.SMALL_RADIUS
    checks = []
    betas = {}
    for n in range(1, 4):
        estimate = beta_n(n, 1, Config.SMALL_RADIUS, Config.MC_SAMPLES, child_seed(Config.SEED, "tonks", n))
        betas[n] = estimate
        exact = beta_n_exact_1d(n, a)
        checks.append((f"beta_{n}", estimate.within(exact), estimate.value, exact, 3 * estimate.std_error))
    rho = 0.1 / a * math.exp(-3)
    series = F0(rho, 3, betas, ball_volume(1, 2 * Config.SMALL_RADIUS), allow_outside_domain=True)
    # -F0 of the Tonks gas: sum_m a^m rho^(m+1) / m
    tonks = -sum(a**m * rho ** (m + 1) / m for m in range(1, 4))
    checks.append(("F0_order3", series.within(tonks), series.value, tonks, 3 * series.std_error))
    return checks


def _verify_kp(result: RunResult) -> List[tuple]:
    cp = Config.convergence_params()
    d, r, R, L = 1, 0.05, 0.25, 10.0
    margins = [
        kp_check(ModelParams.finite(d, r, R, L, n, 0), cp, Config.EXCLUDED_VOLUME_READING).margin
        for n in range(0, 5)
    ]
    monotone = all(later <= earlier for earlier, later in zip(margins, margins[1:]))
    checks = [("margin_monotone_in_N_r", monotone, margins[-1], "non-increasing", 0.0)]

    inst = TinyInstance(d=d, L=L, r=r, R=R, n_small=3, n_big=0)
    spec = QuadratureSpec(Config.QUADRATURE_CELLS, Config.QUADRATURE_TOLERANCE)
    activities = activity_table(3, [], inst.metric, inst.species, spec)
    try:
        series = cluster_log_Z(activities, cp.c, 3, Config.ALLOW_OUTSIDE_DOMAIN)
    except NotInDomain as err:
        result.skipped.append(f"kp cluster series: {err}")
        return checks
    exact = math.log(brute_Z_empty(inst).value)
    tolerance = series.tail_bound + Config.QUADRATURE_TOLERANCE
    checks.append(("cluster_log_Z_N3", abs(series.value - exact) <= tolerance, series.value, exact, tolerance))
    return checks


# ---------------------------------------------------------------------------
# Private helpers
# ---------------------------------------------------------------------------


def _grid(values: Optional[List[float]], default: float, count: int) -> List[float]:
    if values:
        return [float(v) for v in values]
    if count <= 1:
        return [default]
    return [float(v) for v in np.linspace(0.0, default, count)]


def _sweep_row(params: ModelParams, lower, upper, margins: Dict[str, float], status: str) -> list:
    return [
        params.small_density,
        params.big_density,
        lower.value if lower else math.nan,
        upper.value if upper else math.nan,
        lower.std_error if lower else math.nan,
        upper.std_error if upper else math.nan,
        margins["c1"],
        margins["c2"],
        margins["cond1"],
        status,
    ]


def _record(result: RunResult, path, rows: int) -> None:
    result.artifacts.append(ArtifactSummary(path=str(path), rows=rows))


def _notify(result: RunResult) -> None:
    webhook_url = Config.SLACK_WEBHOOK_URL
    if not webhook_url:
        logger.warning("Slack notification requested but SLACK_WEBHOOK_URL is not set")
        return
    SlackNotifier(webhook_url).send_run_summary(
        subcommand=result.subcommand,
        elapsed=result.elapsed,
        artifacts=result.artifacts,
        skipped=result.skipped,
        failures=result.failures,
    )
