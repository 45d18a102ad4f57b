"""
Configuration for the hard-sphere cluster-bounds toolkit.

Loads environment variables (a .env file works as the run's config file),
validates them, and builds the typed parameter records the expansion
package works with. CLI flags override these values in main.py.
"""

import os
from dotenv import load_dotenv

from expansion import __version__
from expansion.params import A_INF_VARIANTS, EXCLUDED_VOLUME_READINGS, ConvergenceParams, ModelParams, Truncation

load_dotenv()


def _flag(name: str, default: str) -> bool:
    return os.getenv(name, default).lower() in ("true", "1", "yes")


class Config:
    """Central configuration: every cutoff, budget and path lives here."""

    # --- Model ---
    MODEL_DIMENSION: int = int(os.getenv("MODEL_DIMENSION", "1"))
    SMALL_RADIUS: float = float(os.getenv("SMALL_RADIUS", "0.05"))
    BIG_RADIUS: float = float(os.getenv("BIG_RADIUS", "0.25"))
    BOX_LENGTH: float = float(os.getenv("BOX_LENGTH", "10.0"))
    N_SMALL: int = int(os.getenv("N_SMALL", "0"))
    N_BIG: int = int(os.getenv("N_BIG", "0"))
    RHO_SMALL: float = float(os.getenv("RHO_SMALL", "0.1"))
    RHO_BIG: float = float(os.getenv("RHO_BIG", "0.01"))

    # --- Convergence constants ---
    KP_A: float = float(os.getenv("KP_A", "0.5"))
    KP_B: float = float(os.getenv("KP_B", "0.5"))
    KP_C: float = float(os.getenv("KP_C", "0.5"))
    KP_ALPHA: float = float(os.getenv("KP_ALPHA", "4.0"))

    # --- Truncation ---
    SERIES_ORDER: int = int(os.getenv("SERIES_ORDER", "3"))
    L_MAX: int = int(os.getenv("L_MAX", "2"))
    K_MAX: int = int(os.getenv("K_MAX", "1"))
    CLOUD_MAX: int = int(os.getenv("CLOUD_MAX", "2"))
    BIG_ORDER: int = int(os.getenv("BIG_ORDER", "2"))
    GRAPH_N_MAX: int = int(os.getenv("GRAPH_N_MAX", "7"))
    BIPARTITE_MAX: int = int(os.getenv("BIPARTITE_MAX", "8"))

    # --- Sampling ---
    MC_SAMPLES: int = int(os.getenv("MC_SAMPLES", "100000"))
    MC_INNER_SAMPLES: int = int(os.getenv("MC_INNER_SAMPLES", "2000"))
    MC_SHARDS: int = int(os.getenv("MC_SHARDS", "4"))
    MC_WORKERS: int = int(os.getenv("MC_WORKERS", "1"))
    SEED: int = int(os.getenv("SEED", "12345"))
    QUADRATURE_CELLS: int = int(os.getenv("QUADRATURE_CELLS", "100"))
    QUADRATURE_TOLERANCE: float = float(os.getenv("QUADRATURE_TOLERANCE", "1e-4"))

    # --- Readings of ambiguous formulas ---
    A_INF_VARIANT: str = os.getenv("A_INF_VARIANT", "printed")
    EXCLUDED_VOLUME_READING: str = os.getenv("EXCLUDED_VOLUME_READING", "2R")

    # --- Domain override ---
    ALLOW_OUTSIDE_DOMAIN: bool = _flag("ALLOW_OUTSIDE_DOMAIN", "false")

    # --- Output ---
    OUTPUT_DIR: str = os.getenv("OUTPUT_DIR", "artifacts")
    RUN_STATE_FILE: str = os.getenv("RUN_STATE_FILE", ".run_state.json")

    # --- Slack Notifications ---
    SLACK_WEBHOOK_URL: str = os.getenv("SLACK_WEBHOOK_URL", "")
    SLACK_ENABLED: bool = _flag("SLACK_ENABLED", "false")
    SLACK_NOTIFY_ON_FAILURE: bool = _flag("SLACK_NOTIFY_ON_FAILURE", "true")

    @classmethod
    def validate(cls) -> bool:
        """
        Validate every setting before any computation starts.

        Raises:
            ValueError listing all problems at once, each with a hint.
        """
        errors = []

        if cls.MODEL_DIMENSION < 1:
            errors.append(f"MODEL_DIMENSION must be >= 1 (got {cls.MODEL_DIMENSION}).")
        if not (0 < cls.SMALL_RADIUS < cls.BIG_RADIUS):
            errors.append(
                f"Radii must satisfy 0 < SMALL_RADIUS < BIG_RADIUS "
                f"(got {cls.SMALL_RADIUS}, {cls.BIG_RADIUS})."
            )
        if cls.BOX_LENGTH <= 2 * cls.BIG_RADIUS:
            errors.append(
                f"BOX_LENGTH must exceed the big diameter {2 * cls.BIG_RADIUS} (got {cls.BOX_LENGTH})."
            )
        for name in ("N_SMALL", "N_BIG", "RHO_SMALL", "RHO_BIG", "KP_A", "KP_B", "KP_C"):
            if getattr(cls, name) < 0:
                errors.append(f"{name} must be non-negative (got {getattr(cls, name)}).")

        if cls.SERIES_ORDER < 1:
            errors.append(f"SERIES_ORDER must be >= 1 (got {cls.SERIES_ORDER}).")
        if cls.L_MAX < 1 or cls.K_MAX < 0:
            errors.append(f"Need L_MAX >= 1 and K_MAX >= 0 (got {cls.L_MAX}, {cls.K_MAX}).")
        if cls.BIG_ORDER not in (1, 2):
            errors.append(f"BIG_ORDER must be 1 or 2 (got {cls.BIG_ORDER}).")

        for name in ("MC_SAMPLES", "MC_INNER_SAMPLES", "MC_SHARDS", "MC_WORKERS", "QUADRATURE_CELLS"):
            if getattr(cls, name) < 1:
                errors.append(f"{name} must be a positive integer (got {getattr(cls, name)}).")
        if cls.QUADRATURE_TOLERANCE <= 0:
            errors.append(f"QUADRATURE_TOLERANCE must be positive (got {cls.QUADRATURE_TOLERANCE}).")

        if cls.A_INF_VARIANT not in A_INF_VARIANTS:
            errors.append(f"A_INF_VARIANT must be one of {', '.join(A_INF_VARIANTS)} (got {cls.A_INF_VARIANT!r}).")
        if cls.EXCLUDED_VOLUME_READING not in EXCLUDED_VOLUME_READINGS:
            errors.append(
                f"EXCLUDED_VOLUME_READING must be one of {', '.join(EXCLUDED_VOLUME_READINGS)} "
                f"(got {cls.EXCLUDED_VOLUME_READING!r})."
            )

        if cls.SLACK_ENABLED and not cls.SLACK_WEBHOOK_URL:
            errors.append(
                "SLACK_ENABLED is set but SLACK_WEBHOOK_URL is missing.\n"
                "  Create an incoming webhook at: https://api.slack.com/messaging/webhooks"
            )

        if errors:
            raise ValueError("\n\n".join(errors))

        return True

    @classmethod
    def snapshot(cls) -> dict:
        """Resolved settings, echoed into every artifact. The webhook URL is redacted."""
        values = {
            name: getattr(cls, name)
            for name in dir(cls)
            if name.isupper() and not name.startswith("_")
        }
        if values.get("SLACK_WEBHOOK_URL"):
            values["SLACK_WEBHOOK_URL"] = "<set>"
        values["TOOLKIT_VERSION"] = __version__
        return dict(sorted(values.items()))

    @classmethod
    def model_params(cls, finite: bool = False) -> ModelParams:
        if finite:
            return ModelParams.finite(
                cls.MODEL_DIMENSION, cls.SMALL_RADIUS, cls.BIG_RADIUS, cls.BOX_LENGTH, cls.N_SMALL, cls.N_BIG
            )
        return ModelParams.limit(cls.MODEL_DIMENSION, cls.SMALL_RADIUS, cls.BIG_RADIUS, cls.RHO_SMALL, cls.RHO_BIG)

    @classmethod
    def convergence_params(cls) -> ConvergenceParams:
        return ConvergenceParams(a=cls.KP_A, b=cls.KP_B, c=cls.KP_C)

    @classmethod
    def truncation(cls) -> Truncation:
        return Truncation(
            order=cls.SERIES_ORDER,
            l_max=cls.L_MAX,
            k_max=cls.K_MAX,
            cloud_max=cls.CLOUD_MAX,
            big_order=cls.BIG_ORDER,
            samples=cls.MC_SAMPLES,
            inner_samples=cls.MC_INNER_SAMPLES,
            shards=cls.MC_SHARDS,
            workers=cls.MC_WORKERS,
            a_inf_variant=cls.A_INF_VARIANT,
            excluded_volume_reading=cls.EXCLUDED_VOLUME_READING,
        )
