"""
Cluster-expansion toolkit for a two-species hard-sphere mixture.
"""

from .errors import (
    InadmissibleConfiguration,
    InvalidArgument,
    NotInDomain,
    PrecisionFailure,
    ResourceLimit,
    ToolkitError,
)
from .estimates import CoefficientEstimate
from .params import ConvergenceParams, ModelParams, Truncation
from .series import FreeEnergyReport, admissible_density_curve, convergence_check, free_energy_bounds

__version__ = "0.1.0"

__all__ = [
    "CoefficientEstimate",
    "ConvergenceParams",
    "FreeEnergyReport",
    "InadmissibleConfiguration",
    "InvalidArgument",
    "ModelParams",
    "NotInDomain",
    "PrecisionFailure",
    "ResourceLimit",
    "ToolkitError",
    "Truncation",
    "admissible_density_curve",
    "convergence_check",
    "free_energy_bounds",
]
