"""Singular semilinear Dirichlet problems on smooth domains.

Construction and verification of positive solutions of
``(1/2) laplacian u = u**-alpha`` (0 < alpha < 1) with continuous
boundary data vanishing on a boundary cap: a distance-weighted grid
fixed point for the solve, walk-on-spheres and conditioned-path Monte
Carlo as independent oracles, and an analysis layer that measures the
structural estimates behind the construction (boundary-data constant,
uniform integrability, boundary Harnack ratios, excursion and
occupation scaling laws).

Heavy path sampling is JIT-compiled when numba is available; set
``SINGWALK_BACKEND=numpy`` (or ``numba``) to pin the backend.
"""

from ._backend import backend_name
from .geometry import BallDomain, BoxDomain, CapSet, DyadicStrips
from .kernels import (
    QuadratureSpec,
    QuadratureWarning,
    green_ball,
    green_integral,
    green_integral_shell,
    green_integral_subball,
    harmonic_extension,
    poisson_kernel_ball,
)
from .problem import (
    BoundaryData,
    DomainBreachError,
    MinorantH0,
    Nonlinearity,
    SingularMajorant,
)
from .stochastic import (
    ConditionedEnsemble,
    ExcursionRecord,
    OccupationResult,
    PathConfig,
    RngStream,
    TruncationWarning,
    WosResult,
    conditioned_paths_each,
    conditioned_paths_rejection,
    em_exit,
    em_path,
    excursion_decompose,
    wos_harmonic,
    wos_occupation,
)
from .solver import (
    Grid,
    GridField,
    PicardOperator,
    SolveReport,
    discretization_error,
)
from .analysis import (
    C1Estimate,
    ScalingReport,
    bhp_check,
    estimate_C1,
    excursion_stats,
    lemma43_check,
    occupation_scaling,
    oracle_check,
    ui_diagnostic,
)
from .config import RunConfig, load_config

__version__ = "0.1.0"

__all__ = [
    "backend_name",
    "BallDomain", "BoxDomain", "CapSet", "DyadicStrips",
    "QuadratureSpec", "QuadratureWarning",
    "green_ball", "poisson_kernel_ball", "harmonic_extension",
    "green_integral", "green_integral_shell", "green_integral_subball",
    "Nonlinearity", "MinorantH0", "SingularMajorant", "BoundaryData",
    "DomainBreachError",
    "RngStream", "PathConfig", "WosResult", "OccupationResult",
    "ConditionedEnsemble", "ExcursionRecord", "TruncationWarning",
    "wos_harmonic", "wos_occupation", "em_exit", "em_path",
    "conditioned_paths_rejection", "conditioned_paths_each",
    "excursion_decompose",
    "Grid", "GridField", "PicardOperator", "SolveReport",
    "discretization_error",
    "C1Estimate", "ScalingReport", "estimate_C1", "ui_diagnostic",
    "bhp_check", "lemma43_check", "excursion_stats", "occupation_scaling",
    "oracle_check",
    "RunConfig", "load_config",
    "__version__",
]
