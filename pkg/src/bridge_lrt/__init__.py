"""Exact likelihood-ratio tests for the scaling parameter of alpha-Brownian bridges and OU processes."""

__version__ = "0.1.0"

from .errors import (  # noqa: E402
    BridgeLRTError,
    ConvergenceError,
    DegenerateTrajectoryError,
    DomainError,
    EigenvalueTieError,
    GridError,
    ParameterError,
    ToleranceError,
    TrajectoryFormatError,
)
from .gauss_models import ProcessParams, Trajectory, covariance, read_trajectory, write_trajectory  # noqa: E402
from .spectral import Spectrum, compute_spectrum, nystrom_spectrum, trace_integral  # noqa: E402
from .smirnov import QuadraticFormDist, qf_cdf, qf_quantile, sample_qf  # noqa: E402
from .decision import (  # noqa: E402
    TestReport,
    critical_value,
    likelihood_ratio,
    lr_cdf,
    p_value,
    power,
    psi_statistic,
    run_test,
)

__all__ = [
    "BridgeLRTError", "ConvergenceError", "DegenerateTrajectoryError", "DomainError",
    "EigenvalueTieError", "GridError", "ParameterError", "ToleranceError", "TrajectoryFormatError",
    "ProcessParams", "Trajectory", "covariance", "read_trajectory", "write_trajectory",
    "Spectrum", "compute_spectrum", "nystrom_spectrum", "trace_integral",
    "QuadraticFormDist", "qf_cdf", "qf_quantile", "sample_qf",
    "TestReport", "critical_value", "likelihood_ratio", "lr_cdf", "p_value", "power",
    "psi_statistic", "run_test",
]
