"""Neyman-Pearson test of H0: alpha = alpha0 against H1: alpha = alpha1.

The likelihood ratio is a monotone function of the quadratic statistic psi,

    bridge:  phi = exp((alpha0 - alpha1) (psi + ln(1 - T)) / 2)
    ou:      phi = exp((alpha0 - alpha1) (psi - T) / 2)

so every probability about phi is a probability about psi. Under either
hypothesis psi = sum lambda_k N_k^2, with the eigenvalues of that
hypothesis' kernel under the same measure (the measure is symmetric in
alpha0 and alpha1, so H1 uses the spectrum of the swapped pair). On the
bridge branch alpha0 + alpha1 = 1 the integral term of psi vanishes and
psi = X_T^2 / (1 - T) is a scaled chi-square with one degree of freedom.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from functools import lru_cache
from typing import Optional

import numpy as np
from scipy import special

from . import __version__
from .errors import DomainError, ParameterError
from .gauss_models import ProcessParams, Trajectory, covariance
from .smirnov import DEFAULT_TOL, QuadraticFormDist
from .spectral import DEFAULT_N_EIGS, cached_spectrum

HYPOTHESES = ("H0", "H1")
POWER_METHOD = "derived-H1"


def psi_statistic(params: ProcessParams, traj: Trajectory, atol: float = 1e-9) -> float:
    """Squared L2(mu) norm of the observed path, integral by trapezoid on its grid."""
    if abs(traj.horizon - params.T) > atol:
        raise DomainError(f"trajectory ends at {traj.horizon!r}, expected T = {params.T!r}")
    s, x = traj.times, traj.values
    if params.kind == "bridge":
        integral = np.trapezoid(x**2 / (1.0 - s) ** 2, s) if s.size > 1 else 0.0
        return float(x[-1] ** 2 / (1.0 - params.T) + params.density_coeff * integral)
    integral = np.trapezoid(x**2, s) if s.size > 1 else 0.0
    return float(x[-1] ** 2 + params.density_coeff * integral)


def likelihood_ratio(params: ProcessParams, psi):
    psi = np.asarray(psi, dtype=float)
    if np.any(psi < 0):
        raise DomainError("psi must be >= 0")
    shift = math.log1p(-params.T) if params.kind == "bridge" else -params.T
    return np.exp(0.5 * (params.alpha0 - params.alpha1) * (psi + shift))[()]


def psi_threshold(params: ProcessParams, x):
    """Inverse of psi -> phi: the psi at which phi equals x (> 0)."""
    params.require_distinct()
    x = np.asarray(x, dtype=float)
    shift = math.log1p(-params.T) if params.kind == "bridge" else -params.T
    return (2.0 * np.log(x) / (params.alpha0 - params.alpha1) - shift)[()]


def phi_bound(params: ProcessParams) -> float:
    """phi at psi = 0: an upper bound if alpha0 < alpha1, a lower bound otherwise."""
    return float(likelihood_ratio(params, 0.0))


class _ScaledChi2:
    """psi = v * N^2 (bridge branch alpha0 + alpha1 = 1)."""

    def __init__(self, scale: float):
        self.scale = scale

    def cdf(self, y):
        y = np.maximum(np.asarray(y, dtype=float), 0.0)
        return special.erf(np.sqrt(y / (2.0 * self.scale)))[()]

    def quantile(self, p: float) -> float:
        return float(2.0 * self.scale * special.erfinv(p) ** 2)


@lru_cache(maxsize=64)
def psi_distribution(params: ProcessParams, hypothesis: str = "H0", tol: float = DEFAULT_TOL,
                     n_eigs: int = DEFAULT_N_EIGS):
    """Law of psi under the given hypothesis (object with ``cdf`` and ``quantile``)."""
    if hypothesis not in HYPOTHESES:
        raise ParameterError(f"hypothesis must be one of {HYPOTHESES}")
    alpha = params.alpha0 if hypothesis == "H0" else params.alpha1
    if params.unit_sum:
        T = params.T
        return _ScaledChi2(float(covariance("bridge", alpha, T, T)) / (1.0 - T))
    kernel_params = params if hypothesis == "H0" else params.swapped()
    return QuadraticFormDist.from_spectrum(cached_spectrum(kernel_params, n_eigs), tol)


def closed_form_D(params: ProcessParams, x, alpha: Optional[float] = None):
    """2 - 2 Phi(sqrt((1-T)(2 ln x / (alpha0 - alpha1) - ln(1-T)) / R(T,T))), alpha0 + alpha1 = 1.

    ``alpha`` selects the kernel of R (alpha0 by default).
    """
    T = params.T
    alpha = params.alpha0 if alpha is None else alpha
    var = float(covariance("bridge", alpha, T, T))
    x = np.asarray(x, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        arg = (1.0 - T) * (2.0 * np.log(x) / (params.alpha0 - params.alpha1) - math.log1p(-T)) / var
    return (2.0 - 2.0 * special.ndtr(np.sqrt(np.maximum(arg, 0.0))))[()]


def lr_cdf(params: ProcessParams, x, hypothesis: str = "H0", tol: float = DEFAULT_TOL):
    """P(phi <= x) under ``hypothesis``; exact 0 or 1 outside the attainable range."""
    params.require_distinct()
    x_arr = np.atleast_1d(np.asarray(x, dtype=float))
    out = np.zeros_like(x_arr)
    pos = x_arr > 0
    increasing = params.alpha0 > params.alpha1  # phi increasing in psi
    y = np.full_like(x_arr, -np.inf)
    y[pos] = psi_threshold(params, x_arr[pos])
    inside = pos & (y > 0)
    if params.unit_sum:
        alpha = params.alpha0 if hypothesis == "H0" else params.alpha1
        D = closed_form_D(params, x_arr[inside], alpha)
        out[inside] = 1.0 - D if increasing else D
    else:
        F = psi_distribution(params, hypothesis, tol).cdf(y[inside])
        out[inside] = F if increasing else 1.0 - F
    # psi threshold <= 0: phi <= x is impossible (increasing) or certain (decreasing)
    out[pos & ~inside] = 0.0 if increasing else 1.0
    if np.ndim(x) == 0:
        return float(out[0])
    return out


def _check_level(q: float) -> None:
    if not 0.0 < q < 1.0:
        raise ParameterError("q must lie in (0, 1)")


def critical_psi(params: ProcessParams, q: float, tol: float = DEFAULT_TOL) -> float:
    """psi level of the rejection boundary: reject iff psi < c (alpha0 < alpha1) or psi > c."""
    params.require_distinct()
    _check_level(q)
    dist = psi_distribution(params, "H0", tol)
    return dist.quantile(q if params.alpha0 < params.alpha1 else 1.0 - q)


def critical_value(params: ProcessParams, q: float, tol: float = DEFAULT_TOL) -> float:
    """c with P0(phi > c) = q."""
    return float(likelihood_ratio(params, critical_psi(params, q, tol)))


def p_value(params: ProcessParams, psi, tol: float = DEFAULT_TOL):
    """P0(phi > phi_observed) for the observed psi."""
    params.require_distinct()
    F = psi_distribution(params, "H0", tol).cdf(psi)
    return F if params.alpha0 < params.alpha1 else 1.0 - F


def power(params: ProcessParams, q: float, tol: float = DEFAULT_TOL) -> float:
    """P1(phi > c(q)), from the spectrum of the alpha1 kernel."""
    c_psi = critical_psi(params, q, tol)
    F = float(psi_distribution(params, "H1", tol).cdf(c_psi))
    return F if params.alpha0 < params.alpha1 else 1.0 - F


@dataclass
class TestReport:
    __test__ = False  # not a pytest class

    psi: float
    phi: float
    critical_value: float
    p_value: float
    reject: bool
    level_q: float
    power: Optional[float] = None
    power_method: Optional[str] = None
    params: dict = field(default_factory=dict)
    version: str = __version__

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)

    @classmethod
    def from_dict(cls, d: dict) -> "TestReport":
        return cls(**d)


def run_test(params: ProcessParams, traj: Trajectory, q: float, with_power: bool = False,
             tol: float = DEFAULT_TOL) -> TestReport:
    params.require_distinct()
    _check_level(q)
    psi = psi_statistic(params, traj)
    phi = float(likelihood_ratio(params, psi))
    c = critical_value(params, q, tol)
    return TestReport(
        psi=psi,
        phi=phi,
        critical_value=c,
        p_value=float(p_value(params, psi, tol)),
        reject=bool(phi > c),
        level_q=q,
        power=power(params, q, tol) if with_power else None,
        power_method=POWER_METHOD if with_power else None,
        params=params.to_dict(),
    )
