"""Gaussian models: alpha-Brownian bridge and Ornstein-Uhlenbeck process.

Both processes start at 0 and are driven by a standard Brownian motion W:

    bridge:  dX_t = dW_t - alpha X_t / (1 - t) dt,   0 <= t < 1
    ou:      dX_t = dW_t - alpha X_t dt,              0 <= t < inf

Everything here is closed form: covariances, conditional means, exact
Gaussian transitions between grid points and the maximum-likelihood
estimator of the bridge scaling parameter.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import (
    DegenerateTrajectoryError,
    DomainError,
    GridError,
    ParameterError,
    TrajectoryFormatError,
)

KINDS = ("bridge", "ou")

# |alpha - 1/2| below this (relative) uses the logarithmic covariance branch.
HALF_WINDOW = 1e-9
# alpha0 + alpha1 within this of 1 selects the closed-form decision branch.
UNIT_SUM_TOL = 1e-12


def _check_kind(kind: str) -> None:
    if kind not in KINDS:
        raise ParameterError(f"unknown process kind {kind!r}; expected one of {KINDS}")


@dataclass(frozen=True)
class ProcessParams:
    """Hypothesis pair (alpha0 under H0, alpha1 under H1) and observation horizon T."""

    kind: str
    alpha0: float
    alpha1: float
    T: float

    def __post_init__(self):
        _check_kind(self.kind)
        for name in ("alpha0", "alpha1", "T"):
            value = float(getattr(self, name))
            if not math.isfinite(value):
                raise ParameterError(f"{name} must be finite, got {value}")
            object.__setattr__(self, name, value)
        if self.alpha0 < 0 or self.alpha1 < 0:
            raise ParameterError("alpha0 and alpha1 must be >= 0")
        if self.kind == "bridge":
            if self.T == 1.0:
                raise ParameterError(
                    "T = 1 is not supported: the MLE of alpha is strongly consistent "
                    "as T -> 1, so the test is decided without error and there is no "
                    "distribution to compute"
                )
            if not 0.0 < self.T < 1.0:
                raise ParameterError(f"bridge horizon must satisfy 0 < T < 1, got {self.T}")
            if self.alpha0 + self.alpha1 < 1.0 - UNIT_SUM_TOL:
                raise ParameterError(
                    "bridge requires alpha0 + alpha1 >= 1 (the measure would not be positive)"
                )
        else:
            if not self.T > 0.0:
                raise ParameterError(f"ou horizon must satisfy T > 0, got {self.T}")
            if self.alpha0 + self.alpha1 <= 0.0:
                raise ParameterError("ou requires alpha0 + alpha1 > 0")

    @property
    def density_coeff(self) -> float:
        """Coefficient of the absolutely continuous part of the spectral measure."""
        if self.kind == "bridge":
            return self.alpha0 + self.alpha1 - 1.0
        return self.alpha0 + self.alpha1

    @property
    def unit_sum(self) -> bool:
        """True on the bridge closed-form branch alpha0 + alpha1 = 1."""
        return self.kind == "bridge" and abs(self.alpha0 + self.alpha1 - 1.0) <= UNIT_SUM_TOL

    @property
    def distinct(self) -> bool:
        return self.alpha0 != self.alpha1

    def require_distinct(self) -> None:
        """The likelihood-ratio test is degenerate (phi = 1) when alpha0 == alpha1."""
        if not self.distinct:
            raise ParameterError("the test needs alpha0 != alpha1")

    def swapped(self) -> "ProcessParams":
        return ProcessParams(self.kind, self.alpha1, self.alpha0, self.T)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "alpha0": self.alpha0, "alpha1": self.alpha1, "T": self.T}


@dataclass(frozen=True)
class Trajectory:
    """Observed path on a strictly increasing grid starting at (0, 0)."""

    times: np.ndarray
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        values = np.asarray(self.values, dtype=float)
        if times.ndim != 1 or times.shape != values.shape:
            raise GridError("times and values must be 1-d arrays of equal length")
        if times.size == 0:
            raise GridError("trajectory needs at least one point")
        if times[0] != 0.0:
            raise GridError("trajectory must start at t = 0")
        if values[0] != 0.0:
            raise GridError("trajectory must start at x = 0")
        if np.any(np.diff(times) <= 0):
            raise GridError("trajectory times must be strictly increasing")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "values", values)

    @property
    def horizon(self) -> float:
        return float(self.times[-1])

    def __len__(self):
        return self.times.size


# ---------------------------------------------------------------------------
# Covariance and conditional expectation
# ---------------------------------------------------------------------------


def _mexpm1_over(eps, log_x):
    """(1 - x**eps) / eps for x = exp(log_x), continuous at eps = 0."""
    if eps == 0.0:
        return -log_x
    return -np.expm1(eps * log_x) / eps


def covariance(kind: str, alpha: float, s, t):
    """Covariance R(s, t) = E[X_s X_t] of the process with parameter ``alpha``.

    Accepts scalars or broadcastable arrays. Bridge times must lie in [0, 1],
    OU times in [0, inf).
    """
    _check_kind(kind)
    if alpha < 0:
        raise ParameterError("alpha must be >= 0")
    s = np.asarray(s, dtype=float)
    t = np.asarray(t, dtype=float)
    upper = 1.0 if kind == "bridge" else np.inf
    if np.any(s < 0) or np.any(t < 0) or np.any(s > upper) or np.any(t > upper):
        raise DomainError(f"times must lie in [0, {upper}]")
    m = np.minimum(s, t)

    if kind == "ou":
        if alpha == 0.0:
            out = m
        else:
            out = np.exp(-alpha * np.abs(s - t)) * (-np.expm1(-2.0 * alpha * m)) / (2.0 * alpha)
        return out[()]

    eps = 1.0 - 2.0 * alpha
    if abs(alpha - 0.5) < HALF_WINDOW * 0.5:
        eps = 0.0
    with np.errstate(divide="ignore", invalid="ignore"):
        log_m = np.log1p(-m)
        scale = ((1.0 - s) * (1.0 - t)) ** alpha
        out = scale * _mexpm1_over(eps, log_m)
    if alpha > 0:
        out = np.where(np.maximum(s, t) >= 1.0, 0.0, out)
    return out[()]


def expected_future(kind: str, alpha: float, s, t, x_s):
    """E[X_t | F_s] for s <= t, which is a deterministic factor times x_s."""
    return transition_factor(kind, alpha, s, t) * np.asarray(x_s, dtype=float)


def transition_factor(kind: str, alpha: float, s, t):
    _check_kind(kind)
    s = np.asarray(s, dtype=float)
    t = np.asarray(t, dtype=float)
    if np.any(t < s) or np.any(s < 0):
        raise DomainError("need 0 <= s <= t")
    if kind == "ou":
        return np.exp(-alpha * (t - s))[()]
    if np.any(t > 1):
        raise DomainError("bridge times must not exceed 1")
    if alpha == 0.0:
        return np.ones(np.broadcast(s, t).shape)[()]
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = (1.0 - t) / (1.0 - s)
    # s = t = 1 is the pinned endpoint.
    ratio = np.where((s >= 1.0), 0.0, ratio)
    return (ratio ** alpha)[()]


def transition(kind: str, alpha: float, t0: float, t1: float) -> tuple[float, float]:
    """Exact Gaussian transition X_{t1} | X_{t0} = x  ~  N(factor * x, variance)."""
    _check_kind(kind)
    if not t1 > t0 >= 0:
        raise GridError("transition needs 0 <= t0 < t1")
    if kind == "ou":
        dt = t1 - t0
        if alpha == 0.0:
            return 1.0, dt
        return math.exp(-alpha * dt), -math.expm1(-2.0 * alpha * dt) / (2.0 * alpha)
    if t1 >= 1.0:
        raise GridError("bridge transitions are only defined for t1 < 1")
    log_r = math.log1p(-t1) - math.log1p(-t0)
    eps = 1.0 - 2.0 * alpha
    if abs(alpha - 0.5) < HALF_WINDOW * 0.5:
        eps = 0.0
    factor = math.exp(alpha * log_r)
    var = (1.0 - t1) * math.exp(-eps * log_r) * float(_mexpm1_over(eps, log_r))
    return factor, var


# ---------------------------------------------------------------------------
# Sampling
# ---------------------------------------------------------------------------


def make_rng(seed: int, *stream: int) -> np.random.Generator:
    """Philox generator keyed by (seed, *stream); independent substreams per key."""
    entropy = [int(seed), *[int(s) for s in stream]]
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy)))


def check_grid(kind: str, grid) -> np.ndarray:
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or grid.size == 0:
        raise GridError("grid must be a non-empty 1-d sequence")
    if grid[0] != 0.0:
        raise GridError("grid must start at 0")
    if np.any(np.diff(grid) <= 0):
        raise GridError("grid must be strictly increasing")
    if kind == "bridge" and grid[-1] >= 1.0:
        raise GridError("bridge grid times must be < 1")
    return grid


def transition_tables(kind: str, alpha: float, grid) -> tuple[np.ndarray, np.ndarray]:
    """Per-step (factor, standard deviation) arrays for a validated grid."""
    grid = check_grid(kind, grid)
    steps = [transition(kind, alpha, a, b) for a, b in zip(grid[:-1], grid[1:])]
    if not steps:
        return np.empty(0), np.empty(0)
    factor, var = map(np.array, zip(*steps))
    return factor, np.sqrt(var)


def sample_paths(kind: str, alpha: float, grid, n_paths: int, rng: np.random.Generator) -> np.ndarray:
    """Array of shape (n_paths, len(grid)) of exact samples on ``grid``."""
    factor, sd = transition_tables(kind, alpha, grid)
    out = np.zeros((n_paths, factor.size + 1))
    for j in range(factor.size):
        out[:, j + 1] = factor[j] * out[:, j] + sd[j] * rng.standard_normal(n_paths)
    return out


def sample_path(kind: str, alpha: float, grid, seed: int) -> Trajectory:
    """One exact sample path on ``grid``; deterministic given ``seed``."""
    grid = check_grid(kind, grid)
    values = sample_paths(kind, alpha, grid, 1, make_rng(seed))[0]
    return Trajectory(grid, values)


# ---------------------------------------------------------------------------
# Estimation and rescaling
# ---------------------------------------------------------------------------


def weighted_square_integral(traj: Trajectory) -> float:
    """Trapezoid value of int_0^T X_s^2 / (1 - s)^2 ds on the trajectory grid."""
    s = traj.times
    return float(np.trapezoid(traj.values**2 / (1.0 - s) ** 2, s))


def mle_alpha(traj: Trajectory) -> float:
    """Maximum-likelihood estimate of the bridge scaling parameter from F_T."""
    if len(traj) < 2:
        raise DegenerateTrajectoryError("need at least two observations")
    T = traj.horizon
    if T >= 1.0:
        raise DomainError("bridge trajectory must end before t = 1")
    integral = weighted_square_integral(traj)
    if integral == 0.0:
        raise DegenerateTrajectoryError("path is identically zero; estimator undefined")
    x_T = traj.values[-1]
    return (-(x_T**2) / (1.0 - T) + integral - math.log1p(-T)) / (2.0 * integral)


def rescale_to_unit(traj: Trajectory, S: float) -> Trajectory:
    """Map a bridge observed on [0, S] to the unit interval via self-similarity."""
    if not S > 0:
        raise ParameterError("S must be positive")
    if traj.horizon > S:
        raise DomainError("trajectory extends past S")
    return Trajectory(traj.times / S, traj.values / math.sqrt(S))


# ---------------------------------------------------------------------------
# CSV interface (header "t,x")
# ---------------------------------------------------------------------------


def read_trajectory(path) -> Trajectory:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or [c.strip() for c in rows[0]] != ["t", "x"]:
        raise TrajectoryFormatError("expected header 't,x'", line=1)
    times, values = [], []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != 2:
            raise TrajectoryFormatError(f"expected 2 fields, got {len(row)}", line=lineno)
        try:
            t, x = float(row[0]), float(row[1])
        except ValueError:
            raise TrajectoryFormatError(f"cannot parse {','.join(row)!r}", line=lineno) from None
        if times and t <= times[-1]:
            raise TrajectoryFormatError(
                f"times not strictly increasing ({t!r} after {times[-1]!r})", line=lineno
            )
        times.append(t)
        values.append(x)
    if not times:
        raise TrajectoryFormatError("no data rows", line=2)
    if times[0] != 0.0 or values[0] != 0.0:
        raise TrajectoryFormatError("first row must be 0,0", line=2)
    return Trajectory(np.array(times), np.array(values))


def write_trajectory(traj: Trajectory, path) -> None:
    Path(path).write_text(format_trajectory(traj))


def format_trajectory(traj: Trajectory) -> str:
    lines = ["t,x"]
    lines += [f"{t!r},{x!r}" for t, x in zip(traj.times.tolist(), traj.values.tolist())]
    return "\n".join(lines) + "\n"


def expected_future_curve(kind: str, alpha: float, s: float, x_s: float, n: int, t_end: float | None = None):
    """(t, E[X_t | X_s = x_s]) on n + 1 equally spaced points of [s, t_end]."""
    if t_end is None:
        t_end = 1.0 if kind == "bridge" else s + 1.0
    t = np.linspace(s, t_end, n + 1)
    return t, expected_future(kind, alpha, s, t, x_s)


__all__: Sequence[str] = [
    "ProcessParams",
    "Trajectory",
    "covariance",
    "expected_future",
    "expected_future_curve",
    "transition",
    "transition_factor",
    "transition_tables",
    "sample_path",
    "sample_paths",
    "make_rng",
    "mle_alpha",
    "rescale_to_unit",
    "read_trajectory",
    "write_trajectory",
    "format_trajectory",
]
