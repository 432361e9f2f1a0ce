"""Monte Carlo harness: path ensembles of psi, empirical CDFs and KS checks.

Paths are generated in fixed-size blocks, block ``b`` drawing from the
Philox substream keyed by (seed, hypothesis tag, b), so results do not depend
on how many worker threads process the blocks. Each block is advanced one
grid step at a time and psi is accumulated on the fly, which keeps memory at
O(block size) instead of O(paths x steps).
"""

from __future__ import annotations

import csv
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from .decision import critical_psi, likelihood_ratio, lr_cdf, psi_distribution
from .errors import ParameterError
from .gauss_models import ProcessParams, check_grid, make_rng, transition_tables

BLOCK_SIZE = 8192
THREADS_ENV = "BRIDGE_LRT_THREADS"
_HYP_TAG = {"H0": 0, "H1": 1}


class EmpiricalCDF:
    """Right-continuous empirical distribution function of a sample."""

    def __init__(self, samples):
        x = np.sort(np.asarray(samples, dtype=float).ravel())
        if x.size == 0:
            raise ParameterError("empirical CDF needs at least one sample")
        self.samples = x
        self.n = x.size

    def __call__(self, q):
        return (np.searchsorted(self.samples, q, side="right") / self.n)[()]

    def left_limit(self, q):
        """F(q-) = P(X < q)."""
        return (np.searchsorted(self.samples, q, side="left") / self.n)[()]


def empirical_cdf(samples) -> EmpiricalCDF:
    return EmpiricalCDF(samples)


def ks_distance(cdf_a: Callable, cdf_b: Callable, probe_points) -> float:
    """sup |a - b| over the probes, plus every jump of an empirical argument (both sides)."""
    probes = np.asarray(probe_points, dtype=float).ravel()
    if probes.size < 100:
        raise ParameterError("ks_distance needs at least 100 probe points")
    jumps = [c.samples for c in (cdf_a, cdf_b) if isinstance(c, EmpiricalCDF)]
    pts = np.unique(np.concatenate([probes, *jumps]))
    d = np.max(np.abs(np.asarray(cdf_a(pts), float) - np.asarray(cdf_b(pts), float)))
    if jumps:
        left = lambda c: c.left_limit(pts) if isinstance(c, EmpiricalCDF) else c(pts)  # noqa: E731
        d = max(d, np.max(np.abs(np.asarray(left(cdf_a), float) - np.asarray(left(cdf_b), float))))
    return float(d)


def ks_statistic(samples, cdf: Callable) -> float:
    """Exact one-sample KS distance of ``samples`` from a continuous ``cdf``."""
    x = np.sort(np.asarray(samples, dtype=float).ravel())
    n = x.size
    if n == 0:
        raise ParameterError("need at least one sample")
    F = np.asarray(cdf(x), dtype=float)
    i = np.arange(1, n + 1)
    return float(max(np.max(i / n - F), np.max(F - (i - 1) / n)))


def make_grid(params: ProcessParams, grid_step: float) -> np.ndarray:
    """Uniform grid on [0, T] with spacing at most ``grid_step``."""
    if not grid_step > 0:
        raise ParameterError("grid_step must be positive")
    m = max(1, math.ceil(params.T / grid_step - 1e-9))
    return np.linspace(0.0, params.T, m + 1)


def _workers(workers: Optional[int]) -> int:
    if workers is None:
        workers = int(os.environ.get(THREADS_ENV, "1") or 1)
    return max(1, int(workers))


def _psi_block(params: ProcessParams, alpha: float, grid: np.ndarray, factor, sd, n: int,
               rng: np.random.Generator) -> np.ndarray:
    h = np.diff(grid)
    if params.kind == "bridge":
        w = 1.0 / (1.0 - grid) ** 2
    else:
        w = np.ones_like(grid)
    x = np.zeros(n)
    f_prev = np.zeros(n)
    integral = np.zeros(n)
    for j in range(factor.size):
        x = factor[j] * x + sd[j] * rng.standard_normal(n)
        f = w[j + 1] * x * x
        integral += 0.5 * h[j] * (f_prev + f)
        f_prev = f
    atom = x * x / (1.0 - params.T) if params.kind == "bridge" else x * x
    return atom + params.density_coeff * integral


def simulate_psi(params: ProcessParams, n_paths: int, grid_step: float, seed: int,
                 hypothesis: str = "H0", workers: Optional[int] = None) -> np.ndarray:
    """psi for ``n_paths`` exact-transition paths under ``hypothesis``; ordered by path index."""
    if hypothesis not in _HYP_TAG:
        raise ParameterError("hypothesis must be 'H0' or 'H1'")
    if n_paths < 1:
        raise ParameterError("n_paths must be >= 1")
    alpha = params.alpha0 if hypothesis == "H0" else params.alpha1
    grid = check_grid(params.kind, make_grid(params, grid_step))
    factor, sd = transition_tables(params.kind, alpha, grid)
    starts = list(range(0, n_paths, BLOCK_SIZE))

    def run(b: int) -> np.ndarray:
        n = min(BLOCK_SIZE, n_paths - starts[b])
        rng = make_rng(seed, _HYP_TAG[hypothesis], b)
        return _psi_block(params, alpha, grid, factor, sd, n, rng)

    n_workers = min(_workers(workers), len(starts))
    if n_workers == 1:
        blocks = [run(b) for b in range(len(starts))]
    else:
        with ThreadPoolExecutor(n_workers) as pool:
            blocks = list(pool.map(run, range(len(starts))))
    return np.concatenate(blocks)


def rejection_rate(params: ProcessParams, q: float, n_paths: int, grid_step: float, seed: int,
                   hypothesis: str = "H0", psi: Optional[np.ndarray] = None) -> float:
    """Fraction of simulated paths with phi > c(q)."""
    params.require_distinct()
    if psi is None:
        psi = simulate_psi(params, n_paths, grid_step, seed, hypothesis)
    c = critical_psi(params, q)
    # phi > c  <=>  psi < c_psi (alpha0 < alpha1), psi > c_psi otherwise
    hits = psi < c if params.alpha0 < params.alpha1 else psi > c
    return float(np.mean(hits))


@dataclass
class ValidationReport:
    n_paths: int
    grid_step: float
    ks_psi: float
    ks_phi: Optional[float]
    rejection_rate: Optional[float]
    seed: int
    q: float = 0.05
    params: Optional[dict] = None
    note: str = ""

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)

    @classmethod
    def from_dict(cls, d: dict) -> "ValidationReport":
        return cls(**d)


def write_psi_phi_csv(path, psi: np.ndarray, phi: Optional[np.ndarray]) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["psi", "phi"])
        for i in range(psi.size):
            w.writerow([repr(float(psi[i])), "" if phi is None else repr(float(phi[i]))])


def validate(params: ProcessParams, n_paths: int = 100_000, grid_step: float = 5e-4, q: float = 0.05,
             seed: int = 0, workers: Optional[int] = None, dump: Optional[str] = None) -> ValidationReport:
    """Simulate H0 paths and compare psi and phi with their exact laws.

    ``ks_phi`` and ``rejection_rate`` need alpha0 != alpha1 (otherwise phi is
    identically 1) and are reported as None in that case.
    """
    if n_paths < 1000:
        raise ParameterError("validate needs n_paths >= 1000")
    if not 0 < grid_step <= 1e-2 * params.T:
        raise ParameterError("validate needs 0 < grid_step <= 1e-2 * T")
    psi = simulate_psi(params, n_paths, grid_step, seed, "H0", workers)
    ks_psi = ks_statistic(psi, psi_distribution(params, "H0").cdf)
    ks_phi = rate = phi = None
    if params.distinct:
        phi = likelihood_ratio(params, psi)
        ks_phi = ks_statistic(phi, lambda x: lr_cdf(params, x, "H0"))
        rate = rejection_rate(params, q, n_paths, grid_step, seed, psi=psi)
    if dump is not None:
        write_psi_phi_csv(dump, psi, phi)
    return ValidationReport(
        n_paths=int(n_paths),
        grid_step=float(params.T / (make_grid(params, grid_step).size - 1)),
        ks_psi=ks_psi,
        ks_phi=ks_phi,
        rejection_rate=rate,
        seed=int(seed),
        q=float(q),
        params=params.to_dict(),
        note="exact transitions; psi integral by trapezoid on the simulation grid",
    )


def simulate_trajectories(params: ProcessParams, n_paths: int, grid_step: float, seed: int,
                          hypothesis: str = "H0") -> tuple[np.ndarray, np.ndarray]:
    """Full paths (grid, array of shape (n_paths, len(grid))) for small ensembles."""
    alpha = params.alpha0 if hypothesis == "H0" else params.alpha1
    grid = check_grid(params.kind, make_grid(params, grid_step))
    factor, sd = transition_tables(params.kind, alpha, grid)
    rng = make_rng(seed, _HYP_TAG[hypothesis])
    out = np.zeros((n_paths, grid.size))
    for j in range(factor.size):
        out[:, j + 1] = factor[j] * out[:, j] + sd[j] * rng.standard_normal(n_paths)
    return grid, out
