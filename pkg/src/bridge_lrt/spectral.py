"""Karhunen-Loeve spectra of the bridge and OU kernels under the test measure.

The test statistic is the squared L2(mu) norm of the observed path, where

    bridge:  mu(ds) = delta_T(ds) / (1 - T) + (alpha0 + alpha1 - 1) ds / (1 - s)^2
    ou:      mu(ds) = delta_T(ds)           + (alpha0 + alpha1) ds

on [0, T]. Its law under the kernel R^(alpha0) is sum_k lambda_k N_k^2 where
lambda_k are the eigenvalues of e -> int R(., s) e(s) mu(ds).

Regular eigenvalues are roots of a transcendental equation in the frequency
beta > 0. We solve it in a form with the tan poles and the 1/beta factors
cleared, which for the bridge with p = alpha0 - 1/2, q = alpha1 - 1/2,
L = ln(1 - T), a = alpha0 + alpha1 - 1 reads

    (beta^2 - p q) L sinc(beta L) + a cos(beta L) = 0,   lambda = a / (beta^2 + p^2)

(sinc(z) = sin(z)/z). Up to one extra eigenvalue can appear on the
non-oscillatory branch; see :func:`bridge_spectrum`.

Eigenvalues are indexed from 0. For large k the k-th one behaves like
``tail_constant / k**2``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import integrate, optimize, special
from scipy.linalg import eigh
from scipy.sparse.linalg import eigsh

from .errors import ConvergenceError, DomainError, EigenvalueTieError, ParameterError
from .gauss_models import ProcessParams, covariance

REGULAR = "regular"
LAMBDA0 = "lambda0"
LAMBDA_STAR = "lambda_star"
ENTRY_KINDS = (REGULAR, LAMBDA0, LAMBDA_STAR)

TIE_RTOL = 1e-10
RESONANCE_TOL = 1e-12
DEFAULT_N_EIGS = 200


@dataclass(frozen=True)
class SpectralMeasure:
    atom_location: float
    atom_weight: float
    density_coeff: float
    density_support_end: float
    density_shape: str  # "bridge": (1-s)^-2, "ou": 1

    def density(self, s):
        s = np.asarray(s, dtype=float)
        if self.density_shape == "bridge":
            return self.density_coeff / (1.0 - s) ** 2
        return np.full_like(s, self.density_coeff)

    def total_mass(self) -> float:
        T = self.density_support_end
        if self.density_shape == "bridge":
            return self.atom_weight + self.density_coeff * T / (1.0 - T)
        return self.atom_weight + self.density_coeff * T

    def integrate(self, f, points=None, epsabs=1e-13, epsrel=1e-11, limit=400) -> float:
        """int f dmu, with adaptive quadrature on the density part."""
        T = self.density_support_end
        dens, _ = integrate.quad(
            lambda s: f(s) * float(self.density(s)),
            0.0,
            T,
            points=points,
            epsabs=epsabs,
            epsrel=epsrel,
            limit=limit,
        )
        return self.atom_weight * f(self.atom_location) + dens


def build_measure(params: ProcessParams) -> SpectralMeasure:
    T = params.T
    if params.kind == "bridge":
        if params.unit_sum or params.density_coeff <= 0:
            raise ParameterError(
                "bridge spectral measure needs alpha0 + alpha1 > 1; "
                "alpha0 + alpha1 = 1 uses the closed-form branch"
            )
        return SpectralMeasure(T, 1.0 / (1.0 - T), params.density_coeff, T, "bridge")
    return SpectralMeasure(T, 1.0, params.density_coeff, T, "ou")


@dataclass(frozen=True)
class SpectrumEntry:
    lam: float
    kind: str
    shape_param: float

    def to_dict(self) -> dict:
        return {"lambda": self.lam, "kind": self.kind, "shape_param": self.shape_param}


@dataclass(frozen=True)
class Spectrum:
    """Leading eigenvalues (strictly decreasing) plus the tail law c / k^2."""

    params: ProcessParams
    entries: tuple
    tail_constant: float

    def __post_init__(self):
        lam = np.array([e.lam for e in self.entries])
        if lam.size == 0:
            raise ParameterError("spectrum needs at least one eigenvalue")
        if np.any(lam <= 0):
            raise ParameterError("eigenvalues must be positive")
        check_strictly_decreasing(lam)
        if not self.tail_constant > 0:
            raise ParameterError("tail constant must be positive")

    @property
    def eigenvalues(self) -> np.ndarray:
        return np.array([e.lam for e in self.entries])

    def __len__(self):
        return len(self.entries)

    def truncated(self, n: int) -> "Spectrum":
        return Spectrum(self.params, self.entries[:n], self.tail_constant)

    # Tail beyond the explicit list: lambda_{n-1+j} ~ c / ((m + j)^2 + e), see tail_fit.
    def tail_model(self) -> tuple[float, float]:
        return tail_fit(self.eigenvalues, self.tail_constant)

    def tail_eigenvalues(self, count: int) -> np.ndarray:
        m, e = self.tail_model()
        j = np.arange(1, count + 1)
        return self.tail_constant / ((m + j) ** 2 + e)

    def tail_sum(self) -> float:
        return tail_power_sum(self.tail_constant, *self.tail_model(), power=1)

    def tail_sum_squares(self) -> float:
        return tail_power_sum(self.tail_constant, *self.tail_model(), power=2)

    def total_sum(self) -> float:
        return float(self.eigenvalues.sum()) + self.tail_sum()

    def total_sum_squares(self) -> float:
        return float((self.eigenvalues**2).sum()) + self.tail_sum_squares()

    def to_dict(self) -> dict:
        d = self.params.to_dict()
        d["eigenvalues"] = [e.to_dict() for e in self.entries]
        d["tail_constant"] = self.tail_constant
        return d

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)

    @classmethod
    def from_dict(cls, d: dict) -> "Spectrum":
        params = ProcessParams(d["kind"], d["alpha0"], d["alpha1"], d["T"])
        entries = []
        for e in d["eigenvalues"]:
            if e["kind"] not in ENTRY_KINDS:
                raise ParameterError(f"unknown eigenvalue kind {e['kind']!r}")
            entries.append(SpectrumEntry(float(e["lambda"]), e["kind"], float(e["shape_param"])))
        return cls(params, tuple(entries), float(d["tail_constant"]))

    @classmethod
    def from_json(cls, text: str) -> "Spectrum":
        return cls.from_dict(json.loads(text))


def tail_fit(lam, c: float) -> tuple[float, float]:
    """(m, e) with c / lam = (m - i)^2 + e matched on the last two eigenvalues.

    The branch asymptotics give c / lambda_k = (k + d)^2 + e + O(1/k^2); e
    collects the shift beta^2 + p^2 and the 1/k drift of the branch offset.
    With a single eigenvalue e is taken as 0.
    """
    lam = np.asarray(lam, dtype=float)
    x_last = c / lam[-1]
    if lam.size < 2:
        return math.sqrt(x_last), 0.0
    m = 0.5 * (x_last - c / lam[-2] + 1.0)
    return m, x_last - m * m


def tail_power_sum(c: float, m: float, e: float, power: int, explicit: int = 64, terms: int = 8) -> float:
    """sum_{j>=1} (c / ((m + j)^2 + e))^power.

    The first ``explicit`` terms are summed directly, the rest through the
    expansion in e / (m + j)^2 with Hurwitz zeta values.
    """
    j = np.arange(1, explicit + 1)
    total = float(np.sum(((m + j) ** 2 + e) ** -float(power)))
    coef = 1.0
    for i in range(terms):
        # (1 + z)^-power = sum_i binom(-power, i) z^i
        total += coef * e**i * special.zeta(2.0 * (power + i), m + explicit + 1.0)
        coef *= -(power + i) / (i + 1)
    return float(c**power * total)


def check_strictly_decreasing(lam) -> None:
    lam = np.asarray(lam, dtype=float)
    gaps = lam[:-1] - lam[1:]
    bad = np.nonzero(gaps <= TIE_RTOL * np.abs(lam[:-1]))[0]
    if bad.size:
        i = int(bad[0])
        raise EigenvalueTieError(
            f"eigenvalues {i} and {i + 1} are not strictly decreasing "
            f"({lam[i]!r}, {lam[i + 1]!r}); the series formula needs distinct values"
        )


# ---------------------------------------------------------------------------
# Exceptional-case gates (bridge)
# ---------------------------------------------------------------------------


def c_threshold(alpha0: float, alpha1: float, T: float) -> float:
    """Below this value of min(alpha0, alpha1) a non-oscillatory eigenvalue exists."""
    L = math.log1p(-T)
    h = 0.5 - max(alpha0, alpha1)
    return h / (h * L + 1.0) + 0.5


def resonance_alpha1(alpha0: float, T: float) -> float:
    """The alpha1 for which sigma^2 = 0 is an eigenvalue (eigenfunction sqrt(1-t) ln(1-t))."""
    L = math.log1p(-T)
    d = 1.0 - 2.0 * alpha0
    denom = 2.0 * d * L + 4.0
    if denom == 0.0:
        return math.inf
    return 1.0 - alpha0 - d * d * L / denom


def is_resonant(params: ProcessParams) -> bool:
    a0, a1, T = params.alpha0, params.alpha1, params.T
    # The condition is symmetric in (alpha0, alpha1); test both readings so the
    # swapped-kernel spectrum agrees with the direct one.
    return (
        abs(a1 - resonance_alpha1(a0, T)) < RESONANCE_TOL
        or abs(a0 - resonance_alpha1(a1, T)) < RESONANCE_TOL
    )


def G_function(sigma, alpha0: float, alpha1: float, T: float):
    p, q = alpha0 - 0.5, alpha1 - 0.5
    return (sigma + p) * (sigma + q) - (1.0 - T) ** (2.0 * sigma) * (sigma - p) * (sigma - q)


def sigma0(alpha0: float, alpha1: float, T: float) -> float:
    """Unique root of G on (0, 1/2 - min(alpha0, alpha1)); G(0) = 0 is excluded."""
    lo, hi = 1e-12, 0.5 - min(alpha0, alpha1)
    g_lo, g_hi = G_function(lo, alpha0, alpha1, T), G_function(hi, alpha0, alpha1, T)
    if not (g_lo < 0 < g_hi):
        raise ConvergenceError(
            f"G has no sign change on [{lo}, {hi}] (G = {g_lo:.3e}, {g_hi:.3e})"
        )
    return optimize.brentq(G_function, lo, hi, args=(alpha0, alpha1, T), xtol=1e-300, rtol=1e-15)


# ---------------------------------------------------------------------------
# Root equations (pole free)
# ---------------------------------------------------------------------------


def bridge_root_function(beta, params: ProcessParams):
    L = math.log1p(-params.T)
    p, q = params.alpha0 - 0.5, params.alpha1 - 0.5
    a = params.alpha0 + params.alpha1 - 1.0
    beta = np.asarray(beta, dtype=float)
    return (beta * beta - p * q) * L * np.sinc(beta * L / np.pi) + a * np.cos(beta * L)


def ou_root_function(beta, params: ProcessParams):
    T = params.T
    a0, a1 = params.alpha0, params.alpha1
    beta = np.asarray(beta, dtype=float)
    return (beta * beta - a0 * a1) * T * np.sinc(beta * T / np.pi) - (a0 + a1) * np.cos(beta * T)


def tan_form_residual(lam: float, params: ProcessParams) -> float:
    """Residual of the equation as printed with tan; only meaningful away from its poles."""
    a0, a1, T = params.alpha0, params.alpha1, params.T
    if params.kind == "bridge":
        beta = math.sqrt((a0 + a1 - 1.0) / lam - a0 * (a0 - 1.0) - 0.25)
        return math.tan(beta * math.log1p(-T)) + lam * beta / (1.0 + lam / 2.0 - lam * a0)
    beta = math.sqrt((a0 + a1) / lam - a0 * a0)
    return math.tan(beta * T) - lam * beta / (1.0 - lam * a0)


def _scan_roots(fn, start: float, step: float, n_roots: int, tol: float) -> list:
    roots: list = []
    lo = start
    f_lo = float(fn(lo))
    if f_lo == 0.0 and lo > 0:
        roots.append(lo)
    chunk = 8 * (n_roots + 4)
    while len(roots) < n_roots:
        grid = lo + step * np.arange(1, chunk + 1)
        vals = fn(grid)
        prev_x, prev_f = lo, f_lo
        for x, f in zip(grid, vals):
            if f == 0.0:
                roots.append(float(x))
            elif prev_f != 0.0 and np.sign(f) != np.sign(prev_f):
                roots.append(optimize.brentq(fn, prev_x, x, xtol=1e-300, rtol=max(tol, 1e-15)))
            prev_x, prev_f = x, f
            if len(roots) >= n_roots:
                break
        lo, f_lo = float(grid[-1]), float(vals[-1])
    return roots


def bridge_spectrum(params: ProcessParams, n_eigs: int = DEFAULT_N_EIGS, tol: float = 1e-14) -> Spectrum:
    """Largest ``n_eigs`` eigenvalues for the bridge kernel R^(alpha0) under mu.

    Regular entries carry their frequency beta as ``shape_param``. Two kinds of
    non-oscillatory entries can join them:

    * ``lambda0`` when min(alpha0, alpha1) < :func:`c_threshold`; shape_param is
      the root sigma0 of :func:`G_function` and the value is
      a / (p^2 - sigma0^2) with p the kernel's alpha0 - 1/2.
    * ``lambda_star`` = a / p^2 at the resonance :func:`resonance_alpha1`.

    The two never occur together: the resonance is exactly the boundary
    min(alpha0, alpha1) = c_threshold where sigma0 reaches 0.
    """
    if params.kind != "bridge":
        raise ParameterError("bridge_spectrum needs a bridge parameter set")
    if n_eigs < 1:
        raise ParameterError("n_eigs must be >= 1")
    build_measure(params)  # domain check
    a0, a1, T = params.alpha0, params.alpha1, params.T
    a = a0 + a1 - 1.0
    p = a0 - 0.5
    L = math.log1p(-T)

    extra = []
    resonant = is_resonant(params)
    if resonant:
        extra.append(SpectrumEntry(a / (p * p), LAMBDA_STAR, 0.0))
    elif min(a0, a1) < c_threshold(a0, a1, T):
        s0 = sigma0(a0, a1, T)
        extra.append(SpectrumEntry(a / (p * p - s0 * s0), LAMBDA0, s0))

    step = math.pi / (8.0 * abs(L))
    fn = lambda b: bridge_root_function(b, params)  # noqa: E731
    # At resonance beta = 0 is a double root of an even function; start one step out.
    start = step if resonant else 0.0
    betas = _scan_roots(fn, start, step, n_eigs - len(extra), tol)
    regular = [SpectrumEntry(a / (b * b + p * p), REGULAR, b) for b in betas]

    entries = sorted(extra + regular, key=lambda e: -e.lam)[:n_eigs]
    return Spectrum(params, tuple(entries), a * L * L / math.pi**2)


def ou_spectrum(params: ProcessParams, n_eigs: int = DEFAULT_N_EIGS, tol: float = 1e-14) -> Spectrum:
    """Largest ``n_eigs`` eigenvalues for the OU kernel under mu (all oscillatory)."""
    if params.kind != "ou":
        raise ParameterError("ou_spectrum needs an ou parameter set")
    if n_eigs < 1:
        raise ParameterError("n_eigs must be >= 1")
    a0, a1, T = params.alpha0, params.alpha1, params.T
    b = a0 + a1
    fn = lambda x: ou_root_function(x, params)  # noqa: E731
    betas = _scan_roots(fn, 0.0, math.pi / (8.0 * T), n_eigs, tol)
    entries = tuple(SpectrumEntry(b / (x * x + a0 * a0), REGULAR, x) for x in betas)
    return Spectrum(params, entries, b * T * T / math.pi**2)


def compute_spectrum(params: ProcessParams, n_eigs: int = DEFAULT_N_EIGS, tol: float = 1e-14) -> Spectrum:
    if params.kind == "bridge":
        return bridge_spectrum(params, n_eigs, tol)
    return ou_spectrum(params, n_eigs, tol)


@lru_cache(maxsize=64)
def cached_spectrum(params: ProcessParams, n_eigs: int = DEFAULT_N_EIGS) -> Spectrum:
    return compute_spectrum(params, n_eigs)


# ---------------------------------------------------------------------------
# Eigenfunctions
# ---------------------------------------------------------------------------


def _shape(entry: SpectrumEntry, kind: str, t):
    t = np.asarray(t, dtype=float)
    if kind == "ou":
        return np.sin(entry.shape_param * t)
    v = -np.log1p(-t)  # v = -ln(1 - t) >= 0
    root = np.sqrt(1.0 - t)
    if entry.kind == REGULAR:
        return -root * np.sin(entry.shape_param * v)
    if entry.kind == LAMBDA0:
        return -2.0 * root * np.sinh(entry.shape_param * v)
    return -root * v


def _shape_norm2(entry: SpectrumEntry, params: ProcessParams) -> float:
    a = params.density_coeff
    if params.kind == "ou":
        beta, T = entry.shape_param, params.T
        return math.sin(beta * T) ** 2 + a * (T / 2.0 - math.sin(2.0 * beta * T) / (4.0 * beta))
    V = -math.log1p(-params.T)
    if entry.kind == REGULAR:
        beta = entry.shape_param
        return math.sin(beta * V) ** 2 + a * (V / 2.0 - math.sin(2.0 * beta * V) / (4.0 * beta))
    if entry.kind == LAMBDA0:
        s = entry.shape_param
        return 4.0 * math.sinh(s * V) ** 2 + a * (math.sinh(2.0 * s * V) / s - 2.0 * V)
    return V**2 + a * V**3 / 3.0


def eigenfunction(entry: SpectrumEntry, params: ProcessParams, t):
    """Value at ``t`` of the eigenfunction normalised in L2(mu)."""
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr < 0) or np.any(t_arr > params.T):
        raise DomainError(f"t must lie in [0, {params.T}]")
    return (_shape(entry, params.kind, t_arr) / math.sqrt(_shape_norm2(entry, params)))[()]


# ---------------------------------------------------------------------------
# Numerical oracles
# ---------------------------------------------------------------------------


def _nystrom_eigs(kernel, nodes, weights, n_top=None) -> np.ndarray:
    nodes = np.asarray(nodes, dtype=float)
    sw = np.sqrt(np.asarray(weights, dtype=float))
    mat = sw[:, None] * kernel(nodes[:, None], nodes[None, :]) * sw[None, :]
    if n_top is not None and n_top < nodes.size - 1:
        vals = eigsh(mat, k=n_top, which="LA", return_eigenvectors=False, tol=1e-13)
    else:
        vals = eigh(mat, eigvals_only=True)
    return np.sort(vals)[::-1]


def nystrom_nodes(params: ProcessParams, grid_n: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes on [0, T] weighted by the density, plus the atom."""
    if grid_n < 16:
        raise ParameterError("grid_n must be >= 16")
    m = build_measure(params)
    x, w = special.roots_legendre(grid_n)
    s = 0.5 * m.density_support_end * (x + 1.0)
    w = 0.5 * m.density_support_end * w * m.density(s)
    return np.append(s, m.atom_location), np.append(w, m.atom_weight)


def nystrom_spectrum(params: ProcessParams, grid_n: int, n_top: int | None = None) -> np.ndarray:
    """Eigenvalues (decreasing) of the discretised operator, from the kernel directly.

    Independent of the root-finding path: uses only :func:`covariance` and the
    measure. ``n_top`` restricts to the leading eigenvalues (Lanczos).
    """
    nodes, weights = nystrom_nodes(params, grid_n)
    kernel = lambda s, t: covariance(params.kind, params.alpha0, s, t)  # noqa: E731
    return _nystrom_eigs(kernel, nodes, weights, n_top)


def trace_integral(params: ProcessParams) -> float:
    """int R(s, s) mu(ds), the mean of the test statistic under H0."""
    m = build_measure(params)
    var = lambda s: float(covariance(params.kind, params.alpha0, s, s))  # noqa: E731
    return m.integrate(var, epsabs=0.0, epsrel=1e-12)


def integral_operator(entry: SpectrumEntry, params: ProcessParams, t: float, epsrel: float = 1e-9) -> float:
    """int R(t, s) e(s) mu(ds) by adaptive quadrature (split at the kink s = t)."""
    m = build_measure(params)
    kern = lambda s: float(covariance(params.kind, params.alpha0, t, s)) * float(  # noqa: E731
        eigenfunction(entry, params, s)
    )
    pts = [t] if 0.0 < t < params.T else None
    return m.integrate(kern, points=pts, epsabs=1e-13, epsrel=epsrel)
