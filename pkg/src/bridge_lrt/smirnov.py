"""Distribution of Q = sum_k lambda_k N_k^2 through Smirnov's series.

For strictly decreasing lambda_1 > lambda_2 > ... > 0 with finite sum,

    P(Q <= x) = 1 - (1/pi) sum_{k>=1} (-1)^{k+1}
                    int_{1/lambda_{2k-1}}^{1/lambda_{2k}} exp(-x u / 2) / (u sqrt|F(u)|) du,

    F(u) = prod_l (1 - lambda_l u).

Each integral has inverse square-root singularities at both ends. The
substitution u = mid + half * sin(theta) turns them into a smooth integrand
on (-pi/2, pi/2), which is then integrated by composite 64-point
Gauss-Legendre, doubling the panel count until successive values agree. The
two endpoint factors of F are evaluated from the exact gaps u - a and b - u,
which avoids cancellation on wide intervals.
"""

from __future__ import annotations

import math
from functools import lru_cache

import numpy as np
from scipy import optimize, special

from .errors import ParameterError, ToleranceError
from .gauss_models import make_rng
from .spectral import Spectrum, check_strictly_decreasing, tail_fit, tail_power_sum

GL_NODES = 64
MAX_PANELS = 4096
DEFAULT_TOL = 1e-8


@lru_cache(maxsize=None)
def _gauss_legendre(n: int):
    return np.polynomial.legendre.leggauss(n)


def _log_integral(g, A: float):
    """H(g) = int_A^inf log(1 + g / x^2) dx for g > -A^2."""
    g = np.asarray(g, dtype=float)
    r = np.sqrt(np.abs(g))
    with np.errstate(divide="ignore", invalid="ignore"):
        arc = np.where(g >= 0, r * np.arctan(r / A), -r * np.arctanh(r / A))
    return (2.0 * arc - A * np.log1p(g / A**2))[()]


class QuadraticFormDist:
    """Law of sum lambda_k N_k^2 for explicit eigenvalues plus an optional c/k^2 tail.

    With ``tail_constant = 0`` the eigenvalue list is the whole (finite) form.
    Otherwise the form is infinite: only an even number of explicit
    eigenvalues is used, and the factors of F(u) beyond them come from the
    extrapolation lambda ~ c / ((m + j)^2 + e) fitted to the last two explicit
    eigenvalues. Of those, ``product_tail_order`` are summed explicitly in log
    space and the rest are replaced by the closed-form integral of
    log(1 - c u / (x^2 + e)) dx.
    """

    def __init__(self, eigenvalues, tail_constant: float = 0.0, tol: float = DEFAULT_TOL,
                 product_tail_order: int = 512):
        lam = np.asarray(eigenvalues, dtype=float)
        if lam.ndim != 1 or lam.size == 0 or np.any(lam <= 0):
            raise ParameterError("eigenvalues must be a non-empty list of positive numbers")
        check_strictly_decreasing(lam)
        if not 1e-12 < tol <= 1e-2:
            raise ParameterError("tol must lie in (1e-12, 1e-2]")
        self.tol = float(tol)
        self.tail_constant = float(tail_constant)
        self.infinite = self.tail_constant > 0
        if self.infinite:
            lam = lam[: lam.size - lam.size % 2]
            if lam.size == 0:
                raise ToleranceError("need at least two eigenvalues for an infinite form")
            self._tail = tail_fit(lam, self.tail_constant)
        self.lam = lam
        self.truncation_k = lam.size
        self.product_tail_order = int(product_tail_order)
        self.lower = 1.0 / lam[0::2]
        upper = np.full(self.lower.size, np.inf)
        upper[: lam[1::2].size] = 1.0 / lam[1::2]
        self.upper = upper
        self._cache: dict = {}

    @classmethod
    def from_spectrum(cls, spectrum: Spectrum, tol: float = DEFAULT_TOL, **kw) -> "QuadraticFormDist":
        return cls(spectrum.eigenvalues, spectrum.tail_constant, tol, **kw)

    @property
    def n_terms(self) -> int:
        return self.lower.size

    def mean(self) -> float:
        out = self.lam.sum()
        if self.infinite:
            out += tail_power_sum(self.tail_constant, *self._tail, power=1)
        return float(out)

    def variance(self) -> float:
        out = 2.0 * (self.lam**2).sum()
        if self.infinite:
            out += 2.0 * tail_power_sum(self.tail_constant, *self._tail, power=2)
        return float(out)

    # -- F(u) -------------------------------------------------------------

    def _log_tail(self, u):
        c, (m, e), n = self.tail_constant, self._tail, self.product_tail_order
        b2 = c * u
        j = np.arange(1, n + 1)
        denom = (m + j) ** 2 + e
        # chunk over u to bound memory
        explicit = np.empty_like(u)
        flat_u, flat_out = b2.ravel(), explicit.ravel()
        step = max(1, 2_000_000 // n)
        for i in range(0, flat_u.size, step):
            blk = flat_u[i : i + step, None]
            flat_out[i : i + step] = np.log1p(-blk / denom).sum(axis=1)
        # int_A^inf log(1 - b^2 / (x^2 + e)) dx = H(e - b^2) - H(e)
        A = m + n + 0.5
        return explicit + _log_integral(e - b2, A) - _log_integral(np.float64(e), A)

    def log_abs_F(self, u):
        """log |F(u)| and the number of negative factors among the explicit ones."""
        u = np.asarray(u, dtype=float)
        prod = np.multiply.outer(u, self.lam)
        out = np.log(np.abs(1.0 - prod)).sum(axis=-1)
        n_neg = (prod > 1.0).sum(axis=-1)
        if self.infinite:
            out = out + self._log_tail(u)
        return out, n_neg

    # -- quadrature -------------------------------------------------------

    def _rule(self, k: int, panels: int):
        key = (k, panels)
        if key in self._cache:
            return self._cache[key]
        x, w = _gauss_legendre(GL_NODES)
        a, b = self.lower[k], self.upper[k]
        if math.isinf(b):
            # u = a / cos^2(theta), theta in (0, pi/2)
            edges = np.linspace(0.0, 0.5 * np.pi, panels + 1)
        else:
            # theta = phi - pi/2 with phi in (0, pi); phi keeps the endpoint gaps exact
            edges = np.linspace(0.0, np.pi, panels + 1)
        half = 0.5 * (edges[1] - edges[0])
        theta = ((edges[:-1] + edges[1:])[:, None] * 0.5 + half * x[None, :]).ravel()
        wt = np.tile(w * half, panels)
        lam_a = self.lam[2 * k]
        if math.isinf(b):
            tan2 = np.tan(theta) ** 2
            u = a / np.cos(theta) ** 2
            log_f, n_neg = self.log_abs_F(u)
            # replace log|1 - lam_a u| by its cancellation-free form lam_a (u - a)
            log_f = log_f - np.log(np.abs(1.0 - lam_a * u)) + np.log(lam_a * a * tan2)
            log_gap = math.log(a) + np.log(tan2)
            weight = wt * 2.0 / math.sqrt(a) * np.exp(-0.5 * (log_f - log_gap))
        else:
            rad = 0.5 * (b - a)
            gap_a = 2.0 * rad * np.sin(0.5 * theta) ** 2
            gap_b = 2.0 * rad * np.cos(0.5 * theta) ** 2
            u = a + gap_a
            lam_b = self.lam[2 * k + 1]
            log_f, n_neg = self.log_abs_F(u)
            log_f = (log_f - np.log(np.abs(1.0 - lam_a * u)) - np.log(np.abs(1.0 - lam_b * u))
                     + np.log(lam_a * gap_a) + np.log(lam_b * gap_b))
            weight = wt * rad * np.sin(theta) / u * np.exp(-0.5 * log_f)
        if np.any(n_neg != 2 * k + 1):
            raise ArithmeticError(
                f"F(u) sign pattern broken on interval {k}: expected {2 * k + 1} negative factors"
            )
        self._cache[key] = (u, weight)
        return u, weight

    def _term(self, k: int, x: np.ndarray) -> np.ndarray:
        """Integral k (0-based) at each x, refined until panel doubling agrees."""
        target = self.tol / (10.0 * (k + 1) ** 2)
        out = np.empty_like(x)
        todo = np.arange(x.size)
        panels = 1
        u, w = self._rule(k, panels)
        prev = np.exp(-0.5 * np.multiply.outer(x, u)) @ w
        while todo.size:
            if panels >= MAX_PANELS:
                raise ToleranceError(f"quadrature of term {k} did not converge")
            panels *= 2
            u, w = self._rule(k, panels)
            cur = np.exp(-0.5 * np.multiply.outer(x[todo], u)) @ w
            done = np.abs(cur - prev) <= target
            out[todo[done]] = cur[done]
            todo, prev = todo[~done], cur[~done]
        return out

    def _upper_bound(self, x: np.ndarray) -> np.ndarray:
        """P(Q <= x) <= prod_k P(lambda_k N_k^2 <= x)."""
        z = np.sqrt(np.maximum(x, 0.0)[:, None] / (2.0 * self.lam[None, :]))
        return np.exp(np.log(special.erf(z)).sum(axis=1))

    def cdf(self, x):
        x_arr = np.atleast_1d(np.asarray(x, dtype=float))
        result = np.zeros_like(x_arr)
        pos = np.nonzero(x_arr > 0)[0]
        if pos.size:
            xs = x_arr[pos]
            total = np.zeros_like(xs)
            open_ = np.ones(xs.size, dtype=bool)
            cut = self.tol / 10.0
            for k in range(self.n_terms):
                idx = np.nonzero(open_)[0]
                if not idx.size:
                    break
                term = self._term(k, xs[idx])
                total[idx] += (-1) ** k * term
                small = np.abs(term) < cut
                open_[idx[small]] = False
            if not self.infinite:
                open_[:] = False
            if open_.any():
                idx = np.nonzero(open_)[0]
                bound = self._upper_bound(xs[idx])
                if np.any(bound >= self.tol):
                    raise ToleranceError(
                        f"series not converged at x = {xs[idx][bound >= self.tol].min():.6g} "
                        f"with {self.truncation_k} eigenvalues; compute more eigenvalues"
                    )
                total[idx] = np.pi
            result[pos] = np.clip(1.0 - total / np.pi, 0.0, 1.0)
        if np.ndim(x) == 0:
            return float(result[0])
        return result

    def quantile(self, p: float) -> float:
        if not 0.0 < p < 1.0:
            raise ParameterError("p must lie in (0, 1)")
        hi = self.mean() + 40.0 * math.sqrt(self.variance())
        f = lambda x: self.cdf(x) - p  # noqa: E731
        f_hi = f(hi)
        if f_hi < 0:
            raise ArithmeticError(f"quantile bracket failed: cdf({hi:.6g}) = {f_hi + p:.6g} < p")
        x = optimize.brentq(f, 0.0, hi, xtol=1e-15 * hi, rtol=1e-15, maxiter=200)
        if abs(f(x)) >= self.tol:
            raise ArithmeticError(f"quantile inversion missed p = {p} by {abs(f(x)):.3g}")
        return x

    def sample(self, n: int, rng: np.random.Generator, chunk: int = 20_000) -> np.ndarray:
        """Direct draws of the explicit sum plus a moment-matched normal for the tail."""
        if n < 1:
            raise ParameterError("n must be >= 1")
        out = np.empty(n)
        if self.infinite:
            t_mean = tail_power_sum(self.tail_constant, *self._tail, power=1)
            t_sd = math.sqrt(2.0 * tail_power_sum(self.tail_constant, *self._tail, power=2))
        for i in range(0, n, chunk):
            m = min(chunk, n - i)
            z = rng.standard_normal((m, self.lam.size))
            out[i : i + m] = (z * z) @ self.lam
            if self.infinite:
                out[i : i + m] += t_mean + t_sd * rng.standard_normal(m)
        return out


def _as_dist(spectrum, tol) -> QuadraticFormDist:
    if isinstance(spectrum, QuadraticFormDist):
        return spectrum
    if isinstance(spectrum, Spectrum):
        return _dist_for_spectrum(spectrum, tol)
    return QuadraticFormDist(spectrum, 0.0, tol)


@lru_cache(maxsize=64)
def _dist_for_spectrum(spectrum: Spectrum, tol: float) -> QuadraticFormDist:
    return QuadraticFormDist.from_spectrum(spectrum, tol)


def qf_cdf(spectrum, x, tol: float = DEFAULT_TOL):
    """P(Q <= x). ``spectrum`` is a Spectrum, a QuadraticFormDist or a finite eigenvalue list."""
    return _as_dist(spectrum, tol).cdf(x)


def qf_quantile(spectrum, p: float, tol: float = DEFAULT_TOL) -> float:
    return _as_dist(spectrum, tol).quantile(p)


def sample_qf(spectrum, n: int, seed: int) -> np.ndarray:
    return _as_dist(spectrum, DEFAULT_TOL).sample(n, make_rng(seed))
