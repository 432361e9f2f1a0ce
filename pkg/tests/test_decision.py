import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from bridge_lrt import __version__
from bridge_lrt.decision import (
    POWER_METHOD,
    TestReport,
    closed_form_D,
    critical_psi,
    critical_value,
    likelihood_ratio,
    lr_cdf,
    p_value,
    phi_bound,
    power,
    psi_distribution,
    psi_statistic,
    run_test,
)
from bridge_lrt.errors import DomainError, ParameterError
from bridge_lrt.gauss_models import ProcessParams, Trajectory, sample_path
from bridge_lrt.simulate import ks_statistic, simulate_psi
from bridge_lrt.spectral import trace_integral

P12 = ProcessParams("bridge", 1.0, 2.0, 0.5)
P21 = ProcessParams("bridge", 2.0, 1.0, 0.5)
P01 = ProcessParams("bridge", 0.0, 1.0, 0.3)
OU = ProcessParams("ou", 1.0, 2.0, 1.0)


def zero_path(T, n=11):
    return Trajectory(np.linspace(0, T, n), np.zeros(n))


class TestPsi:
    def test_zero_path(self):
        assert psi_statistic(P12, zero_path(0.5)) == 0.0

    def test_unit_sum_reduces_to_endpoint(self):
        traj = sample_path("bridge", 0.0, np.linspace(0, 0.3, 31), seed=2)
        assert psi_statistic(P01, traj) == pytest.approx(traj.values[-1] ** 2 / 0.7, rel=1e-15)

    def test_trapezoid(self):
        t = np.array([0.0, 0.25, 0.5])
        x = np.array([0.0, 0.4, -0.2])
        integral = 0.125 * (0 + 0.16 / 0.75**2) + 0.125 * (0.16 / 0.75**2 + 0.04 / 0.25)
        assert psi_statistic(P12, Trajectory(t, x)) == pytest.approx(0.04 / 0.5 + 2.0 * integral)

    def test_ou(self):
        t = np.array([0.0, 0.5, 1.0])
        x = np.array([0.0, 1.0, 2.0])
        assert psi_statistic(OU, Trajectory(t, x)) == pytest.approx(4.0 + 3.0 * (0.25 * 1 + 0.25 * 5))

    def test_must_reach_T(self):
        with pytest.raises(DomainError):
            psi_statistic(P12, zero_path(0.4))
        psi_statistic(P12, Trajectory([0.0, 0.5 - 5e-10], [0.0, 0.0]))

    def test_mean_matches_trace(self):
        psi = simulate_psi(P12, 20_000, 2e-3, seed=4)
        assert abs(psi.mean() - trace_integral(P12)) < 4 * psi.std() / math.sqrt(psi.size)


class TestLikelihoodRatio:
    def test_unity(self):
        assert likelihood_ratio(P12, -math.log(0.5)) == pytest.approx(1.0, rel=1e-15)
        assert likelihood_ratio(OU, 1.0) == 1.0

    def test_bound_at_zero(self):
        assert likelihood_ratio(P12, 0.0) == pytest.approx(0.5 ** (-0.5), rel=1e-15)
        assert phi_bound(P12) == pytest.approx(math.sqrt(2))

    def test_negative_psi(self):
        with pytest.raises(DomainError):
            likelihood_ratio(P12, -0.1)

    def test_vectorised(self):
        out = likelihood_ratio(P12, np.array([0.0, 1.0]))
        assert out.shape == (2,)


class TestClosedForm:
    T = 0.3

    def printed(self, x):
        T = self.T
        return 2 - 2 * stats.norm.cdf(np.sqrt((1 - T) * (-2 * np.log(x) - np.log(1 - T)) / T))

    def test_matches_gaussian_form(self):
        # stops short of the support edge, where D has a square-root singularity
        # and both sides differ by O(sqrt(machine eps)) from rounding in ln x
        x = np.linspace(0.05, 0.999 / math.sqrt(0.7), 40)
        assert np.max(np.abs(lr_cdf(P01, x) - self.printed(x))) < 1e-12

    def test_outside_support(self):
        assert lr_cdf(P01, 1.0 / math.sqrt(0.7) * 1.001) == 1.0
        assert lr_cdf(P01, 1e6) == 1.0
        assert lr_cdf(P01, 0.0) == 0.0

    def test_critical_value_inverts_display(self):
        q = 0.05
        z = stats.norm.ppf(1 - (1 - q) / 2)  # 2 - 2 Phi(z) = 1 - q
        y = self.T * z * z / (1 - self.T)
        c = math.exp(-0.5 * (y + math.log(1 - self.T)))
        assert critical_value(P01, q) == pytest.approx(c, rel=1e-12)

    def test_increasing_orientation(self):
        p = ProcessParams("bridge", 0.8, 0.2, 0.4)
        x = np.linspace(0.8, 2.0, 9)
        assert np.allclose(lr_cdf(p, x), 1 - closed_form_D(p, x), atol=1e-14)

    def test_continuity_into_general_branch(self):
        for a0 in [0.0, 0.3, 0.7]:
            edge = ProcessParams("bridge", a0, 1 - a0, 0.3)
            near = ProcessParams("bridge", a0, 1 - a0 + 1e-4, 0.3)
            lo = likelihood_ratio(edge, psi_distribution(edge).quantile(0.99))
            x = np.linspace(lo, phi_bound(edge), 7)[1:-1]
            assert np.max(np.abs(lr_cdf(near, x) - lr_cdf(edge, x))) < 5e-3


class TestLrCdf:
    @pytest.mark.parametrize("params", [P12, P21, OU, ProcessParams("ou", 2.0, 0.5, 2.0)])
    def test_support(self, params):
        b = phi_bound(params)
        if params.alpha0 < params.alpha1:
            assert lr_cdf(params, b * 1.0001) == 1.0
        else:
            assert lr_cdf(params, b * 0.9999) == 0.0

    @pytest.mark.parametrize("params", [P12, P21])
    def test_orientation(self, params):
        # P(phi <= x) through psi directly, on both sides of the main theorem's cases
        F = psi_distribution(params).cdf
        for x in [0.9, 1.2, 1.35, 1.6]:
            y = 2 * math.log(x) / (params.alpha0 - params.alpha1) - math.log(0.5)
            if y <= 0:
                continue
            expected = F(y) if params.alpha0 > params.alpha1 else 1 - F(y)
            assert lr_cdf(params, x) == pytest.approx(expected, abs=1e-14)

    def test_monotone(self):
        x = np.linspace(0.5, 1.5, 60)
        assert np.all(np.diff(lr_cdf(P12, x)) >= -1e-12)
        assert np.all(np.diff(lr_cdf(P21, np.linspace(0.5, 3, 60))) >= -1e-12)

    def test_equal_alphas_rejected(self):
        with pytest.raises(ParameterError):
            lr_cdf(ProcessParams("bridge", 1.0, 1.0, 0.5), 1.0)

    def test_vs_simulation(self):
        psi = simulate_psi(P12, 20_000, 1e-3, seed=8)
        assert ks_statistic(likelihood_ratio(P12, psi), lambda x: lr_cdf(P12, x)) < 2e-2


class TestCriticalValue:
    @pytest.mark.parametrize("params", [P12, P21, OU, P01])
    @pytest.mark.parametrize("q", [0.01, 0.05, 0.5])
    def test_consistency(self, params, q):
        c = critical_value(params, q)
        assert lr_cdf(params, c) == pytest.approx(1 - q, abs=1e-8)

    def test_q_to_one_tends_to_lower_bound(self):
        # alpha0 > alpha1: phi >= bound, and c(q) decreases to it as q -> 1
        b = phi_bound(P21)
        cs = [critical_value(P21, q) for q in (0.9, 0.99, 0.999, 1 - 1e-6)]
        assert all(a > c > b for a, c in zip(cs, cs[1:]))
        # no mass below the bound, so the limit of c(q) is the bound itself
        assert lr_cdf(P21, b) == 0.0 and lr_cdf(P21, cs[-1]) == pytest.approx(1e-6, abs=1e-8)

    @pytest.mark.parametrize("q", [0.0, 1.0])
    def test_level_domain(self, q):
        with pytest.raises(ParameterError):
            critical_value(P12, q)


class TestPower:
    def test_near_equal_hypotheses(self):
        p = ProcessParams("bridge", 1.0, 1.001, 0.5)
        assert abs(power(p, 0.05) - 0.05) < 2e-2

    @pytest.mark.parametrize(
        "params",
        [P12, P21, OU, ProcessParams("bridge", 1.0, 2.0, 0.9), ProcessParams("bridge", 0.2, 3.0, 0.6)],
    )
    def test_at_least_level(self, params):
        # a Neyman-Pearson test is unbiased; recorded as a numerical check
        assert power(params, 0.05) >= 0.05 - 1e-8

    def test_closed_form_power(self):
        # H1 for (0, 1, T): X_T ~ N(0, T(1-T)), psi = X_T^2 / (1 - T) ~ T N^2; reject iff psi < c
        c = critical_psi(P01, 0.05)
        expected = stats.chi2.cdf(c / 0.3, 1)
        assert power(P01, 0.05) == pytest.approx(expected, abs=1e-12)


class TestRunTest:
    def test_zero_path_rejects(self):
        for q in [0.01, 0.05, 0.5]:
            rep = run_test(P12, zero_path(0.5), q)
            assert rep.reject and rep.phi == pytest.approx(phi_bound(P12))
            assert rep.p_value == 0.0

    def test_report_fields(self):
        traj = sample_path("bridge", 1.0, np.linspace(0, 0.5, 101), seed=3)
        rep = run_test(P12, traj, 0.05, with_power=True)
        assert rep.reject == (rep.phi > rep.critical_value)
        assert 0 <= rep.p_value <= 1
        assert rep.power_method == POWER_METHOD and rep.power == pytest.approx(power(P12, 0.05))
        assert rep.params == P12.to_dict() and rep.version == __version__
        assert rep.phi <= phi_bound(P12) + 1e-12

    def test_json_round_trip(self):
        traj = sample_path("ou", 2.0, np.linspace(0, 1.0, 101), seed=1)
        rep = run_test(OU, traj, 0.1)
        d = json.loads(rep.to_json())
        assert TestReport.from_dict(d) == rep
        assert json.loads(TestReport.from_dict(d).to_json()) == d

    def test_p_value_consistent_with_reject(self):
        for seed in range(5):
            traj = sample_path("bridge", 2.0, np.linspace(0, 0.5, 201), seed=seed)
            rep = run_test(P21, traj, 0.2)
            assert rep.reject == (rep.p_value < 0.2)

    def test_p_values_uniform(self):
        psi = simulate_psi(P12, 10_000, 2e-3, seed=10)
        pv = p_value(P12, psi)
        assert ks_statistic(pv, lambda u: np.clip(u, 0, 1)) < 0.02

    @settings(max_examples=20, deadline=None)
    @given(psi=st.floats(0.0, 20.0))
    def test_reject_iff_p_below_level(self, psi):
        q = 0.05
        c = critical_value(P12, q)
        phi = likelihood_ratio(P12, psi)
        pv = p_value(P12, psi)
        if abs(pv - q) > 1e-7:
            assert (phi > c) == (pv < q)
