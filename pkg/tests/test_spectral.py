import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bridge_lrt.errors import EigenvalueTieError, ParameterError
from bridge_lrt.gauss_models import ProcessParams
from bridge_lrt.spectral import (
    LAMBDA0,
    LAMBDA_STAR,
    REGULAR,
    Spectrum,
    _nystrom_eigs,
    build_measure,
    c_threshold,
    check_strictly_decreasing,
    compute_spectrum,
    eigenfunction,
    integral_operator,
    is_resonant,
    nystrom_spectrum,
    resonance_alpha1,
    sigma0,
    G_function,
    tan_form_residual,
    trace_integral,
)

BRIDGE_CASE_II = ProcessParams("bridge", 0.01, 1.2, 0.5)
BRIDGE_RESONANT = ProcessParams("bridge", 1.0, resonance_alpha1(1.0, 0.5), 0.5)


def rel_err(a, b):
    a, b = np.asarray(a), np.asarray(b)
    return np.max(np.abs(a - b) / np.abs(b))


class TestMeasure:
    def test_bridge(self):
        m = build_measure(ProcessParams("bridge", 1.0, 1.0, 0.5))
        assert (m.atom_location, m.atom_weight, m.density_coeff, m.density_support_end) == (0.5, 2.0, 1.0, 0.5)

    def test_unit_sum_rejected(self):
        with pytest.raises(ParameterError):
            build_measure(ProcessParams("bridge", 0.5, 0.5, 0.3))

    def test_ou(self):
        m = build_measure(ProcessParams("ou", 1.0, 2.0, 3.0))
        assert (m.atom_location, m.atom_weight, m.density_coeff, m.density_support_end) == (3.0, 1.0, 3.0, 3.0)
        assert m.density_shape == "ou"

    @pytest.mark.parametrize(
        "params", [ProcessParams("bridge", 1.0, 2.0, 0.7), ProcessParams("ou", 0.5, 1.0, 2.0)]
    )
    def test_total_mass(self, params):
        m = build_measure(params)
        assert m.total_mass() == pytest.approx(m.integrate(lambda s: 1.0), rel=1e-10)


class TestBridgeSpectrum:
    def test_against_nystrom(self):
        p = ProcessParams("bridge", 1.0, 1.0, 0.5)
        lam = compute_spectrum(p, 10).eigenvalues
        assert rel_err(lam, nystrom_spectrum(p, 1500)[:10]) < 1e-3

    def test_regular_roots_solve_sin_cos_form(self):
        for p in [ProcessParams("bridge", 1.0, 1.0, 0.5), ProcessParams("bridge", 2.0, 3.0, 0.9)]:
            L = math.log1p(-p.T)
            for e in compute_spectrum(p, 30).entries:
                b = e.shape_param
                lam = (p.alpha0 + p.alpha1 - 1) / (b * b + (p.alpha0 - 0.5) ** 2)
                g = (1 + lam * (0.5 - p.alpha0)) * math.sin(b * L) + lam * b * math.cos(b * L)
                assert abs(g) < 1e-12
                assert lam == pytest.approx(e.lam, rel=1e-13)

    def test_tan_form_away_from_poles(self):
        p = ProcessParams("bridge", 0.6, 0.7, 0.3)
        for e in compute_spectrum(p, 10).entries:
            assert abs(tan_form_residual(e.lam, p)) < 1e-8

    def test_tail_law(self):
        p = ProcessParams("bridge", 1.0, 1.0, 0.5)
        s = compute_spectrum(p, 60)
        k = 50
        assert abs(k * k * s.eigenvalues[k] / s.tail_constant - 1) < 1e-2

    def test_tail_within_ten_percent(self):
        s = compute_spectrum(ProcessParams("bridge", 2.0, 3.0, 0.9), 120)
        k = np.arange(30, 120)
        assert np.all(np.abs(k**2 * s.eigenvalues[30:] / s.tail_constant - 1) < 0.1)
        check_strictly_decreasing(s.eigenvalues)

    def test_paper_example_is_regular(self):
        # (0.1, 1.2, 0.5): min alpha is above the threshold, so no lambda0 entry
        p = ProcessParams("bridge", 0.1, 1.2, 0.5)
        assert p.alpha0 > c_threshold(p.alpha0, p.alpha1, p.T)
        s = compute_spectrum(p, 10)
        assert all(e.kind == REGULAR for e in s.entries)
        assert rel_err(s.eigenvalues, nystrom_spectrum(p, 1500)[:10]) < 1e-3

    def test_case_ii(self):
        s = compute_spectrum(BRIDGE_CASE_II, 10)
        assert s.entries[0].kind == LAMBDA0
        assert s.entries[0].lam > s.entries[1].lam
        assert rel_err(s.eigenvalues, nystrom_spectrum(BRIDGE_CASE_II, 1500)[:10]) < 1e-3

    def test_case_ii_swapped_order(self):
        p = BRIDGE_CASE_II.swapped()
        s = compute_spectrum(p, 10)
        assert sum(e.kind == LAMBDA0 for e in s.entries) == 1
        assert rel_err(s.eigenvalues, nystrom_spectrum(p, 1500)[:10]) < 1e-3

    def test_sigma0_root(self):
        a0, a1, T = 0.01, 1.2, 0.5
        s0 = sigma0(a0, a1, T)
        assert 0 < s0 < 0.5 - a0
        assert abs(G_function(s0, a0, a1, T)) < 1e-14

    def test_resonance(self):
        assert is_resonant(BRIDGE_RESONANT)
        s = compute_spectrum(BRIDGE_RESONANT, 10)
        kinds = [e.kind for e in s.entries]
        assert kinds.count(LAMBDA_STAR) == 1 and LAMBDA0 not in kinds
        assert rel_err(s.eigenvalues, nystrom_spectrum(BRIDGE_RESONANT, 1500)[:10]) < 1e-3

    def test_resonance_is_threshold_boundary(self):
        # the resonant alpha1 puts min(alpha) exactly on the case (ii) threshold
        for a0, T in [(1.0, 0.5), (0.3, 0.5), (2.0, 0.8)]:
            a1 = resonance_alpha1(a0, T)
            lo, hi = sorted([a0, a1])
            assert lo == pytest.approx(c_threshold(lo, hi, T), abs=1e-12)

    @settings(max_examples=40, deadline=None)
    @given(
        a0=st.floats(0.0, 3.0),
        a1=st.floats(0.0, 3.0),
        T=st.floats(0.05, 0.95),
    )
    def test_exceptional_gates(self, a0, a1, T):
        if a0 + a1 < 1.05:
            return
        p = ProcessParams("bridge", a0, a1, T)
        kinds = [e.kind for e in compute_spectrum(p, 5).entries]
        below = min(a0, a1) < c_threshold(a0, a1, T)
        assert (LAMBDA0 in kinds) == (below and not is_resonant(p))
        assert not (LAMBDA0 in kinds and LAMBDA_STAR in kinds)

    def test_nystrom_count_above_cut(self):
        for p in [BRIDGE_CASE_II, BRIDGE_RESONANT, ProcessParams("bridge", 0.1, 1.2, 0.5)]:
            lam = compute_spectrum(p, 40).eigenvalues
            ny = nystrom_spectrum(p, 1000)
            for cut in [0.2, 0.05, 0.01]:
                gap = np.min(np.abs(lam - cut) / cut)
                if gap > 1e-2:
                    assert np.sum(lam > cut) == np.sum(ny > cut)

    def test_odd_params_rejected(self):
        with pytest.raises(ParameterError):
            compute_spectrum(ProcessParams("bridge", 0.5, 0.5, 0.5))
        with pytest.raises(ParameterError):
            compute_spectrum(ProcessParams("bridge", 1.0, 1.0, 0.5), 0)


class TestOUSpectrum:
    def test_brownian_kernel(self):
        p = ProcessParams("ou", 0.0, 1.0, 1.0)
        assert rel_err(compute_spectrum(p, 5).eigenvalues, nystrom_spectrum(p, 1500)[:5]) < 1e-3

    def test_equal_alphas(self):
        p = ProcessParams("ou", 1.0, 1.0, 1.0)
        assert rel_err(compute_spectrum(p, 10).eigenvalues, nystrom_spectrum(p, 1500)[:10]) < 1e-3

    def test_roots_solve_sin_cos_form(self):
        p = ProcessParams("ou", 1.0, 2.0, 1.0)
        for e in compute_spectrum(p, 20).entries:
            b = e.shape_param
            lam = 3.0 / (b * b + 1.0)
            g = (1 - lam * 1.0) * math.sin(b) - lam * b * math.cos(b)
            assert abs(g) < 1e-12

    def test_tail_law(self):
        p = ProcessParams("ou", 1.0, 2.0, 1.0)
        s = compute_spectrum(p, 60)
        assert s.tail_constant == pytest.approx(3.0 / math.pi**2)
        assert abs(50**2 * s.eigenvalues[50] / s.tail_constant - 1) < 1e-2


class TestEigenfunctions:
    CASES = [
        ProcessParams("bridge", 1.0, 1.0, 0.5),
        BRIDGE_CASE_II,
        BRIDGE_RESONANT,
        ProcessParams("ou", 1.0, 2.0, 1.0),
    ]

    @pytest.mark.parametrize("params", CASES)
    def test_orthonormal(self, params):
        m = build_measure(params)
        ents = compute_spectrum(params, 10).entries
        for j in range(10):
            for k in range(j, 10):
                v = m.integrate(lambda s: eigenfunction(ents[j], params, s) * eigenfunction(ents[k], params, s))
                if j == k:
                    assert abs(v - 1) < 1e-8
                else:
                    assert abs(v) < 1e-7

    @pytest.mark.parametrize("params", CASES)
    def test_zero_at_origin(self, params):
        for e in compute_spectrum(params, 10).entries:
            assert eigenfunction(e, params, 0.0) == 0.0

    @pytest.mark.parametrize("params", CASES)
    def test_integral_equation(self, params):
        rng = np.random.default_rng(1)
        for e in compute_spectrum(params, 4).entries:
            for t in rng.uniform(0, params.T, 4):
                lhs = e.lam * eigenfunction(e, params, t)
                assert abs(lhs - integral_operator(e, params, t)) < 1e-6


class TestNystrom:
    def test_rank_one_atom(self):
        w = 0.37
        vals = _nystrom_eigs(lambda s, t: np.ones(np.broadcast(s, t).shape), [0.5, 0.2, 0.1], [w, 0.0, 0.0])
        assert vals[0] == pytest.approx(w) and np.allclose(vals[1:], 0.0)

    def test_grid_refinement(self):
        p = ProcessParams("bridge", 1.0, 1.0, 0.5)
        a = nystrom_spectrum(p, 2000, n_top=3)[0]
        b = nystrom_spectrum(p, 4000, n_top=3)[0]
        assert abs(a - b) / b < 1e-4

    def test_trace(self):
        p = ProcessParams("bridge", 1.0, 1.0, 0.5)
        assert nystrom_spectrum(p, 800).sum() == pytest.approx(trace_integral(p), rel=1e-6)

    def test_small_grid(self):
        with pytest.raises(ParameterError):
            nystrom_spectrum(ProcessParams("bridge", 1.0, 1.0, 0.5), 8)


class TestTrace:
    @pytest.mark.parametrize(
        "params", [ProcessParams("bridge", 1.0, 1.0, 0.5), ProcessParams("ou", 1.0, 1.0, 1.0)]
    )
    def test_identity(self, params):
        s = compute_spectrum(params)
        assert abs(s.total_sum() - trace_integral(params)) / trace_integral(params) < 1e-5

    def test_brownian_kernel(self):
        # R(s, s) = s: atom T / (1 - T), density a * (T / (1 - T) + ln(1 - T))
        T, a1 = 0.4, 1.5
        a = a1 - 1.0
        expected = T / (1 - T) + a * (T / (1 - T) + math.log1p(-T))
        assert trace_integral(ProcessParams("bridge", 0.0, a1, T)) == pytest.approx(expected, rel=1e-10)


class TestSpectrumType:
    def test_json_round_trip(self):
        s = compute_spectrum(BRIDGE_CASE_II, 12)
        text = s.to_json()
        back = Spectrum.from_json(text)
        assert back == s
        assert json.loads(back.to_json()) == json.loads(text)
        assert set(json.loads(text)) == {"kind", "alpha0", "alpha1", "T", "eigenvalues", "tail_constant"}

    def test_ties_rejected(self):
        with pytest.raises(EigenvalueTieError):
            check_strictly_decreasing([1.0, 0.5, 0.5 * (1 - 1e-12)])

    def test_truncated(self):
        s = compute_spectrum(ProcessParams("bridge", 1.0, 1.0, 0.5), 20)
        assert len(s.truncated(5)) == 5 and s.truncated(5).eigenvalues[0] == s.eigenvalues[0]

    def test_bad_entry_kind(self):
        d = compute_spectrum(ProcessParams("bridge", 1.0, 1.0, 0.5), 3).to_dict()
        d["eigenvalues"][0]["kind"] = "mystery"
        with pytest.raises(ParameterError):
            Spectrum.from_dict(d)
