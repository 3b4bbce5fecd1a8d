import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.optimize import minimize_scalar

from squeezed_mzi.groundstate import sigma_of_u
from squeezed_mzi.optimizer import (
    analytic_optimum,
    error_propagation_uncertainty,
    fit_power_law,
    fitted_delta_theta_min,
    fitted_sigma_min,
    fitted_u_min,
    golden_section,
    numeric_optimum,
    robustness,
)

from numeric_cache import half_width, optimum


class TestErrorPropagation:
    def test_zero_angle(self):
        assert error_propagation_uncertainty(500, 3.0, 0.0) == 2 * 3.0 / 500

    def test_example(self):
        assert error_propagation_uncertainty(100, 2.0, 0.1) == pytest.approx(0.04025, abs=5e-6)

    @pytest.mark.parametrize("n_atoms,theta", [(1e3, 0.1), (1e4, 0.05), (1e5, 0.5)])
    def test_argmin_matches_analytic(self, n_atoms, theta):
        res = minimize_scalar(
            lambda x: error_propagation_uncertainty(n_atoms, math.exp(x), theta),
            bounds=(-3, 8),
            method="bounded",
            options={"xatol": 1e-10},
        )
        assert math.exp(res.x) == pytest.approx(0.503 * (n_atoms * math.tan(theta)) ** (1 / 3), rel=0.05)

    @pytest.mark.parametrize("n_atoms,theta", [(1e3, 0.02), (1e3, 0.5), (1e4, 0.1), (1e6, 1.2)])
    def test_convex_in_log_sigma(self, n_atoms, theta):
        x = np.linspace(math.log(0.5), math.log(math.sqrt(n_atoms) / 2), 400)
        f = np.array([error_propagation_uncertainty(n_atoms, math.exp(v), theta) for v in x])
        assert np.all(np.diff(f, 2) >= -1e-15 * f.max())

    def test_validation(self):
        with pytest.raises(ValueError):
            error_propagation_uncertainty(100, 0.0, 0.1)
        with pytest.raises(ValueError):
            error_propagation_uncertainty(100, 1.0, math.pi / 2)


class TestAnalytic:
    def test_examples(self):
        opt = analytic_optimum(1e4, 0.1)
        assert opt.sigma == pytest.approx(5.035, abs=1e-3)
        # the printed prefactor 1.23 gives 1.2317e-3; 1.236e-3 follows from 1.234
        assert opt.delta_theta == pytest.approx(1.236e-3, rel=4e-3)
        assert not opt.extrapolated

    def test_domain_edges_flagged(self):
        assert analytic_optimum(1000, 10 / 1000).extrapolated
        assert analytic_optimum(1000, math.atan(0.137 * math.sqrt(1000))).extrapolated
        assert analytic_optimum(1000, 0.001).extrapolated


class TestFitted:
    def test_large_angle_examples(self):
        assert fitted_sigma_min(1e4, 0.1) == pytest.approx(4.505, abs=1e-3)
        assert fitted_u_min(1e4, 0.1) == pytest.approx(1.513, abs=1e-3)
        assert fitted_delta_theta_min(1e4, 0.1) == pytest.approx(1.633e-3, rel=1e-3)

    def test_small_angle_examples(self):
        assert fitted_delta_theta_min(1e4, 5e-4) == pytest.approx(3.5e-4)
        assert fitted_u_min(1e4, -5e-4) == pytest.approx(624.9999, abs=1e-9)
        assert fitted_sigma_min(1e4, 0.0) == 1.0

    @given(st.integers(50, 50000).map(lambda k: 2 * k), st.floats(0.0, 0.99))
    @settings(max_examples=60, deadline=None)
    def test_width_and_interaction_consistent(self, n_atoms, frac):
        theta = frac * 10 / n_atoms
        assert sigma_of_u(n_atoms, fitted_u_min(n_atoms, theta)) == pytest.approx(
            fitted_sigma_min(n_atoms, theta), rel=1e-6
        )

    @given(st.integers(50, 50000).map(lambda k: 2 * k), st.floats(0.02, 1.4))
    @settings(max_examples=60, deadline=None)
    def test_width_and_interaction_consistent_large_angle(self, n_atoms, theta):
        # 1.52 is the rounded value of 1/(16 * 0.45**4) = 1.5242
        sigma = fitted_sigma_min(n_atoms, theta)
        if sigma > math.sqrt(n_atoms) / 2 or theta <= 10 / n_atoms:
            return
        assert sigma_of_u(n_atoms, fitted_u_min(n_atoms, theta)) == pytest.approx(sigma, rel=1e-3)

    def test_exponent(self):
        ns = np.array([1e3, 2e3, 5e3])
        slope, _ = fit_power_law(ns, [fitted_delta_theta_min(n, 0.1) for n in ns])
        assert slope == pytest.approx(-2 / 3, abs=1e-12)


class TestRobustness:
    def test_examples(self):
        assert robustness(1000, 0.1, 0.10, 0.0) == pytest.approx(0.0667, abs=5e-5)
        assert robustness(1000, 0.1, 0.0, 1.0) == 0.125
        assert robustness(1000, 0.1, 0.0, 0.0) == 0.0

    def test_negative_rejected(self):
        with pytest.raises(ValueError):
            robustness(1000, 0.1, -0.1, 0)


class TestSearch:
    def test_golden_section(self):
        x, f = golden_section(lambda v: (v - 0.3) ** 2 + 1, -2, 2, 1e-6)
        assert x == pytest.approx(0.3, abs=1e-6)
        assert f == pytest.approx(1.0)

    def test_power_law_fit(self):
        x = np.array([1.0, 2.0, 4.0, 8.0])
        slope, pref = fit_power_law(x, 3.0 * x**-1.5)
        assert slope == pytest.approx(-1.5)
        assert pref == pytest.approx(3.0)

    def test_refuses_large_n(self):
        with pytest.raises(ValueError, match="fitted"):
            numeric_optimum(10000, 0.1)


class TestNumeric:
    def test_result_fields(self):
        res = optimum(1000, 0.1)
        assert 0 < res.sigma_min <= math.sqrt(1000) / 2
        assert res.delta_theta_min > 0
        assert res.evaluations > 5
        assert sigma_of_u(1000, res.u_min) == pytest.approx(res.sigma_min, rel=1e-9)

    def test_width_example(self):
        assert optimum(1000, 0.1).sigma_min == pytest.approx(fitted_sigma_min(1000, 0.1), rel=0.25)

    @pytest.mark.slow
    @pytest.mark.parametrize("n_atoms", [500, 1000, 2000])
    @pytest.mark.parametrize("theta", [0.01, 0.1, 1.0])
    def test_global_minimum_on_scan(self, n_atoms, theta):
        res = optimum(n_atoms, theta)
        for sigma in np.geomspace(0.5, math.sqrt(n_atoms) / 2, 7):
            assert res.delta_theta_min <= half_width(n_atoms, float(sigma), theta) * (1 + 1e-9)

    @pytest.mark.parametrize("theta", [0.0, 0.1])
    def test_exceeds_error_propagation_by_about_sqrt2(self, theta):
        res = optimum(1000, theta)
        ratio = res.delta_theta_min / error_propagation_uncertainty(1000, res.sigma_min, theta)
        assert 1.2 <= ratio <= 1.7

    @pytest.mark.slow
    def test_numeric_exponent(self):
        ns = [1000, 2000, 5000]
        slope, _ = fit_power_law(ns, [optimum(n, 0.1).delta_theta_min for n in ns])
        assert slope == pytest.approx(-2 / 3, abs=0.07)
