import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from squeezed_mzi.adaptive import (
    ProtocolConfig,
    _channel,
    asymptotic_total_uncertainty,
    choose_sigma,
    initial_state,
    make_rng,
    predict_delta_theta_M,
    predict_iterations,
    run,
    step,
)
from squeezed_mzi.bayes import confidence_interval, flat_prior, map_estimate, posterior
from squeezed_mzi.interferometer import outcome_distribution

PI3 = math.pi / 3


def config(n_atoms=500, **kw):
    base = dict(n_atoms=n_atoms, theta_true=math.pi / 6, delta_theta0=PI3)
    base.update(kw)
    return ProtocolConfig(**base)


def quiet_run(cfg, index=0):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        return run(cfg, make_rng(cfg.seed, index))


class TestConfig:
    @pytest.mark.parametrize(
        "kw",
        [
            {"n_atoms": 501},
            {"theta_true": math.pi / 2},
            {"delta_theta0": 0.0},
            {"delta_theta0": math.pi / 2},
            {"stop_mode": "sometimes"},
            {"max_iterations": 0},
        ],
    )
    def test_rejects(self, kw):
        with pytest.raises(ValueError):
            config(**kw)


class TestStepRule:
    def test_first_width(self):
        expected = 0.57 * (1e4 * math.tan(PI3) / 2.1) ** (1 / 3)
        assert expected == pytest.approx(11.5, abs=0.05)
        assert choose_sigma(10000, PI3) == pytest.approx(expected, rel=0.02)

    def test_clipping(self):
        assert choose_sigma(1000, 1e-5) == 1.0
        assert choose_sigma(100, math.pi / 2 - 1e-10) == 5.0

    def test_rebalanced_outcome_is_balanced(self):
        cfg = config(theta_true=0.2, theta0=0.2)
        s1 = step(initial_state(cfg), cfg, make_rng(1))
        assert s1.history[0].residual_phase == 0.0
        channel = _channel(cfg.n_atoms, s1.history[0].sigma)
        dist = outcome_distribution(channel, s1.history[0].residual_phase)
        assert dist.space.n_values[np.argmax(dist.probabilities)] == 0

    def test_step_bookkeeping(self):
        cfg = config()
        s0 = initial_state(cfg)
        s1 = step(s0, cfg, make_rng(0))
        rec = s1.history[0]
        assert rec.residual_phase == pytest.approx(cfg.theta_true - cfg.theta0)
        assert s1.accumulated_offset == pytest.approx(cfg.theta0 + rec.theta_bar)
        assert s1.delta_theta == rec.delta_theta < cfg.delta_theta0
        # the posterior is kept in the rebalanced frame
        assert abs(map_estimate(s1.posterior)) < 0.05 * rec.delta_theta

    def test_finished_state_rejected(self):
        cfg = config()
        s = quiet_run(cfg)
        with pytest.raises(ValueError):
            step(s, cfg, make_rng(0))

    def test_max_iterations_abort(self):
        cfg = config(max_iterations=1)
        s = quiet_run(cfg)
        assert s.aborted and s.finished
        assert "1 iterations" in s.diagnostic
        assert s.iterations_used == 1


class TestRun:
    def test_deterministic(self):
        cfg = config(seed=42)
        a, b = quiet_run(cfg), quiet_run(cfg)
        assert a.history == b.history
        assert a.estimate == b.estimate

    def test_final_step_uses_sigma_one(self):
        s = quiet_run(config(seed=3))
        assert s.history[-1].sigma == 1.0
        assert all(r.sigma > 1.0 for r in s.history[:-1])
        assert s.delta_theta <= 3.5 / 500 * 1.15

    def test_floor_mode(self):
        cfg = config(stop_mode="floor")
        s = quiet_run(cfg)
        assert s.finished and not s.aborted
        assert s.delta_theta <= 3.5 / 500

    def test_prior_already_narrow(self):
        cfg = config(theta_true=0.1002, theta0=0.1, delta_theta0=5 / 500)
        s = quiet_run(cfg)
        assert s.iterations_used == 1
        assert s.history[0].sigma == 1.0

    @pytest.mark.slow
    def test_large_n_takes_two_or_three(self):
        cfg = config(n_atoms=10000)
        used = [quiet_run(cfg, i).iterations_used for i in range(10)]
        assert sum(u in (2, 3) for u in used) >= 8

    def test_estimates_near_truth(self):
        n_atoms = 500
        cfg = config(seed=11)
        errors = np.array([abs(quiet_run(cfg, i).estimate - cfg.theta_true) for i in range(1000)])
        assert np.mean(errors < 3 * 3.5 / n_atoms) >= 0.99

    def test_rebalancing_after_first_step(self):
        cfg = config(seed=5)
        residual, widths = [], []
        for i in range(100):
            s1 = step(initial_state(cfg), cfg, make_rng(cfg.seed, i))
            residual.append(abs(cfg.theta_true - s1.accumulated_offset))
            widths.append(s1.delta_theta)
        assert np.median(residual) < np.median(widths)
        assert np.median(residual) < cfg.delta_theta0 / 10

    def test_final_measurement_dominates(self):
        n_atoms = 500
        cfg = config(seed=9)
        ratios = []
        for i in range(60):
            rng = make_rng(cfg.seed, i)
            state = initial_state(cfg)
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", RuntimeWarning)
                while not state.finished:
                    prev, state = state, step(state, cfg, rng)
            last = state.history[-1]
            half = 3 * prev.delta_theta
            alone = posterior(_channel(n_atoms, 1.0), last.n, flat_prior(-half, half))
            ratios.append(confidence_interval(alone, map_estimate(alone)) / last.delta_theta)
        assert np.median(ratios) == pytest.approx(1.0, abs=0.10)


class TestPredictors:
    @pytest.mark.parametrize(
        "n_atoms,dtheta0,expected",
        [(1e4, PI3, 1.6), (1e12, PI3, 2.6), (1e4, math.pi / 2 - 1e-10, 2.7)],
    )
    def test_iterations(self, n_atoms, dtheta0, expected):
        assert predict_iterations(n_atoms, dtheta0) == pytest.approx(expected, abs=0.05)

    def test_iterations_domain(self):
        with pytest.raises(ValueError):
            predict_iterations(2, 0.1)

    def test_delta_theta_m(self):
        assert predict_delta_theta_M(1e4, PI3, 0) == pytest.approx(math.tan(PI3))
        assert predict_delta_theta_M(1e4, PI3, 1) == pytest.approx(4.24e-3, rel=2e-3)
        assert predict_delta_theta_M(1e4, PI3, 60) == pytest.approx(2.1e-4)

    def test_asymptotic(self):
        assert asymptotic_total_uncertainty(1e5, PI3) == pytest.approx(1.006e-4, rel=1e-3)
        with pytest.raises(ValueError):
            asymptotic_total_uncertainty(1, 0.1)

    @given(st.floats(1e3, 1e12), st.floats(1.01, 100))
    @settings(max_examples=50, deadline=None)
    def test_asymptotic_monotone(self, n_total, factor):
        assert asymptotic_total_uncertainty(n_total * factor, PI3) < asymptotic_total_uncertainty(n_total, PI3)

    @pytest.mark.parametrize("n_atoms", [1e4, 1e5, 1e6, 1e7, 1e8])
    def test_closed_forms_consistent(self, n_atoms):
        m = predict_iterations(n_atoms, PI3)
        n_total = (m + 1) * n_atoms
        stepwise = (m + 1) * 3.5 / n_total
        assert stepwise == pytest.approx(asymptotic_total_uncertainty(n_total, PI3), rel=0.30)
