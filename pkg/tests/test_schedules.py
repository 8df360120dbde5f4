import math

import pytest
from hypothesis import given, settings, strategies as st

from conicswarm.kernels import AssumptionBounds
from conicswarm.schedules import AnytimePlan, Calibration, CalibrationError, anytime_at, \
    calibrate, horizon_plan

E = math.e


def bounds_of(kernel_min=1.0, smooth_max=1.0, noise_sup=0.1, cert_slope=None,
              cert_offset=1.0):
    return AssumptionBounds(
        kernel_min=kernel_min, smooth_max=smooth_max, noise_sup=noise_sup,
        cert_slope=kernel_min if cert_slope is None else cert_slope,
        cert_offset=cert_offset,
    )


class TestCalibrate:
    def test_deterministic_radius_zero_observation(self):
        # |y| = 0, kernel_min = 1, vol = 1: radius = sqrt(e^3) + 1
        cal = calibrate(bounds_of(), nu0_tv=0.5, kappa=0.1, lambda_x=1.0, y_norm=0.0,
                        stochastic=False)
        assert cal.tv_radius == pytest.approx(math.sqrt(E**3) + 1.0)
        assert cal.tv_radius == pytest.approx(5.4817, abs=1e-4)

    def test_tv_bound_max_semantics(self):
        cal = calibrate(bounds_of(), nu0_tv=0.0, kappa=0.1, lambda_x=1.0, y_norm=0.0,
                        stochastic=False)
        radius = cal.tv_radius
        big = calibrate(bounds_of(), nu0_tv=3 * radius, kappa=0.1, lambda_x=1.0,
                        y_norm=0.0, stochastic=False)
        assert big.tv_bound == pytest.approx(3 * radius)
        assert cal.tv_bound == pytest.approx(2 * radius)

    def test_stochastic_radius_unit_slope_offset(self):
        cal = calibrate(bounds_of(cert_slope=1.0, cert_offset=1.0), nu0_tv=0.1,
                        kappa=0.1, lambda_x=7.0, y_norm=9.0, stochastic=True)
        assert cal.tv_radius == pytest.approx(E + E**1.5 + 1.0)

    def test_alpha_is_min_of_caps(self):
        cal = calibrate(bounds_of(noise_sup=1e5), nu0_tv=0.1, kappa=0.1, lambda_x=1.0,
                        y_norm=0.0, stochastic=True)
        assert cal.alpha == pytest.approx(min(cal.alpha_cap_mass, cal.alpha_cap_descent,
                                              cal.hoeffding_cap))
        assert cal.binding_cap == "hoeffding"

    def test_hoeffding_cap_infinite_for_deterministic(self):
        cal = calibrate(bounds_of(), nu0_tv=0.1, kappa=0.1, lambda_x=1.0, y_norm=0.0,
                        stochastic=False)
        assert math.isinf(cal.hoeffding_cap)

    def test_beta_struct_formula(self):
        cal = calibrate(bounds_of(), nu0_tv=0.1, kappa=0.1, lambda_x=1.0, y_norm=0.0,
                        stochastic=False)
        c = 1.0
        expected = 1.0 / (2 * c * (c + 3 * cal.tv_bound) * math.exp(0.2))
        assert cal.beta_max_struct == pytest.approx(expected)
        assert cal.chosen_beta <= cal.beta_max_struct

    def test_failed_positivity_raises(self):
        with pytest.raises(CalibrationError):
            calibrate(bounds_of(kernel_min=0.0), nu0_tv=0.1, kappa=0.1, lambda_x=1.0,
                      y_norm=0.0, stochastic=False)

    def test_pure_function(self):
        args = dict(nu0_tv=0.3, kappa=0.05, lambda_x=2.0, y_norm=1.5, stochastic=True)
        a = calibrate(bounds_of(kernel_min=0.7, noise_sup=0.2), **args)
        b = calibrate(bounds_of(kernel_min=0.7, noise_sup=0.2), **args)
        assert a == b


def manual_calibration(alpha, beta_struct=0.05):
    return Calibration(tv_radius=1.0, tv_bound=2.0, alpha=alpha, alpha_cap_mass=alpha,
                       alpha_cap_descent=alpha, hoeffding_cap=math.inf,
                       beta_max_struct=beta_struct, chosen_beta=beta_struct)


class TestHorizonPlan:
    def test_unit_alpha_small_horizon(self):
        plan = horizon_plan(4, manual_calibration(1.0), d=1)
        assert plan.eps == pytest.approx(0.5)
        assert plan.m == 4

    def test_minimum_horizon_enforced(self):
        cal = manual_calibration(0.1)
        horizon_plan(100, cal, d=1)
        with pytest.raises(ValueError):
            horizon_plan(99, cal, d=1)

    def test_beta_min_of_structural_and_horizon(self):
        cal = manual_calibration(0.5, beta_struct=1e9)
        plan = horizon_plan(16, cal, d=2)
        assert plan.beta == pytest.approx(1.0 / (0.5**0.5 * 4.0))
        tight = manual_calibration(0.5, beta_struct=1e-4)
        assert horizon_plan(16, tight, d=2).beta == pytest.approx(1e-4)

    def test_constant_over_iterations(self):
        plan = horizon_plan(25, manual_calibration(0.3), d=1)
        assert plan.at(1) == plan.at(25)


class TestAnytime:
    def test_k_zero_floors(self):
        eps, m, beta = anytime_at(0, manual_calibration(0.7))
        assert (eps, m, beta) == (pytest.approx(min(0.7, 1.0)), 1, pytest.approx(1.0))

    def test_reference_values_at_k4(self):
        eps, m, beta = anytime_at(4, manual_calibration(1.0))
        assert eps == pytest.approx(0.5)
        assert m == 4
        assert beta == pytest.approx(0.25)

    def test_min_branch_large_k(self):
        eps, m, beta = anytime_at(10**6, manual_calibration(0.05))
        assert eps == pytest.approx(1e-3)
        assert m == 10**6

    @given(st.integers(0, 10**7), st.floats(1e-4, 1.0))
    @settings(max_examples=200, deadline=None)
    def test_eps_never_exceeds_alpha(self, k, alpha):
        eps, _, _ = anytime_at(k, manual_calibration(alpha))
        assert eps <= alpha + 1e-15

    def test_monotone_schedules(self):
        plan = AnytimePlan(alpha=0.4)
        values = [plan.at(k) for k in range(1, 200)]
        eps = [v[0] for v in values]
        ms = [v[1] for v in values]
        betas = [v[2] for v in values]
        assert all(a >= b for a, b in zip(eps, eps[1:]))
        assert all(a <= b for a, b in zip(ms, ms[1:]))
        assert all(a >= b for a, b in zip(betas, betas[1:]))
