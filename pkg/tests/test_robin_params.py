import numpy as np
import pytest

from ensddm.robin_params import (FrequencyBand, convergence_factor, frequency_band,
                                 optimized_delta_d, worst_case_rho,
                                 symbol_iteration, measured_contraction)

PI = np.pi


def test_factor_zero_at_exact_parameter():
    assert convergence_factor(1.0, 2.0 * 1.0 * 3.0, 1.0, 3.0) == 0.0


def test_factor_value():
    rho = convergence_factor(1.0, 4.9122, 1.0, 1.0)
    assert rho == pytest.approx(2.9122 / 3.0, abs=1e-12)


def test_factor_equioscillates_at_optimum():
    band = FrequencyBand(1.0, 32 * PI)
    dstar = optimized_delta_d(1.0, 1.0, band)
    r1 = convergence_factor(1.0, dstar, 1.0, band.m_min)
    r2 = convergence_factor(1.0, dstar, 1.0, band.m_max)
    assert abs(r1 - r2) <= 1e-12
    assert r1 == pytest.approx(0.97073, abs=2e-5)


def test_band_values():
    band = frequency_band(PI, 1 / 32)
    assert band.m_min == pytest.approx(1.0)
    assert band.m_max == pytest.approx(32 * PI)
    band = frequency_band(3.0, 1 / 32)
    assert band.m_min == pytest.approx(PI / 3)


def test_band_rejects_coarse_mesh():
    with pytest.raises(ValueError):
        frequency_band(1.0, 1.0)


def test_optimized_matches_closed_form_in_h():
    # with m_min = 1, m_max = pi/h the optimizer reduces to (5 pi + h)/(pi + 2 h)
    for h in (1 / 16, 1 / 32, 1 / 64):
        band = FrequencyBand(1.0, PI / h)
        got = optimized_delta_d(1.0, 1.0, band)
        assert got == pytest.approx((5 * PI + h) / (PI + 2 * h), abs=1e-12)


def test_optimized_reference_values():
    band = FrequencyBand(1.0, 32 * PI)
    for ds, expect in [(1.0, 4.9122), (0.1, 4.0566), (0.01, 3.9702)]:
        assert optimized_delta_d(ds, 1.0, band) == pytest.approx(expect, abs=5e-5)


def test_optimized_exceeds_delta_s_and_contracts():
    for ds in (0.01, 0.1, 1.0, 10.0):
        for h in (1 / 16, 1 / 32, 1 / 64):
            band = FrequencyBand(1.0, PI / h)
            dstar = optimized_delta_d(ds, 1.0, band)
            assert dstar > ds
            assert worst_case_rho(ds, dstar, 1.0, band) < 1.0


def test_worst_case_attained_at_endpoint():
    band = FrequencyBand(1.0, 10.0)
    # zero at the left endpoint pushes the max to the right endpoint
    rho = worst_case_rho(1.0, 2.0 * 1.0 * band.m_min, 1.0, band)
    assert rho == pytest.approx(convergence_factor(1.0, 2.0, 1.0, band.m_max))


def test_min_max_optimality_on_grid():
    band = FrequencyBand(1.0, 32 * PI)
    ds = 1.0
    dstar = optimized_delta_d(ds, 1.0, band)
    best = worst_case_rho(ds, dstar, 1.0, band)
    for dd in np.linspace(0.5 * dstar, 2.0 * dstar, 41):
        assert best <= worst_case_rho(ds, dd, 1.0, band) + 1e-12


def test_symbol_iteration_zero_at_exact_parameter():
    m = 2.0
    trace = symbol_iteration(1.0, 2.0 * 1.0 * m, 1.0, 1.0, 1.0, m, n_steps=8)
    assert all(abs(c) < 1e-15 for c in trace.combined[2:])
    assert all(r == 0.0 for r in measured_contraction(trace))


def test_symbol_iteration_degenerate_ensemble():
    trace = symbol_iteration(1.0, 2.0, 1.0, 1.0, 1.0, 3.0, n_steps=14)
    ratios = measured_contraction(trace)
    assert ratios[-1] == pytest.approx(4 / 7, abs=1e-10)
    # factor is iteration-independent: every measured ratio agrees
    assert all(r == pytest.approx(4 / 7, abs=1e-10) for r in ratios)


def test_symbol_iteration_perturbed_ensemble_same_factor():
    trace = symbol_iteration(1.0, 2.0, 1.0, 1.0, 1.2, 3.0, n_steps=14)
    ratios = measured_contraction(trace)
    assert ratios[-1] == pytest.approx(4 / 7, abs=1e-10)


def test_symbol_iteration_matches_factor_for_random_tuples():
    rng = np.random.default_rng(11)
    for _ in range(20):
        ds = rng.uniform(0.05, 5.0)
        dd = rng.uniform(0.05, 5.0)
        nu = rng.uniform(0.2, 3.0)
        m = rng.uniform(0.3, 20.0)
        kb = rng.uniform(0.2, 5.0)
        kj = kb * rng.uniform(0.5, 1.5)
        rho = convergence_factor(ds, dd, nu, m)
        trace = symbol_iteration(ds, dd, nu, kb, kj, m, n_steps=16)
        ratios = measured_contraction(trace)
        assert ratios[-1] == pytest.approx(rho, abs=1e-8)
