import numpy as np
import pytest

from ensddm.manufactured import ManufacturedSolution, exact_solution, manufactured_forcing
from ensddm.norms import convergence_order

PI = np.pi


def test_head_vanishes_on_interface():
    ms = ManufacturedSolution(2.21, 2.21)
    xs = np.linspace(0, PI, 11)
    pts = np.column_stack([xs, np.zeros_like(xs)])
    np.testing.assert_allclose(ms.phi_D(pts), 0.0, atol=1e-15)


def test_velocity_reference_value():
    u, p, _, _ = exact_solution(2.21, 2.21, (PI / 2, 0.25))
    assert u[0] == pytest.approx(0.0, abs=1e-14)
    assert u[1] == pytest.approx(-4.30804, abs=1e-5)
    assert p == 0.0


def test_interface_mass_conservation():
    ms = ManufacturedSolution(2.21, 2.21)
    xs = np.linspace(0, PI, 23)
    np.testing.assert_allclose(ms.us_n_interface(xs) + ms.ud_n_interface(xs),
                               0.0, atol=1e-13)


def test_divergence_free_when_isotropic():
    ms = ManufacturedSolution(4.11, 4.11)
    rng = np.random.default_rng(0)
    pts = np.column_stack([rng.uniform(0, PI, 50), rng.uniform(0, 1, 50)])
    grad = ms.grad_u_S(pts)
    np.testing.assert_allclose(grad[:, 0, 0] + grad[:, 1, 1], 0.0, atol=1e-12)
    assert np.allclose(ms.f_D(pts), 0.0)


def test_f_d_scales_with_anisotropy():
    ms = ManufacturedSolution(2.0, 3.0)
    pts = np.array([[1.0, -0.5]])
    expect = (2.0 - 3.0) * (np.exp(-0.5) - np.exp(0.5)) * np.sin(1.0)
    assert ms.f_D(pts)[0] == pytest.approx(expect, rel=1e-12)


def _fd_stress_divergence(ms, pts, eps=1e-5):
    """Finite-difference -div T(u, p) with T = -p I + 2 nu D(u)."""
    def stress(p):
        g = ms.grad_u_S(p)
        D = 0.5 * (g + np.transpose(g, (0, 2, 1)))
        return 2 * ms.nu * D - ms.p_S(p)[:, None, None] * np.eye(2)

    out = np.zeros((len(pts), 2))
    for d, e in [(0, np.array([eps, 0.0])), (1, np.array([0.0, eps]))]:
        out += (stress(pts + e) - stress(pts - e))[:, :, d] / (2 * eps)
    return -out


def test_forcing_matches_finite_difference():
    rng = np.random.default_rng(12)
    pts = np.column_stack([rng.uniform(0.2, PI - 0.2, 100), rng.uniform(0.1, 0.9, 100)])
    for k11, k22, nu in [(2.21, 2.21, 1.0), (1.0, 3.0, 0.7)]:
        ms = ManufacturedSolution(k11, k22, nu=nu)
        fd = _fd_stress_divergence(ms, pts)
        f = ms.f_S(pts)
        scale = np.abs(f).max()
        assert np.abs(fd - f).max() <= 1e-6 * max(scale, 1.0)


def test_forcing_linear_in_nu():
    pt = (0.7, 0.3)
    f1, _ = manufactured_forcing(2.21, 2.21, 1.0, pt)
    f2, _ = manufactured_forcing(2.21, 2.21, 2.0, pt)
    np.testing.assert_allclose(f2, 2.0 * f1, rtol=1e-14)


def test_interface_stresses_vanish_for_isotropic():
    ms = ManufacturedSolution(6.21, 6.21)
    xs = np.linspace(0, PI, 9)
    np.testing.assert_allclose(ms.normal_stress_interface(xs), 0.0, atol=1e-15)
    np.testing.assert_allclose(ms.shear_stress_interface(xs), 0.0, atol=1e-15)


def test_convergence_order_basic():
    np.testing.assert_allclose(convergence_order([4.0, 1.0], [2.0, 1.0]), [2.0])
    np.testing.assert_allclose(convergence_order([2.0, 1.0], [2.0, 1.0]), [1.0])


def test_convergence_order_reference_column():
    errs = [0.0019640, 0.0004933, 0.0001234]
    hs = [1 / 16, 1 / 32, 1 / 64]
    orders = convergence_order(errs, hs)
    assert orders[0] == pytest.approx(1.99, abs=0.01)
    assert orders[1] == pytest.approx(2.00, abs=0.01)


def test_convergence_order_rejects_zero_errors():
    with pytest.raises(ValueError):
        convergence_order([1.0, 0.0], [2.0, 1.0])
