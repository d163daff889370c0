import numpy as np
import pytest

from stochheat.exceptions import AlignmentError, PairingError, StrideError
from stochheat.grid import FieldState, build_grid, project_initial_condition
from stochheat.heat_kernel import dirichlet_kernel, squared_kernel_integral
from stochheat.malliavin import (MalliavinEnergy, band_indices, cauchy_schwarz_bound,
                                 energy_ensemble, evolve_derivative,
                                 evolve_integrated_derivative, malliavin_energy, theta_nodes)
from stochheat.noise import sample_white_noise
from stochheat.solver import Coefficients, evolve

NONLINEAR = Coefficients.semilinear(lambda t, x, u: 0.1 * u, lambda t, x, u: 1 + 0.5 * np.sin(u),
                                    0.1, lambda t, x, u: 0.5 * np.cos(u))


def setup(n=16, T=0.02, coeffs=NONLINEAR, seed=3, path=2):
    grid = build_grid(n, T, 0.25 / n ** 2)
    u0 = project_initial_condition(lambda x: np.sin(np.pi * x), grid)
    noise = sample_white_noise(grid, seed, path)
    return grid, u0, noise, evolve(coeffs, u0, grid, noise)


def test_forward_and_adjoint_agree():
    grid, _, noise, traj = setup()
    a = malliavin_energy(traj, NONLINEAR, noise, grid.n_steps, 8, method="adjoint")
    f = malliavin_energy(traj, NONLINEAR, noise, grid.n_steps, 8, method="forward")
    assert a.value == pytest.approx(f.value, rel=1e-12)
    assert np.allclose(a.profile, f.profile, rtol=1e-12, atol=0)


def test_energy_is_integral_of_derivative_fields():
    grid, _, noise, traj = setup(n=8)
    n = grid.n_steps
    profile = []
    for j in range(n + 1):
        d = [evolve_derivative(traj, NONLINEAR, j, xi, noise).at(n)[4] for xi in range(1, 8)]
        profile.append(grid.dx * np.sum(np.square(d)))
    profile = np.array(profile)
    expected = grid.dt * (profile.sum() - 0.5 * (profile[0] + profile[-1]))
    e = malliavin_energy(traj, NONLINEAR, noise, n, 4)
    assert e.value == pytest.approx(expected, rel=1e-12)


def test_derivative_vanishes_before_theta():
    grid, _, noise, traj = setup()
    d = evolve_derivative(traj, NONLINEAR, 10, 5, noise)
    assert np.all(d.at(9) == 0)
    assert d.at(10)[5] == pytest.approx((1 + 0.5 * np.sin(traj.values[10, 5])) / grid.dx)


def test_linear_in_sigma_for_additive_noise():
    grid, u0, noise, _ = setup()
    c1, c2 = Coefficients.additive(1.0), Coefficients.additive(2.0)
    t1, t2 = evolve(c1, u0, grid, noise), evolve(c2, u0, grid, noise)
    d1 = evolve_derivative(t1, c1, 3, 7, noise).values
    d2 = evolve_derivative(t2, c2, 3, 7, noise).values
    assert np.array_equal(2 * d1, d2)
    # additive noise: the derivative does not depend on the noise path
    other = sample_white_noise(grid, 99, 0)
    d3 = evolve_derivative(evolve(c1, u0, grid, other), c1, 3, 7, other).values
    assert np.array_equal(d1, d3)


def test_integrated_derivative_is_band_sum():
    grid, _, noise, traj = setup()
    band = (0.25, 0.75)
    ia, ib = band_indices(band, grid)
    n = grid.n_steps
    Y = evolve_integrated_derivative(traj, NONLINEAR, 5, band, noise).at(n)[8]
    D = sum(evolve_derivative(traj, NONLINEAR, 5, xi, noise).at(n)[8] for xi in range(ia, ib + 1))
    assert Y == pytest.approx(D * grid.dx, rel=1e-12)


def test_ensemble_matches_single_paths():
    grid, u0, noise, traj = setup(path=2)
    band = (0.25, 0.75)
    block = energy_ensemble(NONLINEAR, u0, grid, 3, [0, 2], grid.n_steps, 8, band)
    single = malliavin_energy(traj, NONLINEAR, noise, grid.n_steps, 8)
    assert block.energy[1] == pytest.approx(single.value, rel=1e-12)
    assert block.u[1] == traj.final.values[8]
    Y = evolve_integrated_derivative(traj, NONLINEAR, 4, band, noise).at(grid.n_steps)[8]
    assert block.integrated[1, 4] == pytest.approx(Y, rel=1e-12)
    bound = cauchy_schwarz_bound(block.integrated, block.weights, band)
    assert np.all(block.energy * (1 + grid.dx / 0.5) >= bound)


def test_additive_derivative_is_heat_kernel():
    grid, _, noise, traj = setup(n=64, T=0.05, coeffs=Coefficients.additive(1.0))
    n = grid.n_steps
    for j in (0, n // 2, n - 10 * 4):
        D = evolve_derivative(traj, Coefficients.additive(1.0), j, 0, noise)
        # rows of the forward recursion for every xi at once
        lag = (n - j) * grid.dt
        G = dirichlet_kernel(lag, 0.5, grid.nodes[1:-1])
        got = np.array([evolve_derivative(traj, Coefficients.additive(1.0), j, xi, noise).at(n)[32]
                        for xi in range(1, 64)])
        assert np.max(np.abs(got - G)) <= 0.01 * np.max(G)
        assert D.at(n)[32] == 0.0  # column 0 drives no node


def test_additive_energy_converges_to_kernel_integral():
    errors = []
    exact, _ = squared_kernel_integral(0.05, 0.5)
    for n in (16, 32, 64):
        grid, _, noise, traj = setup(n=n, T=0.05, coeffs=Coefficients.additive(1.0))
        e = malliavin_energy(traj, Coefficients.additive(1.0), noise, grid.n_steps, n // 2)
        errors.append(abs(e.value / exact - 1))
    assert errors[2] < 0.05
    assert errors[0] > errors[1] > errors[2]


def test_stride_and_error_estimate():
    grid, _, noise, traj = setup()
    e1 = malliavin_energy(traj, NONLINEAR, noise, grid.n_steps, 8)
    e2 = malliavin_energy(traj, NONLINEAR, noise, grid.n_steps, 8, stride=2)
    assert np.isfinite(e1.error)
    assert e2.value == pytest.approx(e1.value, rel=0.05)
    assert list(theta_nodes(7, 3)) == [0, 3, 6, 7]
    with pytest.raises(StrideError):
        malliavin_energy(traj, NONLINEAR, noise, grid.n_steps, 8, stride=0)


def test_pairing_checks():
    grid, u0, noise, traj = setup()
    other = sample_white_noise(grid, 3, 5)
    with pytest.raises(PairingError):
        malliavin_energy(traj, NONLINEAR, other, grid.n_steps, 8)
    sparse = evolve(NONLINEAR, u0, grid, noise, record_every=2)
    with pytest.raises(PairingError):
        evolve_derivative(sparse, NONLINEAR, 0, 4, noise)


def test_band_alignment():
    grid = build_grid(16, 0.01)
    assert band_indices((0.25, 0.75), grid) == (4, 12)
    with pytest.raises(AlignmentError):
        band_indices((0.3, 0.75), grid)
    with pytest.raises(AlignmentError):
        band_indices((0.0, 0.5), grid)


def test_energy_is_nonnegative():
    with pytest.raises(ValueError):
        MalliavinEnergy(-1.0, 0.1, 0.5, 1, 0.0)
