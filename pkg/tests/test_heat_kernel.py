import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate

from stochheat.exceptions import KernelDomainError
from stochheat.grid import FieldState, build_grid, project_initial_condition
from stochheat.heat_kernel import (KernelEvaluator, dirichlet_kernel, eigen_terms, image_terms,
                                   semigroup_apply, squared_kernel_integral, trapezoid_weights)


def series(t, x, y, n=4000):
    k = np.arange(1, n + 1) * math.pi
    return float(2 * np.sum(np.sin(k * x) * np.sin(k * y) * np.exp(-k ** 2 * t)))


def test_small_time_value():
    assert dirichlet_kernel(0.001, 0.5, 0.5) == pytest.approx(series(0.001, 0.5, 0.5), abs=1e-10)
    assert dirichlet_kernel(0.001, 0.5, 0.5) == pytest.approx(8.920620580763856, rel=1e-12)


def test_large_time_value():
    # one mode dominates: 2 exp(-pi^2) up to 2 exp(-9 pi^2)
    assert dirichlet_kernel(1.0, 0.5, 0.5) == pytest.approx(2 * math.exp(-math.pi ** 2), rel=1e-12)


@settings(max_examples=80, deadline=None)
@given(t=st.floats(0.01, 0.05), x=st.floats(0, 1), y=st.floats(0, 1))
def test_representations_agree_near_crossover(t, x, y):
    ev = KernelEvaluator()
    assert abs(ev.eigen(t, x, y) - ev.images(t, x, y)) <= 2e-10


@settings(max_examples=60, deadline=None)
@given(t=st.floats(1e-4, 1.0), x=st.floats(0, 1), y=st.floats(0, 1))
def test_symmetry_and_sign(t, x, y):
    g = dirichlet_kernel(t, x, y)
    assert g == pytest.approx(dirichlet_kernel(t, y, x), abs=1e-10)
    assert g >= -1e-10


def test_boundary_zero():
    assert abs(dirichlet_kernel(0.01, 0.0, 0.3)) < 1e-10
    assert abs(dirichlet_kernel(0.3, 0.4, 1.0)) < 1e-10


@pytest.mark.parametrize("t", [0.002, 0.02, 0.2])
def test_mass_matches_quadrature(t):
    ev = KernelEvaluator()
    x = np.array([0.1, 0.5, 0.83])
    got = ev.mass(t, x, 0.2, 0.7)
    for xi, g in zip(x, got):
        ref, _ = integrate.quad(lambda y: series(t, xi, y), 0.2, 0.7, epsabs=1e-12, points=[xi])
        assert g == pytest.approx(ref, abs=1e-9)


def test_mass_total_below_one():
    ev = KernelEvaluator()
    m = ev.mass(0.01, np.linspace(0.05, 0.95, 19), 0.0, 1.0)
    assert np.all(m < 1) and np.all(m > 0)


def test_semigroup_property():
    ev = KernelEvaluator()
    y = np.linspace(0, 1, 4001)
    inner = ev(0.01, 0.3, y) * ev(0.02, y, 0.6)
    assert np.trapezoid(inner, y) == pytest.approx(ev(0.03, 0.3, 0.6), rel=1e-6)


def test_semigroup_apply_on_eigenfunction():
    grid = build_grid(64, 0.1)
    u0 = project_initial_condition(lambda x: np.sin(np.pi * x), grid)
    out = semigroup_apply(0.1, u0, grid)
    assert out.time == pytest.approx(0.1)
    exact = math.exp(-math.pi ** 2 * 0.1) * np.sin(np.pi * grid.nodes)
    assert np.max(np.abs(out.values - exact)) < 1e-9


def test_trapezoid_weights_sum():
    grid = build_grid(10, 0.1)
    assert trapezoid_weights(grid).sum() == pytest.approx(1.0)


def test_squared_kernel_integral_against_quadrature():
    value, tail = squared_kernel_integral(0.05, 0.5)
    assert tail < 1e-6
    # int G_s^2 dy = G_{2s}(x, x); integrate in s with the singularity at 0 handled by quad
    ref, _ = integrate.quad(lambda s: dirichlet_kernel(2 * s, 0.5, 0.5), 0, 0.05, limit=200)
    assert value == pytest.approx(ref, rel=1e-5)
    assert value == pytest.approx(0.08723498497538175, rel=1e-6)


def test_domain_errors():
    with pytest.raises(KernelDomainError):
        dirichlet_kernel(0.0, 0.5, 0.5)
    with pytest.raises(KernelDomainError):
        dirichlet_kernel(0.1, 1.2, 0.5)
    grid = build_grid(8, 0.1)
    with pytest.raises(KernelDomainError):
        semigroup_apply(0.0, FieldState(np.zeros(9)), grid)


def test_truncation_counts_grow_toward_their_regimes():
    assert eigen_terms(1.0, 1e-10) < eigen_terms(0.01, 1e-10)
    assert image_terms(0.001, 1e-10) <= image_terms(0.02, 1e-10)
