import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from stochheat.exceptions import BoundaryViolationError, DegenerateGridError, StabilityError
from stochheat.grid import (FieldState, FieldTrajectory, Grid, build_grid, indicator,
                            project_initial_condition)


def test_default_step_is_stability_limit():
    grid = build_grid(64, 400 * 0.5 / 64 ** 2)
    assert grid.n_steps == 400
    assert grid.dt == pytest.approx(0.5 / 64 ** 2, rel=1e-12)
    assert grid.mesh_ratio == pytest.approx(0.5)
    # otherwise the step shrinks just enough to land on the horizon
    grid = build_grid(64, 0.05)
    assert grid.n_steps == 410
    assert grid.dt < grid.stability_limit


def test_requested_step_shrinks_to_divide_horizon():
    grid = build_grid(10, 0.1, dt_request=0.003)
    assert grid.n_steps == 34
    assert grid.dt <= 0.003
    assert grid.dt == pytest.approx(0.1 / 34)


def test_exact_multiple_gets_no_extra_step():
    grid = build_grid(10, 0.1, dt_request=0.005)
    assert grid.n_steps == 20


@pytest.mark.parametrize("n", [0, 1, 2.5])
def test_degenerate_space(n):
    with pytest.raises(DegenerateGridError):
        build_grid(n, 0.1)


@pytest.mark.parametrize("T", [0.0, -1.0, math.inf])
def test_degenerate_horizon(T):
    with pytest.raises(DegenerateGridError):
        build_grid(8, T)


def test_unstable_step_rejected():
    with pytest.raises(StabilityError):
        build_grid(64, 0.05, dt_request=0.6 / 64 ** 2)
    with pytest.raises(StabilityError):
        Grid(n_space=8, dt=0.01, n_steps=3)


@settings(max_examples=60, deadline=None)
@given(n=st.integers(2, 512), T=st.floats(1e-4, 2.0), frac=st.floats(0.05, 1.0))
def test_grid_invariants(n, T, frac):
    grid = build_grid(n, T, frac * 0.5 / n ** 2)
    assert grid.dt <= grid.stability_limit * (1 + 1e-12)
    assert grid.n_steps * grid.dt == pytest.approx(T, rel=1e-12)
    assert grid.nodes[0] == 0.0 and grid.nodes[-1] == 1.0
    assert grid.node_index(0.0) == 0 and grid.node_index(1.0) == n
    assert grid.step_index(T) == grid.n_steps


def test_off_grid_lookups():
    grid = build_grid(8, 0.1)
    assert grid.node_index(0.5) == 4
    assert grid.node_index(0.3) is None
    assert grid.step_index(grid.dt * 0.5) is None
    assert grid.step_index(2.0) is None


def test_field_state_endpoints():
    FieldState(np.array([0.0, 1.0, 0.0]))
    with pytest.raises(BoundaryViolationError):
        FieldState(np.array([1e-15, 1.0, 0.0]))
    with pytest.raises(ValueError):
        FieldState(np.array([0.0, np.nan, 0.0]))
    s = FieldState(np.array([0.0, 1.0, 0.0]))
    with pytest.raises(ValueError):
        s.values[1] = 2.0


def test_projection_sine():
    grid = build_grid(16, 0.1)
    s = project_initial_condition(lambda x: np.sin(np.pi * x), grid)
    assert s.values[0] == 0.0 and s.values[-1] == 0.0
    assert s.values[8] == pytest.approx(1.0)


def test_projection_scalar_only_callable():
    grid = build_grid(4, 0.1)
    s = project_initial_condition(lambda x: math.sin(math.pi * x), grid)
    assert s.values[2] == pytest.approx(1.0)


def test_projection_rejects_nonzero_boundary():
    grid = build_grid(16, 0.1)
    with pytest.raises(BoundaryViolationError):
        project_initial_condition(lambda x: np.ones_like(x), grid)


def test_indicator_is_closed():
    grid = build_grid(8, 0.1)
    s = project_initial_condition(indicator(0.25, 0.75), grid)
    assert list(s.values) == [0, 0, 1, 1, 1, 1, 1, 0, 0]


def test_trajectory_access():
    v = np.zeros((3, 5))
    v[:, 2] = [1.0, 2.0, 3.0]
    traj = FieldTrajectory(np.array([0.0, 0.1, 0.2]), v)
    assert traj.final.values[2] == 3.0
    assert traj.at(0.1).values[2] == 2.0
    with pytest.raises(KeyError):
        traj.at(0.15)
    with pytest.raises(ValueError):
        FieldTrajectory(np.array([0.0, 0.1, 0.3]), v)
