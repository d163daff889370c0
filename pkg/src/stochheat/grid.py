"""Space-time grid, initial-condition projection and field-state containers."""

from dataclasses import dataclass, field
import math

import numpy as np

from .exceptions import BoundaryViolationError, DegenerateGridError, StabilityError

BOUNDARY_TOL = 1e-12
# relative slack when comparing dt with dx**2 / 2
_STABILITY_SLACK = 1e-12


@dataclass(frozen=True)
class Grid:
    """Uniform discretization of ``[0, T] x [0, 1]``.

    Nodes are ``x_i = i / n_space`` for ``i = 0..n_space`` and times are
    ``t_j = j * dt`` for ``j = 0..n_steps``.  The explicit scheme requires
    ``dt <= dx**2 / 2``, which is checked here.
    """

    n_space: int
    dt: float
    n_steps: int

    def __post_init__(self):
        if int(self.n_space) != self.n_space or self.n_space < 2:
            raise DegenerateGridError(
                f"n_space must be an integer >= 2, got {self.n_space!r}")
        if int(self.n_steps) != self.n_steps or self.n_steps < 1:
            raise DegenerateGridError(
                f"n_steps must be a positive integer, got {self.n_steps!r}")
        if not (self.dt > 0 and math.isfinite(self.dt)):
            raise StabilityError(f"dt must be positive and finite, got {self.dt!r}")
        limit = self.stability_limit
        if self.dt > limit * (1 + _STABILITY_SLACK):
            raise StabilityError(
                f"dt={self.dt:.6g} exceeds the explicit stability bound "
                f"dx**2/2={limit:.6g}")

    @property
    def dx(self):
        return 1.0 / self.n_space

    @property
    def stability_limit(self):
        return 0.5 / self.n_space ** 2

    @property
    def horizon(self):
        return self.dt * self.n_steps

    @property
    def mesh_ratio(self):
        """``dt / dx**2``; at most 1/2."""
        return self.dt * self.n_space ** 2

    @property
    def nodes(self):
        x = np.arange(self.n_space + 1, dtype=float) / self.n_space
        x[-1] = 1.0
        return x

    @property
    def times(self):
        return np.arange(self.n_steps + 1, dtype=float) * self.dt

    def node_index(self, x, tol=1e-9):
        """Index of the node at coordinate ``x``; ``None`` if ``x`` is off-grid."""
        k = round(x * self.n_space)
        if abs(k - x * self.n_space) > tol * self.n_space or not 0 <= k <= self.n_space:
            return None
        return int(k)

    def step_index(self, t, tol=1e-9):
        """Index of the time level at ``t``; ``None`` if ``t`` is off-grid."""
        k = round(t / self.dt)
        if abs(k * self.dt - t) > tol * max(1.0, abs(t)) or not 0 <= k <= self.n_steps:
            return None
        return int(k)


def build_grid(n_space, horizon, dt_request=None):
    """Build a stable grid covering ``[0, horizon]``.

    Parameters
    ----------
    n_space : int
        Number of spatial cells (``>= 2``).
    horizon : float
        Final time ``T > 0``.
    dt_request : float, optional
        Requested time step.  Defaults to the stability limit ``dx**2 / 2``.
        The step actually used is shrunk so that ``n_steps * dt == horizon``.

    Raises
    ------
    DegenerateGridError
        If ``n_space < 2`` or ``horizon <= 0``.
    StabilityError
        If ``dt_request > dx**2 / 2``.
    """
    if int(n_space) != n_space or n_space < 2:
        raise DegenerateGridError(f"need at least one interior node, got n_space={n_space!r}")
    n_space = int(n_space)
    if not (horizon > 0 and math.isfinite(horizon)):
        raise DegenerateGridError(f"horizon must be positive, got {horizon!r}")
    limit = 0.5 / n_space ** 2
    if dt_request is None:
        dt_request = limit
    elif not dt_request > 0:
        raise StabilityError(f"dt_request must be positive, got {dt_request!r}")
    elif dt_request > limit * (1 + _STABILITY_SLACK):
        raise StabilityError(
            f"dt_request={dt_request:.6g} exceeds dx**2/2={limit:.6g} "
            f"for n_space={n_space}")
    # tiny slack so that an exact multiple does not get an extra step
    n_steps = max(1, math.ceil(horizon / dt_request * (1 - 1e-12)))
    return Grid(n_space=n_space, dt=horizon / n_steps, n_steps=n_steps)


@dataclass(frozen=True, eq=False)
class FieldState:
    """Node values of ``u(t, .)`` at a single time; endpoints pinned to zero."""

    values: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.ndim != 1 or v.size < 3:
            raise ValueError("values must be a 1-d array with at least 3 nodes")
        if v[0] != 0.0 or v[-1] != 0.0:
            raise BoundaryViolationError(
                f"Dirichlet endpoints must be exactly zero, got {v[0]!r}, {v[-1]!r}")
        if not np.all(np.isfinite(v)):
            raise ValueError("field values must be finite")
        v.flags.writeable = False
        object.__setattr__(self, "values", v)

    @property
    def n_space(self):
        return self.values.size - 1


@dataclass(frozen=True, eq=False)
class FieldTrajectory:
    """Recorded solution values for one sample path.

    ``values[k]`` holds the node values at ``times[k]``.  ``seed`` and
    ``path_id`` identify the noise realization that produced the path
    (both ``None`` for noise-free runs).
    """

    times: np.ndarray
    values: np.ndarray
    path_id: int | None = None
    seed: int | None = None
    record_every: int = 1
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 2 or values.shape[0] != times.size:
            raise ValueError("values must have shape (len(times), n_space + 1)")
        if times.size > 1:
            steps = np.diff(times)
            if np.any(steps <= 0) or not np.allclose(steps, steps[0], rtol=1e-9, atol=0):
                raise ValueError("times must increase with a constant step")
        times.flags.writeable = False
        values.flags.writeable = False
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "values", values)

    def __len__(self):
        return self.times.size

    @property
    def states(self):
        return [FieldState(v, t) for t, v in zip(self.times, self.values)]

    @property
    def final(self):
        return FieldState(self.values[-1], self.times[-1])

    def at(self, t):
        """State recorded at time ``t``."""
        k = int(np.argmin(np.abs(self.times - t)))
        if not np.isclose(self.times[k], t, rtol=1e-9, atol=1e-12):
            raise KeyError(f"time {t} was not recorded")
        return FieldState(self.values[k], self.times[k])


def indicator(a, b):
    """Indicator of the closed interval ``[a, b]``, vectorized.

    Nodes falling on an endpoint (up to rounding) are included.
    """
    def u0(x):
        x = np.asarray(x, dtype=float)
        return ((x >= a - 1e-12) & (x <= b + 1e-12)).astype(float)
    return u0


def project_initial_condition(u0, grid):
    """Sample ``u0`` at the grid nodes.

    ``u0`` may be vectorized or scalar-only; scalars are broadcast.  The
    endpoint values must vanish to within ``1e-12``, and they are then set to
    exactly zero.
    """
    x = grid.nodes
    left, right = float(u0(0.0)), float(u0(1.0))
    if abs(left) >= BOUNDARY_TOL or abs(right) >= BOUNDARY_TOL:
        raise BoundaryViolationError(
            f"initial condition must vanish at 0 and 1, got u0(0)={left!r}, u0(1)={right!r}")
    try:
        values = np.broadcast_to(np.asarray(u0(x), dtype=float), x.shape).copy()
    except (TypeError, ValueError):
        values = np.array([float(u0(xi)) for xi in x])
    values[0] = values[-1] = 0.0
    return FieldState(values, 0.0)
