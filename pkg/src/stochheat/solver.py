"""Explicit Ito finite-difference scheme for the stochastic heat equation.

Interior nodes are updated by

    u_i <- u_i + dt (u_{i+1} - 2 u_i + u_{i-1}) / dx^2 + dt b(t, x_i, u_i)
               + sigma(t, x_i, u_i) dW_{j,i} / dx,

with ``b`` and ``sigma`` evaluated at the left time point, and the endpoints
reset to zero.  All array routines accept a leading batch axis, so the same
update drives a single path or a block of paths sharing nothing but the
grid.
"""

from dataclasses import dataclass
import math
import numbers

import numpy as np

from .exceptions import BlowUpError, CoefficientContractError, PairingError
from .grid import FieldState, FieldTrajectory
from .noise import noise_row

# relative slack on declared sup bounds of linear coefficient fields
_BOUND_SLACK = 1e-12


def _evaluate(field, t, x, u):
    if isinstance(field, numbers.Real):
        return float(field)
    return field(t, x, u)


def _as_field(value):
    """Constants stay floats (fast path); callables take ``(t, x, u)``."""
    if isinstance(value, numbers.Real):
        return float(value)
    if callable(value):
        return value
    raise TypeError(f"coefficient field must be a number or a callable, got {value!r}")


@dataclass(frozen=True, eq=False)
class Coefficients:
    """Drift ``b(t, x, u)`` and diffusion ``sigma(t, x, u)`` of the equation.

    Fields are floats or vectorized callables ``f(t, x, u)`` broadcasting
    against ``u``.  ``drift_du`` and ``diffusion_du`` are the analytic
    derivatives in ``u``; they are only needed by the Malliavin module.

    For linear equations (``is_linear``) the drift is ``B * u`` and the
    diffusion ``H * u``; ``B`` and ``H`` are checked against the declared
    bounds ``drift_bound`` and ``diffusion_bound`` at every evaluation.
    Use the class-method constructors rather than filling fields by hand.
    """

    drift: object = 0.0
    diffusion: object = 0.0
    drift_du: object = 0.0
    diffusion_du: object = 0.0
    is_linear: bool = False
    B: object = None
    H: object = None
    drift_bound: float = math.inf
    diffusion_bound: float = math.inf
    kind: str = "custom"

    @classmethod
    def deterministic(cls, drift=0.0, drift_du=0.0):
        return cls(drift=_as_field(drift), drift_du=_as_field(drift_du), kind="deterministic")

    @classmethod
    def additive(cls, sigma=1.0, drift=0.0, drift_du=0.0):
        """Noise coefficient independent of ``u``: ``sigma(t, x, u) = sigma(t, x)``."""
        sigma = _as_field(sigma)
        return cls(drift=_as_field(drift), diffusion=sigma, drift_du=_as_field(drift_du),
                   diffusion_du=0.0, kind="additive")

    @classmethod
    def linear(cls, B=0.0, H=1.0, drift_bound=None, diffusion_bound=None):
        """``b = B u`` and ``sigma = H u`` with bounded adapted fields ``B`` and ``H``.

        ``B`` and ``H`` are numbers or callables ``f(t, x, u)``; letting them
        read the current state ``u`` (at the left time point) keeps them
        adapted.  Bounds default to ``|B|`` and ``|H|`` for constants and are
        required for callables.
        """
        B, H = _as_field(B), _as_field(H)
        if drift_bound is None:
            if not isinstance(B, float):
                raise CoefficientContractError("callable B needs an explicit drift_bound")
            drift_bound = abs(B)
        if diffusion_bound is None:
            if not isinstance(H, float):
                raise CoefficientContractError("callable H needs an explicit diffusion_bound")
            diffusion_bound = abs(H)
        if not (math.isfinite(drift_bound) and math.isfinite(diffusion_bound)):
            raise CoefficientContractError("linear coefficient bounds must be finite")
        return cls(drift_du=B, diffusion_du=H, is_linear=True, B=B, H=H,
                   drift_bound=float(drift_bound), diffusion_bound=float(diffusion_bound),
                   kind="linear")

    @classmethod
    def semilinear(cls, drift, diffusion, drift_du, diffusion_du):
        return cls(drift=_as_field(drift), diffusion=_as_field(diffusion),
                   drift_du=_as_field(drift_du), diffusion_du=_as_field(diffusion_du),
                   kind="semilinear")

    def _checked(self, field, bound, name, t, x, u):
        values = _evaluate(field, t, x, u)
        if np.max(np.abs(values)) > bound * (1 + _BOUND_SLACK):
            raise CoefficientContractError(
                f"|{name}| exceeds its declared bound {bound:g} at t={t:g}")
        return values

    def evaluate(self, t, x, u):
        """Return ``(b, sigma)`` at the points ``(t, x, u)``."""
        if self.is_linear:
            B = self._checked(self.B, self.drift_bound, "B", t, x, u)
            H = self._checked(self.H, self.diffusion_bound, "H", t, x, u)
            return B * u, H * u
        return _evaluate(self.drift, t, x, u), _evaluate(self.diffusion, t, x, u)

    def linearization(self, t, x, u):
        """Return ``(db/du, dsigma/du)`` at ``(t, x, u)``."""
        if self.is_linear:
            return (self._checked(self.B, self.drift_bound, "B", t, x, u),
                    self._checked(self.H, self.diffusion_bound, "H", t, x, u))
        return _evaluate(self.drift_du, t, x, u), _evaluate(self.diffusion_du, t, x, u)

    def sigma_at(self, t, x, u):
        """Diffusion values broadcast to the shape of ``u``."""
        return np.broadcast_to(self.evaluate(t, x, u)[1], np.shape(u))


def _raise_blowup(values, step, paths=None):
    bad = np.argwhere(~np.isfinite(values))[0]
    cell = int(bad[-1]) + 1
    path = None
    if values.ndim > 1:
        row = int(bad[0])
        path = int(paths[row]) if paths is not None else row
    raise BlowUpError(step, cell, path)


def advance(u, t, coeffs, normals, grid, step_index=None, paths=None):
    """One explicit Euler-Maruyama step on node arrays.

    Parameters
    ----------
    u : ndarray of shape (..., n_space + 1)
        Node values at time ``t``.
    normals : ndarray of shape (..., n_space)
        Standard normals of the noise row for this step.

    Returns
    -------
    ndarray of shape (..., n_space + 1)
        Node values at time ``t + dt`` with zero endpoints.
    """
    x = grid.nodes[1:-1]
    ui = u[..., 1:-1]
    b, sigma = coeffs.evaluate(t, x, ui)
    out = np.empty_like(u)
    out[..., 1:-1] = (ui + grid.mesh_ratio * (u[..., 2:] - 2.0 * ui + u[..., :-2])
                      + grid.dt * b
                      + sigma * (normals[..., 1:] * math.sqrt(grid.dt / grid.dx)))
    out[..., 0] = 0.0
    out[..., -1] = 0.0
    if not np.isfinite(out).all():
        j = round(t / grid.dt) if step_index is None else step_index
        _raise_blowup(out[..., 1:-1], j, paths)
    return out


def step(state, coeffs, noise_row, grid):
    """Advance ``state`` by one time step using the standard-normal ``noise_row``.

    ``noise_row`` may be ``None`` for noise-free runs.
    """
    if noise_row is None:
        noise_row = np.zeros(grid.n_space)
    values = advance(np.asarray(state.values), state.time, coeffs, np.asarray(noise_row), grid)
    j = round(state.time / grid.dt)
    return FieldState(values, (j + 1) * grid.dt)


def evolve(coeffs, u0_state, grid, noise=None, record_every=1):
    """Integrate one path from ``u0_state`` to the grid horizon.

    Parameters
    ----------
    noise : NoiseRealization, optional
        Driving noise; ``None`` runs the deterministic scheme.
    record_every : int
        Keep every ``record_every``-th state (the initial and final states
        are always kept when ``n_steps`` is a multiple of it).

    Returns
    -------
    FieldTrajectory
    """
    if u0_state.time != 0.0:
        raise ValueError("u0_state must be at time 0")
    if noise is not None and noise.grid != grid:
        raise PairingError("noise realization was generated on a different grid")
    u = np.asarray(u0_state.values, dtype=float)
    zeros = np.zeros(grid.n_space)
    records = [u]
    for j in range(grid.n_steps):
        row = zeros if noise is None else noise.normals[j]
        u = advance(u, j * grid.dt, coeffs, row, grid, step_index=j)
        if (j + 1) % record_every == 0:
            records.append(u)
    times = np.arange(len(records)) * (record_every * grid.dt)
    return FieldTrajectory(times, np.array(records),
                           path_id=None if noise is None else noise.path_index,
                           seed=None if noise is None else noise.seed,
                           record_every=record_every)


def evolve_linear(B, H, u0_state, grid, noise, drift_bound=None, diffusion_bound=None,
                  record_every=1):
    """Integrate the linear equation with drift ``B u`` and noise coefficient ``H u``."""
    coeffs = Coefficients.linear(B, H, drift_bound, diffusion_bound)
    return evolve(coeffs, u0_state, grid, noise, record_every)


def kill_rate_transform(traj, K):
    """Scale each recorded state by ``exp(-K t)``.

    If ``w`` solves the linear equation with drift ``-K w`` then the result
    solves the same equation without that drift.
    """
    factors = np.exp(-K * traj.times)
    return FieldTrajectory(traj.times, traj.values * factors[:, None],
                           path_id=traj.path_id, seed=traj.seed,
                           record_every=traj.record_every, meta=dict(traj.meta, kill_rate=K))


def convolution_coefficients(w, bound):
    """Coefficients of ``dN = N_xx dt + w dW``, i.e. noise coefficient ``w`` (not ``w u``).

    ``w`` is a number or a callable ``w(t, x)``; it is checked against the
    declared bound ``|w| <= bound``.
    """
    if isinstance(w, numbers.Real):
        if abs(w) > bound * (1 + _BOUND_SLACK):
            raise CoefficientContractError(f"|w|={abs(w):g} exceeds declared bound {bound:g}")
        return Coefficients.additive(float(w))

    def sigma(t, x, u):
        values = np.broadcast_to(w(t, x), u.shape)
        if np.max(np.abs(values)) > bound * (1 + _BOUND_SLACK):
            raise CoefficientContractError(f"|w| exceeds declared bound {bound:g} at t={t:g}")
        return values

    return Coefficients.additive(sigma)


def stochastic_convolution_sup(w, grid, noise, bound):
    """Sup over all grid points of ``|N(t, x)|``, where ``N`` solves the heat
    equation with zero data driven by ``w dW``.
    """
    coeffs = convolution_coefficients(w, bound)
    u = np.zeros(grid.n_space + 1)
    best = 0.0
    for j in range(grid.n_steps):
        u = advance(u, j * grid.dt, coeffs, noise.normals[j], grid, step_index=j)
        best = max(best, float(np.max(np.abs(u))))
    return best


def evolve_ensemble(systems, grid, seed, paths, monitor=None, record_steps=None):
    """Advance a block of paths for one or more noise-coupled systems.

    Parameters
    ----------
    systems : list of (Coefficients, FieldState)
        Every system is driven by the same noise rows.
    seed : int
        Master seed of the counter-based generator.
    paths : array_like of int
        Path indices of this block.
    monitor : callable, optional
        ``monitor(j, t, states)`` after each step; ``states`` is a list of
        arrays of shape ``(len(paths), n_space + 1)``, one per system.
    record_steps : array_like of int, optional
        Time indices at which all states are stored.

    Returns
    -------
    finals : list of ndarray
        Final states, one ``(len(paths), n_space + 1)`` array per system.
    records : list of ndarray or None
        With ``record_steps``, arrays of shape ``(len(paths), len(record_steps), n_space + 1)``.
    """
    paths = np.asarray(paths, dtype=np.int64)
    states = [np.tile(np.asarray(s.values, dtype=float), (paths.size, 1)) for _, s in systems]
    record_steps = None if record_steps is None else np.asarray(record_steps)
    records = None
    if record_steps is not None:
        records = [np.empty((paths.size, record_steps.size, grid.n_space + 1)) for _ in systems]
        slot = {int(k): m for m, k in enumerate(record_steps)}
        if 0 in slot:
            for rec, u in zip(records, states):
                rec[:, slot[0]] = u
    for j in range(grid.n_steps):
        t = j * grid.dt
        z = noise_row(seed, paths, j, grid.n_space)
        states = [advance(u, t, c, z, grid, step_index=j, paths=paths)
                  for (c, _), u in zip(systems, states)]
        if records is not None and (j + 1) in slot:
            for rec, u in zip(records, states):
                rec[:, slot[j + 1]] = u
        if monitor is not None:
            monitor(j + 1, (j + 1) * grid.dt, states)
    return states, records
