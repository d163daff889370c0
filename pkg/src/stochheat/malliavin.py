"""Malliavin derivative of the discrete solution and the Malliavin energy.

Along a frozen pair (trajectory, noise) the derivative ``D_{theta,xi} u``
solves the linearized scheme

    D_i <- D_i + r (D_{i+1} - 2 D_i + D_{i-1}) + dt b_u(t, x_i, u_i) D_i
               + sigma_u(t, x_i, u_i) D_i dW_{j,i} / dx,

started at time ``theta`` from ``sigma(theta, xi, u(theta, xi))`` times a
discrete delta ``1/dx`` at node ``xi``.  The scheme is linear in ``D`` and
one step is a matrix ``A_j``, so for a fixed evaluation point ``(t, x)`` all
derivatives come from the backward (adjoint) recursion
``lam_n = e_x``, ``lam_j = A_j^T lam_{j+1}``:

    D_{theta_j, xi} u(t, x) = lam_j[xi] * sigma_j[xi] / dx.

The forward matrix recursion is kept for single paths and as a cross-check.
"""

from dataclasses import dataclass, field
import math

import numpy as np

from .exceptions import AlignmentError, PairingError, StrideError
from .noise import noise_row
from .solver import evolve_ensemble


@dataclass(frozen=True, eq=False)
class DerivativeField:
    """``D_{theta, xi} u(t_j, x_i)`` for ``t_j >= theta``.

    ``values[k]`` is the field at time index ``theta_index + k``.
    ``width`` is the spatial width of the discrete delta (``dx``).
    """

    theta_index: int
    xi_index: int
    values: np.ndarray
    dt: float
    width: float

    @property
    def times(self):
        return (self.theta_index + np.arange(self.values.shape[0])) * self.dt

    def at(self, t_index):
        """Field at time index ``t_index``; zero before ``theta``."""
        if t_index < self.theta_index:
            return np.zeros(self.values.shape[1])
        return self.values[t_index - self.theta_index]


@dataclass(frozen=True, eq=False)
class IntegratedDerivative:
    """``Y^theta_{t, x} = int_a^b D_{theta, xi} u(t, x) d xi`` for ``t >= theta``."""

    theta_index: int
    band: tuple
    values: np.ndarray
    dt: float

    @property
    def times(self):
        return (self.theta_index + np.arange(self.values.shape[0])) * self.dt

    def at(self, t_index):
        if t_index < self.theta_index:
            return np.zeros(self.values.shape[1])
        return self.values[t_index - self.theta_index]


@dataclass(frozen=True)
class MalliavinEnergy:
    """``C_{t,x} = int_0^t int_0^1 (D_{theta,xi} u(t,x))^2 d xi d theta``.

    ``error`` estimates the theta-quadrature error from the difference with
    the rule on every other sampled node.
    """

    value: float
    t: float
    x: float
    stride: int
    error: float
    theta: np.ndarray = field(repr=False, default=None)
    profile: np.ndarray = field(repr=False, default=None)

    def __post_init__(self):
        if self.value < 0:
            raise ValueError("Malliavin energy is a sum of squares")


def _check_pair(traj, noise, grid):
    if traj.record_every != 1:
        raise PairingError("the derivative needs every time step of the trajectory")
    if traj.values.shape != (grid.n_steps + 1, grid.n_space + 1):
        raise PairingError("trajectory does not match the grid")
    if noise is None:
        if traj.seed is not None:
            raise PairingError("trajectory was driven by noise but none was supplied")
        return
    if noise.grid != grid:
        raise PairingError("noise was generated on a different grid")
    if (traj.seed, traj.path_id) != (noise.seed, noise.path_index):
        raise PairingError(
            f"trajectory (seed={traj.seed}, path={traj.path_id}) was not generated by "
            f"noise (seed={noise.seed}, path={noise.path_index})")


def _diag(t, u, coeffs, z, grid):
    """Diagonal of the one-step matrix at interior nodes."""
    x = grid.nodes[1:-1]
    ui = u[..., 1:-1]
    db, ds = coeffs.linearization(t, x, ui)
    r = grid.mesh_ratio
    return (1.0 - 2.0 * r) + grid.dt * db + ds * (z[..., 1:] * math.sqrt(grid.dt / grid.dx))


def _forward_step(D, d):
    out = np.zeros_like(D)
    out[..., 1:-1] = d * D[..., 1:-1]
    return out


def linearized_step(D, t, u, coeffs, z, grid):
    """Advance derivative fields ``D`` (shape ``(..., n_space + 1)``) one step along ``u``."""
    r = grid.mesh_ratio
    out = np.zeros_like(D)
    out[..., 1:-1] = (_diag(t, u, coeffs, z, grid) * D[..., 1:-1]
                      + r * (D[..., 2:] + D[..., :-2]))
    return out


def _zero_row(grid):
    return np.zeros(grid.n_space)


def _row(noise, j, grid):
    return _zero_row(grid) if noise is None else noise.normals[j]


def evolve_derivative(traj, coeffs, theta_index, xi_index, noise, grid=None):
    """Evolve ``D_{theta, xi} u`` along ``traj`` from ``theta`` to the horizon.

    Parameters
    ----------
    traj : FieldTrajectory
        Path recorded at every step, generated by ``noise``.
    theta_index, xi_index : int
        Time and node indices of the perturbation.

    Returns
    -------
    DerivativeField
    """
    grid = grid or noise.grid
    _check_pair(traj, noise, grid)
    u = traj.values
    D = np.zeros(grid.n_space + 1)
    if 0 < xi_index < grid.n_space:
        x = grid.nodes[xi_index:xi_index + 1]
        t0 = theta_index * grid.dt
        D[xi_index] = coeffs.sigma_at(t0, x, u[theta_index, xi_index:xi_index + 1])[0] / grid.dx
    out = [D]
    for j in range(theta_index, grid.n_steps):
        D = linearized_step(D, j * grid.dt, u[j], coeffs, _row(noise, j, grid), grid)
        out.append(D)
    return DerivativeField(int(theta_index), int(xi_index), np.array(out), grid.dt, grid.dx)


def band_indices(band, grid):
    """Node indices of the closed band ``[a, b]``; both ends must be interior nodes."""
    a, b = band
    ia, ib = grid.node_index(a), grid.node_index(b)
    if ia is None or ib is None:
        raise AlignmentError(f"band {band} is not aligned to nodes of spacing {grid.dx:g}")
    if not 0 < ia < ib < grid.n_space:
        raise AlignmentError(f"band {band} must satisfy 0 < a < b < 1")
    return ia, ib


def evolve_integrated_derivative(traj, coeffs, theta_index, band, noise, grid=None):
    """Evolve ``Y^theta`` started from ``sigma(theta, xi, u(theta, xi)) 1_[a,b](xi)``."""
    grid = grid or noise.grid
    _check_pair(traj, noise, grid)
    ia, ib = band_indices(band, grid)
    u = traj.values
    Y = np.zeros(grid.n_space + 1)
    x = grid.nodes[ia:ib + 1]
    Y[ia:ib + 1] = coeffs.sigma_at(theta_index * grid.dt, x, u[theta_index, ia:ib + 1])
    out = [Y]
    for j in range(theta_index, grid.n_steps):
        Y = linearized_step(Y, j * grid.dt, u[j], coeffs, _row(noise, j, grid), grid)
        out.append(Y)
    return IntegratedDerivative(int(theta_index), tuple(band), np.array(out), grid.dt)


def theta_nodes(t_index, stride):
    """Sampled theta indices ``0, stride, 2 stride, ...`` always ending at ``t_index``."""
    js = np.arange(0, t_index + 1, stride)
    if js[-1] != t_index:
        js = np.append(js, t_index)
    return js


def _trapezoid(y, js, dt):
    """Trapezoid rule along the last axis on the (possibly nonuniform) nodes ``js * dt``."""
    if len(js) < 2:
        return np.zeros(y.shape[:-1])
    h = np.diff(js) * dt
    return ((y[..., 1:] + y[..., :-1]) * 0.5 * h).sum(axis=-1)


def _energy_and_error(profile, js, dt):
    value = _trapezoid(profile, js, dt)
    if len(js) >= 5:
        coarse = js[::2] if js[::2][-1] == js[-1] else np.append(js[::2], js[-1])
        idx = np.searchsorted(js, coarse)
        error = np.abs(value - _trapezoid(profile[..., idx], coarse, dt)) / 3.0
    else:
        error = np.full_like(np.asarray(value, dtype=float), np.nan)
    return value, error


def adjoint_sweep(states, t_index, x_index, coeffs, grid, rows):
    """Backward recursion ``lam_j = A_j^T lam_{j+1}`` for a block of paths.

    Parameters
    ----------
    states : ndarray of shape (P, >= t_index + 1, n_space + 1)
        Recorded states of ``P`` paths.
    rows : callable
        ``rows(j)`` returns the standard-normal noise rows of step ``j``,
        shape ``(P, n_space)``.

    Returns
    -------
    ndarray of shape (P, t_index + 1, n_space + 1)
        ``lam[:, j]``; the derivative is ``lam[:, j, xi] * sigma_j[xi] / dx``.
    """
    P = states.shape[0]
    r = grid.mesh_ratio
    lam = np.zeros((P, t_index + 1, grid.n_space + 1))
    lam[:, t_index, x_index] = 1.0
    for j in range(t_index - 1, -1, -1):
        mu = lam[:, j + 1].copy()
        mu[:, 0] = mu[:, -1] = 0.0
        d = _diag(j * grid.dt, states[:, j], coeffs, rows(j), grid)
        lam[:, j, 1:-1] = d * mu[:, 1:-1] + r * (mu[:, :-2] + mu[:, 2:])
    return lam


def _sigma_nodes(states, js, coeffs, grid):
    """``sigma(t_j, x, u_j(x))`` at all nodes for the sampled times; zero at the endpoints."""
    out = np.zeros((states.shape[0], len(js), grid.n_space + 1))
    x = grid.nodes[1:-1]
    for m, j in enumerate(js):
        out[:, m, 1:-1] = coeffs.sigma_at(j * grid.dt, x, states[:, j, 1:-1])
    return out


def malliavin_energy(traj, coeffs, noise, t_index, x_index, stride=1, method="adjoint", grid=None):
    """Malliavin energy ``C_{t,x}`` of one path by trapezoid quadrature in ``(theta, xi)``.

    Parameters
    ----------
    t_index, x_index : int
        Evaluation point; ``t_index > 0`` and ``x_index`` interior.
    stride : int
        Use every ``stride``-th time step as a theta node.
    method : {"adjoint", "forward"}
        ``"forward"`` evolves the full delta basis as a matrix for every
        sampled theta; ``"adjoint"`` obtains the same numbers from one
        backward sweep.

    Returns
    -------
    MalliavinEnergy
    """
    grid = grid or noise.grid
    _check_pair(traj, noise, grid)
    if not 0 < t_index <= grid.n_steps:
        raise ValueError("t_index must lie in 1..n_steps")
    if not 0 < x_index < grid.n_space:
        raise ValueError("x_index must be an interior node")
    if not 1 <= stride <= grid.n_steps:
        raise StrideError(f"stride must lie in 1..{grid.n_steps}, got {stride}")
    js = theta_nodes(t_index, stride)
    states = traj.values[None, :t_index + 1]
    sigma = _sigma_nodes(states, js, coeffs, grid)[0]
    if method == "adjoint":
        lam = adjoint_sweep(states, t_index, x_index, coeffs, grid,
                            lambda j: _row(noise, j, grid)[None, :])[0]
        dvals = lam[js] * sigma / grid.dx
    elif method == "forward":
        dvals = np.empty((len(js), grid.n_space + 1))
        for m, j in enumerate(js):
            # row xi of the matrix is the derivative field for perturbation at node xi
            D = np.diag(sigma[m] / grid.dx)
            for k in range(j, t_index):
                D = linearized_step(D, k * grid.dt, traj.values[k], coeffs,
                                    _row(noise, k, grid), grid)
            dvals[m] = D[:, x_index]
    else:
        raise ValueError(f"unknown method {method!r}")
    profile = grid.dx * (dvals[:, 1:-1] ** 2).sum(axis=1)
    value, error = _energy_and_error(profile, js, grid.dt)
    return MalliavinEnergy(float(value), t_index * grid.dt, x_index * grid.dx, int(stride),
                           float(error), theta=js * grid.dt, profile=profile)


@dataclass(frozen=True, eq=False)
class EnergyBlock:
    """Malliavin quantities for a block of paths at one evaluation point."""

    paths: np.ndarray
    energy: np.ndarray          # C_{t,x} per path
    error: np.ndarray           # theta-quadrature error estimate per path
    integrated: np.ndarray      # Y^theta_{t,x}, shape (P, len(theta))
    theta: np.ndarray
    weights: np.ndarray         # trapezoid weights in theta
    u: np.ndarray               # u(t, x) per path


def energy_ensemble(coeffs, u0_state, grid, seed, paths, t_index, x_index, band, stride=1):
    """Malliavin energy and integrated derivative for a block of paths.

    Paths are simulated with the shared counter-based noise, then one
    adjoint sweep per block gives ``C_{t,x}`` and ``Y^theta_{t,x}`` for all
    sampled theta.
    """
    paths = np.asarray(paths, dtype=np.int64)
    if not 1 <= stride <= grid.n_steps:
        raise StrideError(f"stride must lie in 1..{grid.n_steps}, got {stride}")
    ia, ib = band_indices(band, grid)
    _, records = evolve_ensemble([(coeffs, u0_state)], grid, seed, paths,
                                 record_steps=np.arange(t_index + 1))
    states = records[0]
    lam = adjoint_sweep(states, t_index, x_index, coeffs, grid,
                        lambda j: noise_row(seed, paths, j, grid.n_space))
    js = theta_nodes(t_index, stride)
    sigma = _sigma_nodes(states, js, coeffs, grid)
    lam_sig = lam[:, js] * sigma
    profile = (lam_sig[:, :, 1:-1] ** 2).sum(axis=2) / grid.dx
    energy, error = _energy_and_error(profile, js, grid.dt)
    Y = lam_sig[:, :, ia:ib + 1].sum(axis=2)
    weights = np.zeros(len(js))
    h = np.diff(js) * grid.dt
    weights[:-1] += 0.5 * h
    weights[1:] += 0.5 * h
    return EnergyBlock(paths, energy, error, Y, js * grid.dt, weights, states[:, t_index, x_index])


def cauchy_schwarz_bound(integrated, weights, band):
    """``sum_theta w_theta (Y^theta)^2 / (b - a)``, the lower bound for ``C_{t,x}``."""
    a, b = band
    return (np.asarray(integrated) ** 2 @ np.asarray(weights)) / (b - a)
