"""Dirichlet heat kernel on [0, 1] and its semigroup action.

``G_t(x, y)`` solves ``u_t = u_xx`` with zero boundary values.  Two
representations are used:

* eigenfunction series ``2 * sum_n sin(n pi x) sin(n pi y) exp(-n^2 pi^2 t)``,
  cheap for large ``t``;
* method of images ``sum_k g_t(x - y + 2k) - g_t(x + y + 2k)`` with the free
  Gaussian ``g_t(z) = exp(-z^2 / 4t) / sqrt(4 pi t)``, cheap for small ``t``.

Both are truncated once an explicit tail bound drops below the tolerance.
"""

from dataclasses import dataclass
import math

import numpy as np
from scipy.special import erf

from .exceptions import KernelDomainError
from .grid import FieldState

DEFAULT_TOLERANCE = 1e-10
DEFAULT_CROSSOVER = 0.025


def _check_domain(t, x, y):
    if not np.all(np.asarray(t) > 0):
        raise KernelDomainError("heat kernel requires t > 0")
    for name, v in (("x", x), ("y", y)):
        v = np.asarray(v)
        if np.any(v < 0) or np.any(v > 1) or np.any(np.isnan(v)):
            raise KernelDomainError(f"{name} must lie in [0, 1]")


def eigen_terms(t, tol):
    """Number of eigenmodes whose omission costs at most ``tol`` in sup norm."""
    a = math.pi ** 2 * t
    n = 1
    while True:
        # sum_{m > n} 2 exp(-m^2 a) <= 2 exp(-(n+1)^2 a) / (1 - exp(-(2n+3) a))
        tail = 2.0 * math.exp(-(n + 1) ** 2 * a) / -math.expm1(-(2 * n + 3) * a)
        if tail <= tol:
            return n
        n += 1


def image_terms(t, tol):
    """Largest shift ``K`` so that images with ``|k| > K`` cost at most ``tol``."""
    amp = 1.0 / math.sqrt(4.0 * math.pi * t)
    k = 1
    while True:
        # every omitted image has |z| >= 2(k+1) - 2 = 2k; four images per shift,
        # geometric-in-k decay bounded by doubling the first omitted term
        tail = 8.0 * amp * math.exp(-(2.0 * k) ** 2 / (4.0 * t))
        if tail <= tol:
            return k
        k += 1


@dataclass(frozen=True)
class KernelEvaluator:
    """Evaluator for ``G_t(x, y)`` with a fixed absolute truncation error.

    Parameters
    ----------
    tolerance : float
        Absolute truncation error target, in ``(0, 1e-6]``.
    crossover_time : float
        Times below this use the image sum, times at or above it the
        eigenfunction series.
    """

    tolerance: float = DEFAULT_TOLERANCE
    crossover_time: float = DEFAULT_CROSSOVER

    def __post_init__(self):
        if not 0 < self.tolerance <= 1e-6:
            raise ValueError("tolerance must lie in (0, 1e-6]")
        if not self.crossover_time > 0:
            raise ValueError("crossover_time must be positive")

    def eigen(self, t, x, y):
        """Eigenfunction-series value, vectorized over ``x`` and ``y``."""
        _check_domain(t, x, y)
        x, y = np.broadcast_arrays(np.asarray(x, float), np.asarray(y, float))
        n = np.arange(1, eigen_terms(t, self.tolerance) + 1, dtype=float)
        decay = np.exp(-(n * math.pi) ** 2 * t)
        modes = np.sin(np.multiply.outer(x, n * math.pi)) * np.sin(np.multiply.outer(y, n * math.pi))
        return 2.0 * modes @ decay

    def images(self, t, x, y):
        """Method-of-images value, vectorized over ``x`` and ``y``."""
        _check_domain(t, x, y)
        x, y = np.broadcast_arrays(np.asarray(x, float), np.asarray(y, float))
        kmax = image_terms(t, self.tolerance)
        shifts = 2.0 * np.arange(-kmax, kmax + 1, dtype=float)
        inv4t = 1.0 / (4.0 * t)
        direct = np.exp(-np.add.outer(x - y, shifts) ** 2 * inv4t)
        mirror = np.exp(-np.add.outer(x + y, shifts) ** 2 * inv4t)
        return (direct - mirror).sum(axis=-1) / math.sqrt(4.0 * math.pi * t)

    def __call__(self, t, x, y):
        t = float(t)
        if t < self.crossover_time:
            return self.images(t, x, y)
        return self.eigen(t, x, y)

    def mass(self, t, x, lo, hi):
        """``int_lo^hi G_t(x, y) dy`` in closed form, vectorized over ``x``.

        Requires ``0 <= lo <= hi <= 1``.
        """
        _check_domain(t, x, [lo, hi])
        x = np.asarray(x, dtype=float)
        if t < self.crossover_time:
            kmax = image_terms(t, self.tolerance) + 1
            shifts = 2.0 * np.arange(-kmax, kmax + 1, dtype=float)
            s = 1.0 / math.sqrt(4.0 * t)

            def prim(z):
                # antiderivative of g_t(z - y) in y, up to sign conventions
                return 0.5 * erf(z * s)

            d = np.add.outer(x, shifts)
            direct = prim(d - lo) - prim(d - hi)
            # mirror image at -y: int g(x + y + 2k) dy
            mirror = prim(d + hi) - prim(d + lo)
            return (direct - mirror).sum(axis=-1)
        n = np.arange(1, eigen_terms(t, self.tolerance) + 1, dtype=float)
        coef = 2.0 * np.exp(-(n * math.pi) ** 2 * t) * (np.cos(n * math.pi * lo) - np.cos(n * math.pi * hi)) / (n * math.pi)
        return np.sin(np.multiply.outer(x, n * math.pi)) @ coef


_DEFAULT = KernelEvaluator()


def dirichlet_kernel(t, x, y, evaluator=None):
    """Dirichlet heat kernel ``G_t(x, y)`` on [0, 1].

    Scalars give a float; arrays broadcast.

    Raises
    ------
    KernelDomainError
        If ``t <= 0`` or ``x``/``y`` fall outside [0, 1].
    """
    ev = evaluator or _DEFAULT
    out = ev(t, x, y)
    return float(out) if np.ndim(out) == 0 else out


def trapezoid_weights(grid):
    w = np.full(grid.n_space + 1, grid.dx)
    w[0] = w[-1] = 0.5 * grid.dx
    return w


def semigroup_apply(t, state, grid, evaluator=None):
    """Node values of ``int_0^1 G_t(x, y) u(y) dy`` by trapezoid quadrature.

    The returned state carries time ``state.time + t`` and exact zeros at the
    endpoints.
    """
    if not t > 0:
        raise KernelDomainError("semigroup_apply requires t > 0")
    ev = evaluator or _DEFAULT
    x = grid.nodes
    kernel = ev(t, x[:, None], x[None, :])
    values = kernel @ (trapezoid_weights(grid) * np.asarray(state.values))
    values[0] = values[-1] = 0.0
    return FieldState(values, state.time + t)


def squared_kernel_integral(t, x, n_terms=200_000):
    """``int_0^t int_0^1 G_s(x, y)^2 dy ds`` with an error bound.

    Uses ``int G_s(x, y)^2 dy = G_{2s}(x, x)`` and integrates the eigen series
    term by term: ``sum_n sin^2(n pi x) (1 - exp(-2 n^2 pi^2 t)) / (n pi)^2``.
    The omitted tail is at most ``1 / (pi^2 n_terms)``.

    Returns
    -------
    value, tail_bound : float, float
    """
    n = np.arange(1, n_terms + 1, dtype=float)
    k = n * math.pi
    terms = np.sin(k * x) ** 2 * -np.expm1(-2.0 * k ** 2 * t) / k ** 2
    return float(terms[::-1].sum()), 1.0 / (math.pi ** 2 * n_terms)
