"""Reproducible discrete space-time white noise.

Every standard normal is a pure function of ``(seed, path, step, cell)``:
a Philox4x32-10 block keyed by the 64-bit seed and indexed by the counter
``(cell // 2, step, path_lo, path_hi)`` yields two uniforms, which a
Box-Muller transform turns into the normals for cells ``2k`` and ``2k+1``.
Any increment can therefore be regenerated without its predecessors, and
parallel ensembles do not depend on scheduling order.

Column ``i >= 1`` of a noise row drives interior node ``i`` (its dual cell
``[x_i - dx/2, x_i + dx/2]``); column 0 belongs to the two boundary
half-cells, which together also have measure ``dx``, and drives nothing
because the endpoints are pinned.  The ``n_space`` columns thus partition
``[0, 1]`` into sets of measure ``dx``.
"""

from dataclasses import dataclass
import math

import numba
import numpy as np

_M0 = np.uint64(0xD2511F53)
_M1 = np.uint64(0xCD9E8D57)
_W0 = np.uint64(0x9E3779B9)
_W1 = np.uint64(0xBB67AE85)
_MASK = np.uint64(0xFFFFFFFF)
_SHIFT32 = np.uint64(32)
_TWO_PI = 2.0 * math.pi
_INV_2_53 = 1.0 / 9007199254740992.0


@numba.njit(cache=True, inline="always")
def _philox4x32_10(c0, c1, c2, c3, k0, k1):
    for _ in range(10):
        p0 = _M0 * c0
        p1 = _M1 * c2
        hi0 = p0 >> _SHIFT32
        lo0 = p0 & _MASK
        hi1 = p1 >> _SHIFT32
        lo1 = p1 & _MASK
        c0 = (hi1 ^ c1 ^ k0) & _MASK
        c1 = lo1
        c2 = (hi0 ^ c3 ^ k1) & _MASK
        c3 = lo0
        k0 = (k0 + _W0) & _MASK
        k1 = (k1 + _W1) & _MASK
    return c0, c1, c2, c3


@numba.njit(cache=True)
def philox4x32(counter, key):
    """Philox4x32-10 block for a 4-word counter and 2-word key (uint32 values)."""
    out = np.empty(4, dtype=np.uint64)
    r0, r1, r2, r3 = _philox4x32_10(
        np.uint64(counter[0]), np.uint64(counter[1]), np.uint64(counter[2]),
        np.uint64(counter[3]), np.uint64(key[0]), np.uint64(key[1]))
    out[0] = r0
    out[1] = r1
    out[2] = r2
    out[3] = r3
    return out


@numba.njit(cache=True)
def _fill_normals(out, seed, paths, steps, n_space):
    k0 = np.uint64(seed) & _MASK
    k1 = np.uint64(seed) >> _SHIFT32
    n_pairs = (n_space + 1) // 2
    for p in range(paths.size):
        path = np.uint64(paths[p])
        c2 = path & _MASK
        c3 = path >> _SHIFT32
        for s in range(steps.size):
            c1 = np.uint64(steps[s])
            for k in range(n_pairs):
                r0, r1, r2, r3 = _philox4x32_10(np.uint64(k), c1, c2, c3, k0, k1)
                # 53-bit uniforms; u1 in (0, 1] keeps the log finite
                u1 = 1.0 - ((r0 >> np.uint64(5)) * 67108864.0 + (r1 >> np.uint64(6))) * _INV_2_53
                u2 = ((r2 >> np.uint64(5)) * 67108864.0 + (r3 >> np.uint64(6))) * _INV_2_53
                rad = math.sqrt(-2.0 * math.log(u1))
                ang = _TWO_PI * u2
                out[p, s, 2 * k] = rad * math.cos(ang)
                if 2 * k + 1 < n_space:
                    out[p, s, 2 * k + 1] = rad * math.sin(ang)


def standard_normals(seed, paths, steps, n_space):
    """Standard normals indexed by ``(path, step, cell)``.

    Parameters
    ----------
    seed : int
        Master seed, ``0 <= seed < 2**64``.
    paths, steps : int or array_like of int
        Path and time-step indices.
    n_space : int
        Number of cells per noise row.

    Returns
    -------
    ndarray of shape (len(paths), len(steps), n_space)
    """
    seed = int(seed)
    if not 0 <= seed < 2 ** 64:
        raise ValueError("seed must fit in 64 unsigned bits")
    paths = np.atleast_1d(np.asarray(paths, dtype=np.int64))
    steps = np.atleast_1d(np.asarray(steps, dtype=np.int64))
    if np.any(paths < 0) or np.any(steps < 0):
        raise ValueError("path and step indices must be nonnegative")
    out = np.empty((paths.size, steps.size, int(n_space)))
    _fill_normals(out, np.uint64(seed), paths, steps, int(n_space))
    return out


def noise_row(seed, paths, step, n_space):
    """Normals for one time step over several paths, shape ``(len(paths), n_space)``."""
    return standard_normals(seed, paths, [step], n_space)[:, 0, :]


@dataclass(frozen=True, eq=False)
class NoiseRealization:
    """White-noise increments for one path on a grid.

    ``normals[j, i]`` is a standard normal; the increment ``W`` assigns to
    cell ``(j, i)`` is ``normals[j, i] * sqrt(dt * dx)``.
    """

    normals: np.ndarray
    seed: int
    path_index: int
    grid: object

    def __post_init__(self):
        self.normals.flags.writeable = False

    @property
    def scale(self):
        return math.sqrt(self.grid.dt * self.grid.dx)

    @property
    def increments(self):
        return self.normals * self.scale

    def row(self, j):
        return self.normals[j]

    def __len__(self):
        return self.normals.size


def sample_white_noise(grid, seed, path_index):
    """Generate the noise realization of path ``path_index`` under ``seed``."""
    normals = standard_normals(seed, [path_index], np.arange(grid.n_steps), grid.n_space)[0]
    return NoiseRealization(normals, int(seed), int(path_index), grid)


def couple(realization):
    """Share ``realization`` with a second solver run.

    The returned handle aliases the same immutable increment array; nothing
    is resampled.
    """
    return NoiseRealization(realization.normals, realization.seed,
                            realization.path_index, realization.grid)
