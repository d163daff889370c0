"""Deterministic block-parallel Monte Carlo driver.

Paths are split into blocks of a fixed size that does not depend on the
number of workers, each block is a pure function of its path indices, and
results are concatenated in block order.  Output is therefore identical for
any worker count.
"""

import multiprocessing as mp

import numpy as np

_TASK = None


def _init_worker(fn):
    global _TASK
    _TASK = fn


def _run_block(bounds):
    start, stop = bounds
    return _TASK(np.arange(start, stop, dtype=np.int64))


def blocks(n_paths, block_size):
    return [(s, min(n_paths, s + block_size)) for s in range(0, n_paths, block_size)]


def run_blocks(fn, n_paths, block_size=4096, workers=1):
    """Evaluate ``fn(path_indices)`` over ``range(n_paths)`` in fixed-size blocks.

    Parameters
    ----------
    fn : callable
        Maps an int64 array of path indices to a dict of arrays whose first
        axis runs over those paths.  Closures are fine: workers are forked.
    workers : int
        Number of processes; ``1`` runs in-process.

    Returns
    -------
    dict of ndarray
        Per-key concatenation in path order.
    """
    if n_paths < 1:
        raise ValueError("need at least one path")
    bounds = blocks(n_paths, block_size)
    if workers <= 1 or len(bounds) == 1:
        parts = [fn(np.arange(s, e, dtype=np.int64)) for s, e in bounds]
    else:
        ctx = mp.get_context("fork")
        with ctx.Pool(min(workers, len(bounds)), initializer=_init_worker, initargs=(fn,)) as pool:
            parts = pool.map(_run_block, bounds, chunksize=1)
    return {k: np.concatenate([p[k] for p in parts]) for k in parts[0]}
