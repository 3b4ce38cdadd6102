"""Deterministic block-parallel Monte Carlo driver.

Paths are processed in fixed-size blocks keyed by path index.  Each block
reduces to partial sums with numpy's pairwise summation; blocks are then
combined in index order, so results are bit-identical for any worker count
(workers only decide who computes a block, never how sums are grouped).
Workers are forked processes where the platform allows it, since the step
loops are Python-bound and do not scale under the GIL.
"""

from __future__ import annotations

import multiprocessing
import os
import threading

import numpy as np

DEFAULT_BLOCK_SIZE = 2048
_NOISE_BLOCK_BYTES = 256 * 2 ** 20

_FORK_FN = None
_FORK_LOCK = threading.Lock()


def _call_fork_fn(bounds):
    return _FORK_FN(bounds[0], bounds[1])


def default_block_size(n_steps: int, m: int) -> int:
    """Block size targeting a fixed noise-buffer footprint.

    A pure function of (n_steps, m): the block partition is part of the
    deterministic reduction tree, so it must not depend on the machine.
    """
    budget = _NOISE_BLOCK_BYTES // max(1, n_steps * m * 8)
    size = 256
    while size * 2 <= min(budget, 16384):
        size *= 2
    return size


def resolve_threads(threads=None) -> int:
    if threads is not None:
        return max(1, int(threads))
    env = os.environ.get("SEMIGRAD_THREADS")
    if env:
        return max(1, int(env))
    return min(4, os.cpu_count() or 1)


def block_ranges(n_paths: int, block_size: int = DEFAULT_BLOCK_SIZE):
    return [(lo, min(lo + block_size, n_paths))
            for lo in range(0, n_paths, block_size)]


def map_blocks(n_paths: int, block_fn, *, threads=None,
               block_size: int = DEFAULT_BLOCK_SIZE) -> list:
    """Apply block_fn(lo, hi) to every block, returning results in block order."""
    ranges = block_ranges(n_paths, block_size)
    workers = min(resolve_threads(threads), len(ranges))
    if workers <= 1 or multiprocessing.get_start_method(allow_none=False) != "fork":
        return [block_fn(lo, hi) for lo, hi in ranges]
    global _FORK_FN
    with _FORK_LOCK:
        _FORK_FN = block_fn
        try:
            ctx = multiprocessing.get_context("fork")
            with ctx.Pool(processes=workers) as pool:
                return pool.map(_call_fork_fn, ranges, chunksize=1)
        finally:
            _FORK_FN = None


def scalar_stats(values: np.ndarray, ok: np.ndarray):
    """Partial sums (sum, sum of squares, n_ok, n_rejected) for one block."""
    good = values[ok]
    return (float(np.sum(good)), float(np.sum(good * good)),
            int(good.size), int(ok.size - good.size))


def combine_scalar(blocks):
    """Merge per-block partial sums in block order."""
    s1 = 0.0
    s2 = 0.0
    n_ok = 0
    n_rej = 0
    for b1, b2, bok, brej in blocks:
        s1 += b1
        s2 += b2
        n_ok += bok
        n_rej += brej
    return s1, s2, n_ok, n_rej
