"""Monte Carlo layer: one noise path per seed, results returned in seed order."""

from __future__ import annotations

import hashlib
import json
import math
from concurrent.futures import ProcessPoolExecutor
from typing import Callable, Sequence

import numpy as np

from .grid import Grid1D, project_initial
from .noise import sample_path
from .solver import SchemeConfig, Trajectory, solve_path

__all__ = ["run_paths", "single_grid_micro_step", "solve_seed", "tree_sum", "tree_mean",
           "mean_and_se", "stable_hash"]


def run_paths(worker: Callable, tasks: Sequence, threads: int = 1) -> list:
    """Map ``worker`` over ``tasks``; output order never depends on ``threads``."""
    if threads <= 1 or len(tasks) <= 1:
        return [worker(t) for t in tasks]
    chunk = max(1, len(tasks) // (4 * threads))
    with ProcessPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(worker, tasks, chunksize=chunk))


def single_grid_micro_step(config: SchemeConfig, grid: Grid1D) -> float:
    return config.T / math.ceil(config.T / config.dt_max(grid) - 1e-12)


def solve_seed(task) -> Trajectory:
    config, grid, u0, seed = task
    dtm = single_grid_micro_step(config, grid)
    path = sample_path(config.levy, config.T, dtm, seed)
    return solve_path(config, grid, project_initial(u0, grid), path)


def tree_sum(x, axis: int = 0) -> np.ndarray:
    """Sum along ``axis`` with a fixed pairwise tree (bit-stable under regrouping)."""
    a = np.moveaxis(np.asarray(x, dtype=np.float64), axis, 0)
    while a.shape[0] > 1:
        m = a.shape[0] // 2
        a = np.concatenate([a[0:2 * m:2] + a[1:2 * m:2], a[2 * m:]])
    return a[0]


def tree_mean(x, axis: int = 0) -> np.ndarray:
    a = np.asarray(x)
    return tree_sum(a, axis) / a.shape[axis]


def mean_and_se(samples, axis: int = 0):
    """Sample mean and ``std(ddof=1)/sqrt(n)`` along ``axis``.

    Samples are sorted along ``axis`` before the tree reduction, so the result
    is bitwise independent of the order in which paths are supplied.
    """
    a = np.sort(np.asarray(samples, dtype=np.float64), axis=axis)
    n = a.shape[axis]
    if n < 2:
        raise ValueError("at least two samples are needed for a standard error")
    m = tree_mean(a, axis)
    dev = a - np.expand_dims(m, axis)
    var = tree_sum(dev * dev, axis) / (n - 1)
    return m, np.sqrt(var / n)


def stable_hash(obj) -> str:
    blob = json.dumps(obj, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]
