"""Summation helpers with an order-fixed mode.

In deterministic mode every reduction goes through numpy's pairwise
``np.sum`` (single threaded, fixed order); otherwise BLAS products are used,
whose reduction order may depend on the thread count.
"""

import numpy as np


def total(x: np.ndarray, deterministic: bool = True) -> float:
    return float(np.sum(x))


def weighted_total(x: np.ndarray, w: np.ndarray, deterministic: bool = True) -> float:
    """``sum_ij x_ij w_j`` for a 2-d ``x`` and column weights ``w``."""
    if deterministic:
        return float(np.sum(np.sum(x * w, axis=1)))
    return float(np.sum(x @ w))


def row_sums(x: np.ndarray, deterministic: bool = True) -> np.ndarray:
    if deterministic:
        return np.sum(x, axis=1)
    return x @ np.ones(x.shape[1])


def dot(x: np.ndarray, y: np.ndarray, deterministic: bool = True) -> float:
    if deterministic:
        return float(np.sum(x * y))
    return float(np.dot(x, y))
