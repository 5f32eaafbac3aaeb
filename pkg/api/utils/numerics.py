"""Numerical helpers: deterministic reductions, finite differences, quadrature rules, error propagation."""

from typing import Callable, Optional, Tuple

import numpy as np
from scipy import integrate

from ..spinglass.constants import BOOTSTRAP_RESAMPLES, CONFIDENCE_LEVEL


def tree_sum(values: np.ndarray) -> np.ndarray:
    """Sum along axis 0 by pairwise halving, in an order fixed by the array length alone."""
    values = np.asarray(values, dtype=float)
    if values.shape[0] == 0:
        return np.zeros(values.shape[1:])
    while values.shape[0] > 1:
        if values.shape[0] % 2:
            values = np.concatenate([values, np.zeros_like(values[:1])])
        values = values[0::2] + values[1::2]
    return values[0]


def tree_mean(values: np.ndarray, weights: Optional[np.ndarray] = None) -> np.ndarray:
    """Mean along axis 0 (weighted when weights are given) using tree_sum."""
    values = np.asarray(values, dtype=float)
    if weights is None:
        return tree_sum(values) / values.shape[0]
    weights = np.asarray(weights, dtype=float).reshape((-1,) + (1,) * (values.ndim - 1))
    return tree_sum(weights * values)


def central_difference(fn: Callable[[float], np.ndarray], x: float, step: float) -> np.ndarray:
    """Central difference of fn at x with one Richardson step (error O(step^4))."""
    coarse = (np.asarray(fn(x + step)) - np.asarray(fn(x - step))) / (2.0 * step)
    half = step / 2.0
    fine = (np.asarray(fn(x + half)) - np.asarray(fn(x - half))) / (2.0 * half)
    return (4.0 * fine - coarse) / 3.0


def integration_weights(grid: np.ndarray) -> np.ndarray:
    """Weights w with sum(w * y) equal to the composite rule on grid.

    Simpson on odd-sized grids, trapezoid on even-sized ones.
    """
    grid = np.asarray(grid, dtype=float)
    if grid.size < 2 or np.ptp(grid) == 0.0:
        return np.zeros(grid.size)
    basis = np.eye(grid.size)
    if grid.size % 2:
        return integrate.simpson(basis, x=grid, axis=-1)
    return integrate.trapezoid(basis, x=grid, axis=-1)


def delta_method(gradient: np.ndarray, covariance: np.ndarray) -> float:
    """First-order standard error of a smooth function of estimated means."""
    gradient = np.asarray(gradient, dtype=float)
    variance = float(gradient @ np.asarray(covariance, dtype=float) @ gradient)
    return float(np.sqrt(max(variance, 0.0)))


def bootstrap_rng(seed: int, stream: int) -> np.random.Generator:
    """Counter-based generator reserved for resampling, disjoint from disorder streams."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(stream,))))


def bootstrap_indices(size: int, rng: np.random.Generator,
                      resamples: int = BOOTSTRAP_RESAMPLES) -> np.ndarray:
    """Row indices of `resamples` bootstrap resamples of a sample of the given size."""
    return rng.integers(0, size, size=(resamples, size))


def percentile_interval(replicates: np.ndarray,
                        level: float = CONFIDENCE_LEVEL) -> Tuple[float, float]:
    """Two-sided percentile confidence interval of bootstrap replicates."""
    tail = (1.0 - level) / 2.0
    low, high = np.quantile(np.asarray(replicates, dtype=float), [tail, 1.0 - tail])
    return float(low), float(high)


def walsh_hadamard(values: np.ndarray) -> np.ndarray:
    """Walsh-Hadamard transform along the last axis (natural binary order).

    out[..., m] = sum_s values[..., s] * (-1)**popcount(s & m); the last axis
    length must be a power of two.
    """
    out = np.array(values, dtype=float, copy=True)
    size = out.shape[-1]
    if size & (size - 1):
        raise ValueError(f"Transform length must be a power of two, got {size}")
    lead = out.shape[:-1]
    half = 1
    while half < size:
        view = out.reshape(lead + (size // (2 * half), 2, half))
        low = view[..., 0, :].copy()
        high = view[..., 1, :].copy()
        view[..., 0, :] = low + high
        view[..., 1, :] = low - high
        half *= 2
    return out


def parity_signs(states: np.ndarray, masks: np.ndarray) -> np.ndarray:
    """(-1)**popcount(states & masks) as floats, broadcasting states against masks."""
    overlap = np.bitwise_and(np.asarray(states, dtype=np.int64), np.asarray(masks, dtype=np.int64))
    return 1.0 - 2.0 * (np.bitwise_count(overlap) & 1)
