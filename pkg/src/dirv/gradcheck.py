"""Central finite-difference gradient checks for the loss functions."""

from __future__ import annotations

from typing import Callable

import numpy as np


def numeric_gradient(fn: Callable[[np.ndarray], float], x: np.ndarray, step: float = 1e-4) -> np.ndarray:
    """Central differences ``(f(x + h e_i) - f(x - h e_i)) / 2h`` for every entry of ``x``."""
    x = np.array(x, dtype=np.float64)
    grad = np.zeros_like(x)
    flat, gflat = x.reshape(-1), grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + step
        up = fn(x)
        flat[i] = orig - step
        down = fn(x)
        flat[i] = orig
        gflat[i] = (up - down) / (2.0 * step)
    return grad


def max_relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-8) -> float:
    """``max |a - n| / max(|a|, |n|, floor)``; the floor keeps exact zeros from dividing by zero."""
    a = np.asarray(analytic, dtype=np.float64)
    n = np.asarray(numeric, dtype=np.float64)
    if a.size == 0:
        return 0.0
    denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
    return float(np.max(np.abs(a - n) / denom))


def check_gradient(fn: Callable[[np.ndarray], tuple[float, np.ndarray]], x: np.ndarray,
                   step: float = 1e-4, floor: float | None = None) -> float:
    """Max relative error between ``fn``'s analytic gradient and central differences.

    Central differences cannot resolve gradient entries much smaller than
    ``eps * |f| / step`` (about ``1e-12 |f|`` at the default step), so by
    default the denominator is floored at ``1e-6 * max(1, |f|)``.  Entries
    above the floor are compared with a true relative error.
    """
    value, analytic = fn(x)
    if floor is None:
        floor = 1e-6 * max(1.0, abs(value))
    numeric = numeric_gradient(lambda z: fn(z)[0], x, step)
    return max_relative_error(analytic, numeric, floor)
