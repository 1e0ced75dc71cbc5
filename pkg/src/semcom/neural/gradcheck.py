"""Central finite-difference oracle for gradient verification.

Meant to run in float64: with step 1e-5 the truncation error of the central
difference sits far below the 1e-4 relative tolerance the tests assert.
"""

from __future__ import annotations

from typing import Callable

import numpy as np


def finite_difference_grad(f: Callable[[], float], x: np.ndarray, step=1e-5) -> np.ndarray:
    """Gradient of scalar f with respect to x, perturbing x in place."""
    grad = np.zeros_like(x, dtype=np.float64)
    flat = x.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + step
        fp = f()
        flat[i] = orig - step
        fm = f()
        flat[i] = orig
        gflat[i] = (fp - fm) / (2.0 * step)
    return grad


def max_relative_error(a: np.ndarray, b: np.ndarray, floor=1e-2) -> float:
    """Elementwise |a-b| / max(|a|, |b|, floor), maximized.

    The floor keeps near-zero entries from reporting meaningless blowups
    while leaving O(1) gradients held to the full relative tolerance.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    denom = np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)
    return float(np.max(np.abs(a - b) / denom)) if a.size else 0.0
