"""Central finite differences for verifying analytic gradients.

The estimator never touches any backward code, so it stays an independent
reference for whatever it is checking. Run it at float64; the default step
of 1e-5 is too coarse for float32.
"""

from __future__ import annotations

from typing import Callable, Mapping

import numpy as np


def central_difference(
    loss_fn: Callable[[], float],
    arrays: Mapping[str, np.ndarray],
    step: float = 1e-5,
) -> dict[str, np.ndarray]:
    """Estimate d loss / d array for every entry of every array.

    ``loss_fn`` must read the arrays in ``arrays`` (they are perturbed in
    place, two evaluations per element, then restored exactly).
    """
    grads: dict[str, np.ndarray] = {}
    for name, arr in arrays.items():
        grad = np.zeros_like(arr)
        flat, gflat = arr.reshape(-1), grad.reshape(-1)
        for idx in range(flat.size):
            orig = flat[idx]
            flat[idx] = orig + step
            hi = loss_fn()
            flat[idx] = orig - step
            lo = loss_fn()
            flat[idx] = orig
            gflat[idx] = (hi - lo) / (2.0 * step)
        grads[name] = grad
    return grads


def max_relative_error(
    analytic: Mapping[str, np.ndarray],
    numeric: Mapping[str, np.ndarray],
    scale_floor: float = 1e-3,
) -> float:
    """Worst-case |a - n| / max(|a|, |n|, scale_floor) over all entries.

    ``scale_floor`` keeps near-zero gradient pairs from dividing by the
    finite-difference noise floor; below it the comparison is effectively
    absolute at scale_floor times the tolerance being asserted.
    """
    worst = 0.0
    for name, a in analytic.items():
        n = numeric[name]
        diff = np.abs(a - n)
        scale = np.maximum(np.maximum(np.abs(a), np.abs(n)), scale_floor)
        worst = max(worst, float(np.max(diff / scale)))
    return worst
