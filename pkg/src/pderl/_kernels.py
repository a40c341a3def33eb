"""Fused in-place update kernels for the training hot loop.

These mutate arrays owned by the caller and implement exactly the same
per-element arithmetic as the pure ops in nets.adam_step (tested for
agreement). They exist because multi-pass numpy updates over megabyte
parameter vectors dominate the per-step cost otherwise.
"""
from __future__ import annotations

import numpy as np
from numba import njit


@njit(cache=True)
def adam_inplace(params, m, v, grad, lr, beta1, beta2, eps, bc1, bc2):
    """bc1 = 1 - beta1**t, bc2 = 1 - beta2**t for the step being applied."""
    for i in range(params.size):
        g = grad[i]
        mi = beta1 * m[i] + (1.0 - beta1) * g
        vi = beta2 * v[i] + (1.0 - beta2) * (g * g)
        m[i] = mi
        v[i] = vi
        params[i] = params[i] - lr * (mi / bc1) / (np.sqrt(vi / bc2) + eps)


@njit(cache=True)
def lerp_inplace(target, source, rho):
    """target <- rho * source + (1 - rho) * target."""
    for i in range(target.size):
        target[i] = rho * source[i] + (1.0 - rho) * target[i]


def grad_check_finite(grad: np.ndarray) -> None:
    finite = np.isfinite(grad)
    if not finite.all():
        idx = int(np.argmin(finite))
        raise ValueError(f"non-finite gradient at parameter index {idx}: {grad[idx]}")
