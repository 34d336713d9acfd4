"""Gradient plumbing shared by the training objective and its tests.

A *loss* here is any callable ``loss(params) -> (value, gradient)``.  The
joint training objective implements its gradient by hand-written reverse
accumulation (encoder backprop, kernel derivatives, Kronecker eigen-algebra);
:func:`loss_gradient` is the checked entry point the optimizers use.
"""

from __future__ import annotations

from typing import Callable

import numpy as np


class NonFiniteLossError(FloatingPointError):
    """The loss (or its gradient) is not finite at the requested parameters."""


def loss_gradient(loss: Callable, params) -> np.ndarray:
    """Evaluate ``loss`` and return its gradient after validating it."""
    params = np.asarray(params, dtype=float)
    if params.ndim != 1:
        raise ValueError(f"params must be a flat vector, got shape {params.shape}")
    value, grad = loss(params)
    grad = np.asarray(grad, dtype=float)
    if grad.shape != params.shape:
        raise ValueError(f"gradient shape {grad.shape} does not match params {params.shape}")
    if not np.isfinite(value) or not np.all(np.isfinite(grad)):
        raise NonFiniteLossError(f"non-finite loss {value!r} at given parameters")
    return grad


def finite_difference(fun: Callable[[np.ndarray], float], params, idx=None,
                      step: float = 1e-5) -> np.ndarray:
    """Central differences of a scalar function at ``params``.

    Only coordinates in ``idx`` are differenced (all by default); the step is
    scaled by ``max(1, |theta_i|)``.
    """
    params = np.asarray(params, dtype=float)
    if idx is None:
        idx = np.arange(params.size)
    out = np.empty(len(idx))
    for k, i in enumerate(idx):
        h = step * max(1.0, abs(params[i]))
        tp = params.copy()
        tm = params.copy()
        tp[i] += h
        tm[i] -= h
        out[k] = (fun(tp) - fun(tm)) / (2.0 * h)
    return out


def relative_error(a, b, floor: float = 1e-6) -> np.ndarray:
    """Elementwise ``|a - b| / max(|a|, |b|, floor)``."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    return np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)
