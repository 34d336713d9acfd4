"""Stationary ARD kernels (Matern-5/2, squared exponential) with gradients.

Hyperparameters are held in log space.  ``r^2 = sum_j (z_j - z'_j)^2 / l_j^2``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _accel

KINDS = {"matern52": _accel.MATERN52, "se": _accel.SQEXP}
JITTER = 1e-8


@dataclass(frozen=True)
class KernelParams:
    kind: str
    log_lengthscales: np.ndarray
    log_variance: float

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown kernel kind {self.kind!r}; choose from {sorted(KINDS)}")
        ll = np.atleast_1d(np.asarray(self.log_lengthscales, dtype=float)).copy()
        object.__setattr__(self, "log_lengthscales", ll)
        object.__setattr__(self, "log_variance", float(self.log_variance))

    @classmethod
    def default(cls, d: int, kind: str = "matern52") -> "KernelParams":
        return cls(kind, np.zeros(d), 0.0)

    @property
    def dim(self) -> int:
        return self.log_lengthscales.shape[0]

    @property
    def lengthscales(self) -> np.ndarray:
        return np.exp(self.log_lengthscales)

    @property
    def variance(self) -> float:
        return float(np.exp(self.log_variance))

    @property
    def inv_ls2(self) -> np.ndarray:
        return np.exp(-2.0 * self.log_lengthscales)

    @property
    def code(self) -> int:
        return KINDS[self.kind]

    def flatten(self) -> np.ndarray:
        return np.append(self.log_lengthscales, self.log_variance)

    @classmethod
    def unflatten(cls, kind: str, theta) -> "KernelParams":
        theta = np.asarray(theta, dtype=float)
        return cls(kind, theta[:-1], theta[-1])


def _check(kp: KernelParams, Z, Z2):
    Z = np.atleast_2d(np.asarray(Z, dtype=float))
    Z2 = np.atleast_2d(np.asarray(Z2, dtype=float))
    if Z.shape[1] != kp.dim or Z2.shape[1] != kp.dim:
        raise ValueError(
            f"kernel has {kp.dim} lengthscales but inputs have "
            f"{Z.shape[1]} and {Z2.shape[1]} columns"
        )
    return Z, Z2


def kernel_matrix(kp: KernelParams, Z, Z2=None) -> np.ndarray:
    """Cross-covariance ``k(Z, Z2)``; ``Z2`` defaults to ``Z``."""
    if Z2 is None:
        Z2 = Z
    Z, Z2 = _check(kp, Z, Z2)
    r2 = _accel.scaled_sqdist(Z, Z2, kp.inv_ls2)
    K, _ = _accel.kernel_from_r2(r2, kp.variance, kp.code)
    return K


def kernel_with_grad(kp: KernelParams, Z, Z2):
    """Return ``k(Z, Z2)`` and ``dk/dr^2`` (both ``(n, m)``)."""
    Z, Z2 = _check(kp, Z, Z2)
    r2 = _accel.scaled_sqdist(Z, Z2, kp.inv_ls2)
    return _accel.kernel_from_r2(r2, kp.variance, kp.code)


def train_matrix(kp: KernelParams, Z):
    """``k(Z, Z) + JITTER * variance * I`` plus ``dk/dr^2`` for backprop."""
    K, dK = kernel_with_grad(kp, Z, Z)
    K = K + JITTER * kp.variance * np.eye(K.shape[0])
    return K, dK


def train_matrix_backward(kp: KernelParams, Z, K, dK, G):
    """Gradients of a scalar through ``train_matrix``.

    ``G`` is ``dL/dK`` for the jittered training matrix ``K``.  Returns
    ``(dZ, dlog_lengthscales, dlog_variance)``.
    """
    P = G * dK
    dA, dB, dlogls = _accel.kernel_backward(P, Z, Z, kp.inv_ls2)
    # K (jitter included) is proportional to the variance
    dlogvar = float(np.sum(G * K))
    return dA + dB, dlogls, dlogvar


def cross_grad(kp: KernelParams, Zs, Z):
    """``k(Zs, Z)`` with its gradient in ``Zs``, shape ``(m, n, d)``."""
    Zs, Z = _check(kp, Zs, Z)
    K, dK = kernel_with_grad(kp, Zs, Z)
    diff = Zs[:, None, :] - Z[None, :, :]
    J = 2.0 * dK[:, :, None] * diff * kp.inv_ls2
    return K, J
