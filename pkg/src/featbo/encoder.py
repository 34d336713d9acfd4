"""Single-hidden-layer sigmoid encoder mapping ``[0, 1]^D`` into ``(0, 1)^d``."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

HIDDEN_UNITS = 20


@dataclass(frozen=True)
class FeatureMapParams:
    """Weights of ``z = sigmoid(W2 @ sigmoid(W1 @ x + b1) + b2)``.

    Shapes: ``W1 (H, D)``, ``b1 (H,)``, ``W2 (d, H)``, ``b2 (d,)``.
    """

    W1: np.ndarray
    b1: np.ndarray
    W2: np.ndarray
    b2: np.ndarray

    def __post_init__(self):
        W1 = np.asarray(self.W1, dtype=float)
        b1 = np.asarray(self.b1, dtype=float).ravel()
        W2 = np.asarray(self.W2, dtype=float)
        b2 = np.asarray(self.b2, dtype=float).ravel()
        H, D = W1.shape
        d = W2.shape[0]
        if b1.shape != (H,) or W2.shape != (d, H) or b2.shape != (d,):
            raise ValueError(
                f"inconsistent encoder shapes W1{W1.shape} b1{b1.shape} "
                f"W2{W2.shape} b2{b2.shape}"
            )
        for name, v in (("W1", W1), ("b1", b1), ("W2", W2), ("b2", b2)):
            object.__setattr__(self, name, v)

    @property
    def input_dim(self) -> int:
        return self.W1.shape[1]

    @property
    def hidden(self) -> int:
        return self.W1.shape[0]

    @property
    def output_dim(self) -> int:
        return self.W2.shape[0]

    @property
    def size(self) -> int:
        return self.W1.size + self.b1.size + self.W2.size + self.b2.size

    def flatten(self) -> np.ndarray:
        return np.concatenate([self.W1.ravel(), self.b1, self.W2.ravel(), self.b2])

    @classmethod
    def unflatten(cls, theta, D: int, d: int, hidden: int = HIDDEN_UNITS) -> "FeatureMapParams":
        theta = np.asarray(theta, dtype=float)
        sizes = [hidden * D, hidden, d * hidden, d]
        if theta.shape != (sum(sizes),):
            raise ValueError(f"expected {sum(sizes)} encoder parameters, got {theta.shape}")
        o = np.cumsum([0] + sizes)
        return cls(
            theta[o[0]:o[1]].reshape(hidden, D),
            theta[o[1]:o[2]].copy(),
            theta[o[2]:o[3]].reshape(d, hidden),
            theta[o[3]:o[4]].copy(),
        )

    @classmethod
    def initialize(cls, D: int, d: int, rng: np.random.Generator,
                   hidden: int = HIDDEN_UNITS) -> "FeatureMapParams":
        """Weights ~ U(-0.5, 0.5) / sqrt(fan_in), zero biases."""
        W1 = rng.uniform(-0.5, 0.5, size=(hidden, D)) / np.sqrt(D)
        W2 = rng.uniform(-0.5, 0.5, size=(d, hidden)) / np.sqrt(hidden)
        return cls(W1, np.zeros(hidden), W2, np.zeros(d))


def encode(p: FeatureMapParams, X) -> np.ndarray:
    """Rowwise feature map; ``X`` is ``(N, D)`` or a single ``(D,)`` vector."""
    X = np.asarray(X, dtype=float)
    single = X.ndim == 1
    X2 = np.atleast_2d(X)
    if X2.shape[1] != p.input_dim:
        raise ValueError(f"encoder expects {p.input_dim} inputs, got {X2.shape[1]}")
    Z = expit(expit(X2 @ p.W1.T + p.b1) @ p.W2.T + p.b2)
    return Z[0] if single else Z


def encode_forward(p: FeatureMapParams, X: np.ndarray):
    """Forward pass keeping the activations needed by :func:`encode_backward`."""
    Hid = expit(X @ p.W1.T + p.b1)
    Z = expit(Hid @ p.W2.T + p.b2)
    return Z, (X, Hid, Z)


def encode_backward(p: FeatureMapParams, cache, dZ: np.ndarray) -> np.ndarray:
    """Pull ``dL/dZ`` back to a flat gradient over ``(W1, b1, W2, b2)``."""
    X, Hid, Z = cache
    dO = dZ * Z * (1.0 - Z)
    gW2 = dO.T @ Hid
    gb2 = dO.sum(axis=0)
    dH = (dO @ p.W2) * Hid * (1.0 - Hid)
    gW1 = dH.T @ X
    gb1 = dH.sum(axis=0)
    return np.concatenate([gW1.ravel(), gb1, gW2.ravel(), gb2])
