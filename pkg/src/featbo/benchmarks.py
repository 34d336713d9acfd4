"""Test objectives with low intrinsic dimension, embedded into ``[0, 1]^D``.

Centered objectives (Rosenbrock, product of sines) see ``u = c (2x - 1)``
with ``c = 2 sqrt(d)``, then ``z = R u`` (linear) or
``z = -pi + 2 pi sigmoid(R u)`` (nonlinear), or ``z = u`` (identity).
The Thomson potential reads ``x`` directly as angle pairs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.special import expit, logit

from . import _accel

EMBEDDINGS = ("identity", "linear", "sigmoid")

# 6-electron Thomson minimum from a local optimization started at a perturbed
# octahedron (tests/oracles.py::thomson6_reference); minimizer is the octahedron.
THOMSON6_FMIN = 9.98528137423858
THOMSON6_ANGLES = np.array([0.0, 0.0, 0.0, 0.5, 0.25, 0.5, 0.5, 0.5, 0.75, 0.5, 0.0, 1.0])


def rosenbrock(z) -> float:
    z = np.asarray(z, dtype=float)
    if z.shape[-1] < 2:
        raise ValueError("Rosenbrock needs d >= 2")
    return float(np.sum(100.0 * (z[1:] - z[:-1] ** 2) ** 2 + (z[:-1] - 1.0) ** 2))


def product_of_sines(z) -> float:
    """``10 sin(z_1) * prod_i sin(z_i)``; ``sin(z_1)`` therefore enters squared."""
    z = np.asarray(z, dtype=float)
    return float(10.0 * math.sin(z[0]) * np.prod(np.sin(z)))


def angles_to_points(angles) -> np.ndarray:
    """Map ``[0, 1]`` (azimuth, polar) pairs to points on the unit sphere."""
    a = np.asarray(angles, dtype=float).reshape(-1, 2)
    phi = 2.0 * np.pi * a[:, 0]
    theta = np.pi * a[:, 1]
    st = np.sin(theta)
    return np.column_stack([st * np.cos(phi), st * np.sin(phi), np.cos(theta)])


def thomson_potential(angles) -> float:
    """Coulomb energy ``sum_{i<j} 1/|p_i - p_j|`` of electrons on the unit sphere.

    Coincident pairs (distance below 1e-12) contribute a cap of 1e12.
    """
    angles = np.asarray(angles, dtype=float)
    if angles.size % 2:
        raise ValueError("angles must come in (azimuth, polar) pairs")
    return _accel.thomson_energy(angles_to_points(angles))


def make_orthogonal_embedding(d: int, D: int, seed: int = 0) -> np.ndarray:
    """Seeded ``(d, D)`` matrix with orthonormal rows."""
    if d > D:
        raise ValueError(f"cannot embed d={d} into D={D} < d")
    rng = np.random.default_rng(seed)
    G = rng.standard_normal((D, d))
    Q, Rr = np.linalg.qr(G)
    Q = Q * np.sign(np.where(np.diag(Rr) == 0, 1.0, np.diag(Rr)))
    return np.ascontiguousarray(Q.T)


@dataclass(frozen=True)
class Intrinsic:
    name: str
    func: Callable
    dim: int
    centered: bool
    f_min: float | None
    minimizer: np.ndarray | None = None


def rosenbrock_intrinsic(d: int) -> Intrinsic:
    return Intrinsic("rosenbrock", rosenbrock, d, True, 0.0, np.ones(d))


def sines_intrinsic(d: int) -> Intrinsic:
    if d == 1:
        # 10 sin^2(z) >= 0
        return Intrinsic("product_of_sines", product_of_sines, 1, True, 0.0, np.zeros(1))
    zstar = np.full(d, np.pi / 2)
    zstar[1] = -np.pi / 2
    return Intrinsic("product_of_sines", product_of_sines, d, True, -10.0, zstar)


def thomson_intrinsic(n_p: int) -> Intrinsic:
    if n_p == 6:
        return Intrinsic("thomson", thomson_potential, 2 * n_p, False, THOMSON6_FMIN, THOMSON6_ANGLES)
    if n_p == 2:
        return Intrinsic("thomson", thomson_potential, 4, False, 0.5, np.array([0.0, 0.0, 0.0, 1.0]))
    return Intrinsic("thomson", thomson_potential, 2 * n_p, False, None)


class OutOfDomainError(ValueError):
    pass


@dataclass(frozen=True)
class EmbeddedObjective:
    """An intrinsic objective lifted into ``[0, 1]^D``."""

    intrinsic: Intrinsic
    embedding: str
    D: int
    R: np.ndarray | None = None
    noise_variance: float = 1e-4
    name: str = ""
    scale: float = field(default=0.0)

    def __post_init__(self):
        if self.embedding not in EMBEDDINGS:
            raise ValueError(f"unknown embedding {self.embedding!r}")
        d = self.intrinsic.dim
        if self.embedding == "identity":
            if self.D != d:
                raise ValueError("identity embedding needs D equal to the intrinsic dimension")
        else:
            R = np.asarray(self.R, dtype=float)
            if R.shape != (d, self.D):
                raise ValueError(f"embedding matrix must be {(d, self.D)}, got {R.shape}")
            if np.max(np.abs(R @ R.T - np.eye(d))) > 1e-10:
                raise ValueError("embedding matrix rows are not orthonormal")
            object.__setattr__(self, "R", R)
        if self.noise_variance < 0:
            raise ValueError("noise_variance must be >= 0")
        if self.scale == 0.0:
            object.__setattr__(self, "scale", 2.0 * math.sqrt(d))

    @property
    def d(self) -> int:
        return self.intrinsic.dim

    @property
    def f_min(self) -> float | None:
        return self.intrinsic.f_min

    def to_intrinsic(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if not self.intrinsic.centered:
            return x
        u = self.scale * (2.0 * x - 1.0)
        if self.embedding == "identity":
            return u
        t = self.R @ u
        if self.embedding == "linear":
            return t
        return -np.pi + 2.0 * np.pi * expit(t)

    def f_true(self, x) -> float:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.D,):
            raise ValueError(f"expected a point of dimension {self.D}, got {x.shape}")
        if np.any(x < 0.0) or np.any(x > 1.0) or not np.all(np.isfinite(x)):
            raise OutOfDomainError("query point lies outside [0, 1]^D")
        return float(self.intrinsic.func(self.to_intrinsic(x)))

    def evaluate(self, x, rng: np.random.Generator):
        """Return ``(y_noisy, f_true)``; noise is ``N(0, noise_variance)``."""
        f = self.f_true(x)
        if self.noise_variance > 0:
            y = f + math.sqrt(self.noise_variance) * float(rng.standard_normal())
        else:
            y = f
        return y, f

    def preimage(self, z) -> np.ndarray:
        """A point of ``[0, 1]^D`` mapping onto intrinsic point ``z``.

        Uses ``R^T`` as right inverse; raises if the preimage leaves the box.
        """
        z = np.asarray(z, dtype=float)
        if not self.intrinsic.centered:
            x = z
        else:
            if self.embedding == "identity":
                u = z
            elif self.embedding == "linear":
                u = self.R.T @ z
            else:
                u = self.R.T @ logit((z + np.pi) / (2.0 * np.pi))
            x = (u / self.scale + 1.0) / 2.0
        if np.any(x < -1e-12) or np.any(x > 1 + 1e-12):
            raise OutOfDomainError("intrinsic point is not reachable inside [0, 1]^D")
        return np.clip(x, 0.0, 1.0)

    def optimum_x(self) -> np.ndarray:
        if self.intrinsic.minimizer is None:
            raise ValueError("no known minimizer for this benchmark")
        return self.preimage(self.intrinsic.minimizer)


def make_objective(kind: str, d: int, embedding: str, D: int, noise_variance: float = 1e-4,
                   embedding_seed: int = 0, name: str = "") -> EmbeddedObjective:
    """Build an embedded objective; ``kind`` is rosenbrock, sines or thomson."""
    if kind == "rosenbrock":
        intr = rosenbrock_intrinsic(d)
    elif kind == "sines":
        intr = sines_intrinsic(d)
    elif kind == "thomson":
        if d % 2:
            raise ValueError("Thomson dimension must be even")
        intr = thomson_intrinsic(d // 2)
        embedding, D = "identity", d
    else:
        raise ValueError(f"unknown objective kind {kind!r}")
    R = None if embedding == "identity" else make_orthogonal_embedding(d, D, embedding_seed)
    return EmbeddedObjective(intr, embedding, D, R, noise_variance, name or kind)


# name -> (kind, intrinsic d, embedding, D, default feature dimension)
REGISTRY = {
    "rosenbrock-linear": ("rosenbrock", 10, "linear", 60, 10),
    "sines-linear": ("sines", 10, "linear", 60, 10),
    "sines-nonlinear": ("sines", 10, "sigmoid", 60, 10),
    "thomson6": ("thomson", 12, "identity", 12, 6),
    "sines-identity-small": ("sines", 6, "identity", 6, 2),
}


def get_benchmark(name: str, noise_variance: float = 1e-4, embedding_seed: int = 0,
                  D: int | None = None, intrinsic_dim: int | None = None) -> EmbeddedObjective:
    """Look up a registered benchmark, optionally overriding ``D`` or ``d``."""
    if name not in REGISTRY:
        raise KeyError(f"unknown benchmark {name!r}; available: {', '.join(REGISTRY)}")
    kind, d, emb, DD, _ = REGISTRY[name]
    d = intrinsic_dim or d
    if emb == "identity":
        DD = d
        if D is not None and D != d:
            raise ValueError(f"{name} uses an identity embedding; D must equal {d}")
    else:
        DD = D or DD
    return make_objective(kind, d, emb, DD, noise_variance, embedding_seed, name)


def default_feature_dim(name: str) -> int:
    return REGISTRY[name][4]
