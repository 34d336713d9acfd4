"""Exact linear algebra for Kronecker-structured covariances plus spherical noise.

A covariance ``K_1 (x) K_2 (x) ... (x) K_W + s2 * I`` is never materialized.
Products with the Kronecker part go through a sequence of small matrix-tensor
products, and solves / log-determinants use the factorwise
eigendecompositions.  Index ordering follows :func:`numpy.kron`.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import reduce
from typing import Sequence

import numpy as np

SYMMETRY_TOL = 1e-10


class KronDimensionError(ValueError):
    """Raised when a vector length does not match the Kronecker product size."""


def _as_factor_list(factors) -> list[np.ndarray]:
    if isinstance(factors, KronFactors):
        return list(factors.factors)
    if isinstance(factors, np.ndarray) and factors.ndim == 2:
        return [factors]
    return [np.asarray(K, dtype=float) for K in factors]


@dataclass(frozen=True)
class KronFactors:
    """Ordered square factors ``K_1, ..., K_W`` of a Kronecker product.

    With ``symmetric=True`` (the default) every factor is checked to be
    symmetric to within :data:`SYMMETRY_TOL` relative to its largest entry and
    then replaced by ``(K + K^T) / 2``.  Use ``symmetric=False`` for general
    factors such as eigenvector matrices.
    """

    factors: tuple
    symmetric: bool = True

    def __post_init__(self):
        mats = [np.array(K, dtype=float, ndmin=2) for K in self.factors]
        if len(mats) == 0:
            raise ValueError("KronFactors needs at least one factor")
        for i, K in enumerate(mats):
            if K.ndim != 2 or K.shape[0] != K.shape[1]:
                raise ValueError(f"factor {i} is not square: shape {K.shape}")
            if self.symmetric:
                scale = max(1.0, float(np.max(np.abs(K))))
                asym = float(np.max(np.abs(K - K.T)))
                if asym > SYMMETRY_TOL * scale:
                    raise ValueError(
                        f"factor {i} is not symmetric (max |K - K^T| = {asym:.3e})"
                    )
                mats[i] = 0.5 * (K + K.T)
            mats[i].setflags(write=False)
        object.__setattr__(self, "factors", tuple(mats))

    @property
    def sizes(self) -> tuple[int, ...]:
        return tuple(K.shape[0] for K in self.factors)

    @property
    def size(self) -> int:
        return int(np.prod(self.sizes))

    def dense(self) -> np.ndarray:
        """Materialize the full product.  Only for tests and tiny problems."""
        return reduce(np.kron, self.factors)


@dataclass(frozen=True)
class KronEig:
    """Factorwise eigendecomposition ``K_l = Q_l diag(lam_l) Q_l^T``."""

    eigvec_factors: tuple
    eigval_factors: tuple
    _eigvals: np.ndarray = field(default=None, repr=False, compare=False)

    @property
    def sizes(self) -> tuple[int, ...]:
        return tuple(len(lam) for lam in self.eigval_factors)

    @property
    def size(self) -> int:
        return int(np.prod(self.sizes))

    def eigvals(self) -> np.ndarray:
        """All ``N_V`` eigenvalues of the product, in :func:`numpy.kron` order."""
        if self._eigvals is None:
            lam = reduce(lambda a, b: np.multiply.outer(a, b).ravel(), self.eigval_factors)
            lam = np.asarray(lam, dtype=float).ravel()
            lam.setflags(write=False)
            object.__setattr__(self, "_eigvals", lam)
        return self._eigvals


@dataclass(frozen=True)
class NoisyKron:
    """Kronecker-structured covariance plus ``noise_variance * I``."""

    eig: KronEig
    noise_variance: float

    def __post_init__(self):
        if not (np.isfinite(self.noise_variance) and self.noise_variance > 0.0):
            raise ValueError(f"noise_variance must be > 0, got {self.noise_variance}")

    @property
    def size(self) -> int:
        return self.eig.size

    def diagonal(self) -> np.ndarray:
        """Eigenvalues of the noisy covariance, ``lam_kron + s2``."""
        return self.eig.eigvals() + self.noise_variance


def kron_matvec(factors, x) -> np.ndarray:
    """Compute ``(K_1 (x) ... (x) K_W) x`` without forming the product.

    Runs the factors from last to first; each pass reshapes the running
    vector column-major to ``(G_l, N/G_l)``, left-multiplies by ``K_l`` and
    stores ``vec(Z^T)``.  Peak extra memory is O(N_V).
    """
    mats = _as_factor_list(factors)
    x = np.asarray(x, dtype=float)
    n = int(np.prod([K.shape[0] for K in mats]))
    if x.ndim != 1 or x.shape[0] != n:
        raise KronDimensionError(
            f"vector length {x.shape} does not match Kronecker size {n} "
            f"(factor sizes {[K.shape[0] for K in mats]})"
        )
    r = x
    for K in reversed(mats):
        G = K.shape[0]
        R = r.reshape((G, n // G), order="F")
        Z = K @ R
        r = Z.T.ravel(order="F")
    return r


def kron_eig(factors) -> KronEig:
    """Eigendecompose every factor; eigenvalues are clipped below at zero."""
    if not isinstance(factors, KronFactors) or not factors.symmetric:
        factors = KronFactors(tuple(_as_factor_list(factors)))
    vecs, vals = [], []
    for K in factors.factors:
        lam, Q = np.linalg.eigh(K)
        lam = np.maximum(lam, 0.0)
        lam.setflags(write=False)
        Q.setflags(write=False)
        vals.append(lam)
        vecs.append(Q)
    return KronEig(tuple(vecs), tuple(vals))


def noisy_kron(factors, noise_variance: float) -> NoisyKron:
    """Convenience constructor: eigendecompose ``factors`` and attach noise."""
    return NoisyKron(kron_eig(factors), float(noise_variance))


def kron_solve_noisy(nk: NoisyKron, x) -> np.ndarray:
    """Solve ``(K_1 (x) ... (x) K_W + s2 I) r = x``.

    Rotates into the Kronecker eigenbasis, divides by the noisy eigenvalues
    and rotates back.
    """
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or x.shape[0] != nk.size:
        raise KronDimensionError(
            f"vector length {x.shape} does not match Kronecker size {nk.size}"
        )
    qt = [Q.T for Q in nk.eig.eigvec_factors]
    s = kron_matvec(qt, x)
    w = s / nk.diagonal()
    return kron_matvec(nk.eig.eigvec_factors, w)


def kron_logdet_noisy(nk: NoisyKron) -> float:
    """``log |K_1 (x) ... (x) K_W + s2 I|`` from the product eigenvalues."""
    return float(np.sum(np.log(nk.diagonal())))


def kron_quadform(nk: NoisyKron, x) -> float:
    """``x^T (K_1 (x) ... (x) K_W + s2 I)^{-1} x``, always >= 0."""
    x = np.asarray(x, dtype=float)
    r = kron_solve_noisy(nk, x)
    return max(float(x @ r), 0.0)


def kron_noisy_matvec(nk: NoisyKron, factors: Sequence[np.ndarray] | KronFactors, x) -> np.ndarray:
    """``(K_1 (x) ... (x) K_W + s2 I) x`` given the original factors."""
    x = np.asarray(x, dtype=float)
    return kron_matvec(factors, x) + nk.noise_variance * x
