"""Hot inner loops with a numba path and a pure-numpy path.

The active implementation is chosen once at import time.  Set
``FEATBO_DISABLE_NUMBA=1`` to force the numpy path (useful for debugging or
on platforms without numba).  Both implementations are always importable as
``*_numpy`` / ``*_numba`` so they can be compared directly.
"""

import math
import os

import numpy as np

try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    HAVE_NUMBA = False

_flag = os.environ.get("FEATBO_DISABLE_NUMBA", "").strip().lower()
USE_NUMBA = HAVE_NUMBA and _flag not in ("1", "true", "yes", "on")

SQRT5 = math.sqrt(5.0)

# kind codes shared by both backends
MATERN52 = 0
SQEXP = 1


# ---------------------------------------------------------------------------
# numpy implementations
# ---------------------------------------------------------------------------


def scaled_sqdist_numpy(A, B, inv_ls2):
    """Pairwise ``sum_j (a_j - b_j)^2 * inv_ls2_j`` as an (n, m) array."""
    diff = A[:, None, :] - B[None, :, :]
    return np.einsum("nmd,d->nm", diff * diff, inv_ls2)


def kernel_from_r2_numpy(r2, variance, kind):
    """Kernel values and ``dk/d(r^2)`` from scaled squared distances."""
    if kind == MATERN52:
        r = np.sqrt(r2)
        a = SQRT5 * r
        e = np.exp(-a)
        k = variance * (1.0 + a + a * a / 3.0) * e
        dk = -(5.0 / 6.0) * variance * (1.0 + a) * e
    else:
        e = np.exp(-0.5 * r2)
        k = variance * e
        dk = -0.5 * variance * e
    return k, dk


def kernel_backward_numpy(P, A, B, inv_ls2):
    """Back-propagate ``P = G * dk/dr2`` onto inputs and log-lengthscales.

    Returns ``(dA, dB, dlogls)`` where ``r2_nm = sum_j (A_nj - B_mj)^2 inv_ls2_j``.
    """
    rs = P.sum(axis=1)
    cs = P.sum(axis=0)
    PB = P @ B
    PtA = P.T @ A
    dA = 2.0 * inv_ls2 * (rs[:, None] * A - PB)
    dB = 2.0 * inv_ls2 * (cs[:, None] * B - PtA)
    quad = rs @ (A * A) - 2.0 * np.sum(A * PB, axis=0) + cs @ (B * B)
    dlogls = -2.0 * inv_ls2 * quad
    return dA, dB, dlogls


def thomson_energy_numpy(P):
    """Sum of inverse pairwise distances, coincident pairs capped at 1e12."""
    diff = P[:, None, :] - P[None, :, :]
    dist = np.sqrt(np.sum(diff * diff, axis=-1))
    iu = np.triu_indices(P.shape[0], k=1)
    d = dist[iu]
    inv = np.where(d < 1e-12, 1e12, 1.0 / np.maximum(d, 1e-300))
    return float(np.sum(inv))


# ---------------------------------------------------------------------------
# numba implementations
# ---------------------------------------------------------------------------

if HAVE_NUMBA:

    @numba.njit(cache=True)
    def scaled_sqdist_numba(A, B, inv_ls2):
        n, d = A.shape
        m = B.shape[0]
        out = np.empty((n, m))
        for i in range(n):
            for j in range(m):
                s = 0.0
                for k in range(d):
                    t = A[i, k] - B[j, k]
                    s += t * t * inv_ls2[k]
                out[i, j] = s
        return out

    @numba.njit(cache=True)
    def kernel_from_r2_numba(r2, variance, kind):
        n, m = r2.shape
        k = np.empty((n, m))
        dk = np.empty((n, m))
        for i in range(n):
            for j in range(m):
                if kind == 0:
                    a = SQRT5 * math.sqrt(r2[i, j])
                    e = math.exp(-a)
                    k[i, j] = variance * (1.0 + a + a * a / 3.0) * e
                    dk[i, j] = -(5.0 / 6.0) * variance * (1.0 + a) * e
                else:
                    e = math.exp(-0.5 * r2[i, j])
                    k[i, j] = variance * e
                    dk[i, j] = -0.5 * variance * e
        return k, dk

    @numba.njit(cache=True)
    def kernel_backward_numba(P, A, B, inv_ls2):
        # same algebra as the numpy path; the two products go through BLAS
        n, d = A.shape
        m = B.shape[0]
        rs = np.zeros(n)
        cs = np.zeros(m)
        for i in range(n):
            for j in range(m):
                rs[i] += P[i, j]
                cs[j] += P[i, j]
        PB = np.dot(P, B)
        PtA = np.dot(P.T.copy(), A)
        dA = np.empty((n, d))
        dB = np.empty((m, d))
        dlogls = np.empty(d)
        for k in range(d):
            w = 2.0 * inv_ls2[k]
            quad = 0.0
            for i in range(n):
                dA[i, k] = w * (rs[i] * A[i, k] - PB[i, k])
                quad += rs[i] * A[i, k] * A[i, k] - 2.0 * A[i, k] * PB[i, k]
            for j in range(m):
                dB[j, k] = w * (cs[j] * B[j, k] - PtA[j, k])
                quad += cs[j] * B[j, k] * B[j, k]
            dlogls[k] = -w * quad
        return dA, dB, dlogls

    @numba.njit(cache=True)
    def thomson_energy_numba(P):
        n = P.shape[0]
        total = 0.0
        for i in range(n - 1):
            for j in range(i + 1, n):
                s = 0.0
                for k in range(P.shape[1]):
                    t = P[i, k] - P[j, k]
                    s += t * t
                d = math.sqrt(s)
                if d < 1e-12:
                    total += 1e12
                else:
                    total += 1.0 / d
        return total

else:  # pragma: no cover
    scaled_sqdist_numba = None
    kernel_from_r2_numba = None
    kernel_backward_numba = None
    thomson_energy_numba = None


def _contig(a):
    return np.ascontiguousarray(a, dtype=np.float64)


if USE_NUMBA:

    def scaled_sqdist(A, B, inv_ls2):
        return scaled_sqdist_numba(_contig(A), _contig(B), _contig(inv_ls2))

    def kernel_from_r2(r2, variance, kind):
        return kernel_from_r2_numba(_contig(r2), float(variance), int(kind))

    # the backward pass is two matrix products; BLAS through numpy beats the
    # compiled loop at every size measured by bench/bench_kernels.py
    kernel_backward = kernel_backward_numpy

    def thomson_energy(P):
        return float(thomson_energy_numba(_contig(P)))

else:
    scaled_sqdist = scaled_sqdist_numpy
    kernel_from_r2 = kernel_from_r2_numpy
    kernel_backward = kernel_backward_numpy
    thomson_energy = thomson_energy_numpy


def backend():
    """Name of the active backend, ``"numba"`` or ``"numpy"``."""
    return "numba" if USE_NUMBA else "numpy"
