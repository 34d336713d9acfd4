"""Acquisition functions, Lipschitz-based feasibility, and candidate proposal.

All acquisitions are written for minimization of the objective and are to
be *maximized*.  With ``Zs = (y_min - mu) / sigma``:

    PI  = Phi(Zs)
    EI  = sigma * (Zs * Phi(Zs) + phi(Zs))
    UCB = -mu + beta * sigma
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr

from .numopt import BoxBounds, maximize_constrained, multistart_maximize
from .surrogate import JointSurrogate

L_FLOOR = 1e-6
KINDS = ("PI", "EI", "UCB")
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


def norm_pdf(t):
    return _INV_SQRT_2PI * np.exp(-0.5 * np.square(t))


@dataclass(frozen=True)
class AcquisitionSpec:
    kind: str = "EI"
    y_min: float = 0.0
    beta: float = math.sqrt(3.0)

    def __post_init__(self):
        kind = self.kind.upper()
        if kind not in KINDS:
            raise ValueError(f"unknown acquisition {self.kind!r}; choose from {KINDS}")
        object.__setattr__(self, "kind", kind)
        if not self.beta > 0:
            raise ValueError("beta must be positive")
        if not np.isfinite(self.y_min):
            raise ValueError("y_min must be finite")


def acq_value_and_grad(spec: AcquisitionSpec, mu, sigma):
    """Acquisition value and its partial derivatives in ``mu`` and ``sigma``.

    ``sigma == 0`` uses the deterministic limits (derivatives then taken
    from the limit as well).
    """
    mu = np.asarray(mu, dtype=float)
    sigma = np.maximum(np.asarray(sigma, dtype=float), 0.0)
    if spec.kind == "UCB":
        val = -mu + spec.beta * sigma
        return val, -np.ones_like(mu), np.full_like(sigma, spec.beta)
    pos = sigma > 0.0
    s = np.where(pos, sigma, 1.0)
    z = np.where(pos, (spec.y_min - mu) / s, 0.0)
    Phi = ndtr(z)
    phi = norm_pdf(z)
    improve = spec.y_min - mu
    if spec.kind == "PI":
        val = np.where(pos, Phi, (mu < spec.y_min).astype(float))
        dmu = np.where(pos, -phi / s, 0.0)
        dsig = np.where(pos, -phi * z / s, 0.0)
    else:
        val = np.where(pos, s * (z * Phi + phi), np.maximum(improve, 0.0))
        dmu = np.where(pos, -Phi, -(improve > 0).astype(float))
        dsig = np.where(pos, phi, 0.0)
    return val, dmu, dsig


def acq_value(spec: AcquisitionSpec, mu, sigma):
    """PI / EI / UCB at posterior mean ``mu`` and standard deviation ``sigma``."""
    val = acq_value_and_grad(spec, mu, sigma)[0]
    return float(val) if np.ndim(val) == 0 else val


# ---------------------------------------------------------------------------
# Lipschitz constant and the distance constraint
# ---------------------------------------------------------------------------


def jacobian_max_norm(s: JointSurrogate, Zs) -> np.ndarray:
    """``max_{i,j} |d mu_i / d z_j|`` of the decoder mean at each row of ``Zs``."""
    J = s.decoder_mean_jacobian(Zs)
    return np.max(np.abs(J), axis=(1, 2))


def estimate_lipschitz(s: JointSurrogate, bounds: BoxBounds | None = None, seed: int = 0,
                       n_random: int = 5000, n_top: int = 20) -> float:
    """Largest max-norm of the decoder mean Jacobian over the feature box.

    Multistart search; local refinement uses finite-difference gradients of
    the (analytic) Jacobian norm.  Floored at :data:`L_FLOOR`.
    """
    d = s.config.d
    bounds = bounds or BoxBounds.unit(d)
    n_top = min(n_top, n_random)
    res = multistart_maximize(
        lambda z: float(jacobian_max_norm(s, z[None, :])[0]),
        bounds, n_random=n_random, n_top=n_top, seed=seed, jac=False,
        f_batch=lambda Zs: jacobian_max_norm(s, Zs),
    )
    # training embeddings are cheap extra candidates
    at_data = float(np.max(jacobian_max_norm(s, s.Z))) if s.N else 0.0
    L = max(res.f_opt, at_data)
    if not np.isfinite(L) or L < L_FLOOR:
        return L_FLOOR
    return float(L)


@dataclass(frozen=True)
class ConstraintState:
    """Embedded data ``Z_t``, Lipschitz constant ``L`` and ``max_i |mu_i|`` at each row."""

    Z_t: np.ndarray
    L: float
    mu_max: np.ndarray

    def __post_init__(self):
        Z = np.atleast_2d(np.asarray(self.Z_t, dtype=float))
        mm = np.asarray(self.mu_max, dtype=float).ravel()
        if mm.shape[0] != Z.shape[0]:
            raise ValueError("mu_max needs one entry per embedded training point")
        object.__setattr__(self, "Z_t", Z)
        object.__setattr__(self, "mu_max", mm)
        object.__setattr__(self, "L", max(float(self.L), L_FLOOR))

    @classmethod
    def from_surrogate(cls, s: JointSurrogate, L: float) -> "ConstraintState":
        mu = s.decoder_mean(s.Z)
        return cls(s.Z, L, np.max(np.abs(mu), axis=1))

    @property
    def radii(self) -> np.ndarray:
        return self.mu_max / self.L


def _nearest(Zs, Z_t):
    diff = Zs[:, None, :] - Z_t[None, :, :]
    dist = np.sqrt(np.sum(diff * diff, axis=-1))
    idx = np.argmin(dist, axis=1)
    return idx, dist[np.arange(Zs.shape[0]), idx]


def constraint_batch(Zs, cs: ConstraintState) -> np.ndarray:
    Zs = np.atleast_2d(np.asarray(Zs, dtype=float))
    idx, dist = _nearest(Zs, cs.Z_t)
    return cs.radii[idx] - dist


def constraint_value(z, cs: ConstraintState) -> float:
    """``mu_max(z*) / L - dist(z, Z_t)``; feasible when ``>= 0``."""
    return float(constraint_batch(np.asarray(z, dtype=float)[None, :], cs)[0])


def constraint_value_and_grad(z, cs: ConstraintState):
    z = np.asarray(z, dtype=float)
    idx, dist = _nearest(z[None, :], cs.Z_t)
    i, r = int(idx[0]), float(dist[0])
    grad = -(z - cs.Z_t[i]) / r if r > 0 else np.zeros_like(z)
    return cs.radii[i] - r, grad


# ---------------------------------------------------------------------------
# proposal
# ---------------------------------------------------------------------------


@dataclass
class Proposal:
    z: np.ndarray
    value: float
    constraint: ConstraintState | None = None
    fallback: bool = False


def acquisition_batch(s: JointSurrogate, spec: AcquisitionSpec, Zs) -> np.ndarray:
    mean, var = s.predict_z(Zs)
    return acq_value_and_grad(spec, mean, np.sqrt(var))[0]


def acquisition_value_and_grad(s: JointSurrogate, spec: AcquisitionSpec, z):
    mean, var, dmean, dvar = s.predict_z_grad(np.asarray(z, dtype=float)[None, :])
    sigma = np.sqrt(var)
    val, dmu, dsig = acq_value_and_grad(spec, mean, sigma)
    dsigma = np.where(sigma > 1e-12, 0.5 / np.maximum(sigma, 1e-12), 0.0)[:, None] * dvar
    grad = dmu[:, None] * dmean + dsig[:, None] * dsigma
    return float(val[0]), grad[0]


def propose(s: JointSurrogate, spec: AcquisitionSpec, constrained: bool = True, seed: int = 0,
            n_random: int = 5000, n_top: int = 100, L: float | None = None,
            lipschitz_budget: tuple[int, int] = (2000, 10)) -> Proposal:
    """Maximize the acquisition over the feature box ``[0, 1]^d``.

    With ``constrained=True`` the maximizer must keep
    :func:`constraint_value` nonnegative; ``L`` is estimated when not given.
    """
    d = s.config.d
    bounds = BoxBounds.unit(d)
    f = lambda z: acquisition_value_and_grad(s, spec, z)  # noqa: E731
    fb = lambda Zs: acquisition_batch(s, spec, Zs)  # noqa: E731
    n_top = min(n_top, n_random)
    if not constrained:
        res = multistart_maximize(f, bounds, n_random=n_random, n_top=n_top, seed=seed, f_batch=fb)
        return Proposal(bounds.clip(res.x_opt), res.f_opt)
    if L is None:
        L = estimate_lipschitz(s, bounds, seed=seed + 1, n_random=lipschitz_budget[0],
                               n_top=lipschitz_budget[1])
    cs = ConstraintState.from_surrogate(s, L)
    res = maximize_constrained(
        f, lambda z: constraint_value_and_grad(z, cs), bounds,
        n_random=n_random, n_top=n_top, seed=seed, f_batch=fb,
        g_batch=lambda Zs: constraint_batch(Zs, cs), fallback_points=cs.Z_t,
    )
    return Proposal(bounds.clip(res.x_opt), res.f_opt, cs, res.fallback)
