"""Joint surrogate: shared encoder, response-surface GP and ICM decoder.

The response GP models standardized observations as a function of the
encoded inputs ``z = h(x)``.  The decoder is a multi-output GP with
covariance ``B (x) k_c(Z, Z)``, ``B = A A^T``, fitted to probit-warped
inputs; reconstructions are pushed back through the normal CDF.  Both GPs
share the encoder and one noise variance and are trained together on

    y^T K_y^-1 y + log|K_y| + (x_V^T K_V^-1 x_V + log|K_V|) / D

(the negated, constant-free joint log marginal likelihood), with the
decoder terms evaluated through :mod:`featbo.kron` only.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy import linalg
from scipy.special import ndtr, ndtri

from . import kron
from .encoder import HIDDEN_UNITS, FeatureMapParams, encode, encode_backward, encode_forward
from .gradients import NonFiniteLossError
from .kernels import JITTER, KernelParams, cross_grad, kernel_matrix, train_matrix, train_matrix_backward
from .numopt import BoxBounds, minimize_box

log = logging.getLogger(__name__)

VARIANTS = ("full", "block_shared", "block_separate")
CHECKPOINT_FORMAT = "featbo-surrogate"
CHECKPOINT_VERSION = 1


class NumericalFailure(NonFiniteLossError):
    """A covariance could not be factorized even with jitter."""


class FitError(RuntimeError):
    """No restart produced a single finite objective value."""


# ---------------------------------------------------------------------------
# structure and parameters
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DecoderStructure:
    """Decoder layout.

    ``full``: one ICM over all D outputs with ``A`` of shape ``(D, P)``.
    ``block_shared``: outputs split into contiguous blocks of ``block_size``
    (last block takes the remainder), independent across blocks, one decoder
    kernel shared by all blocks.  ``block_separate``: same blocks, one kernel
    per block.
    """

    variant: str = "full"
    block_size: int = 3
    n_latent: int | None = None

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown decoder variant {self.variant!r}; choose from {VARIANTS}")
        if self.block_size < 1:
            raise ValueError("block_size must be >= 1")
        if self.n_latent is not None and self.n_latent < 1:
            raise ValueError("n_latent (P) must be >= 1")

    def blocks(self, D: int) -> list[np.ndarray]:
        if self.variant == "full":
            return [np.arange(D)]
        return [np.arange(s, min(s + self.block_size, D)) for s in range(0, D, self.block_size)]

    def latent_counts(self, D: int) -> list[int]:
        if self.variant == "full":
            return [self.n_latent if self.n_latent is not None else D]
        return [len(b) for b in self.blocks(D)]

    def n_decoder_kernels(self, D: int) -> int:
        return len(self.blocks(D)) if self.variant == "block_separate" else 1

    def kernel_index(self, q: int) -> int:
        return q if self.variant == "block_separate" else 0


@dataclass(frozen=True)
class ModelConfig:
    d: int = 2
    hidden: int = HIDDEN_UNITS
    kernel: str = "matern52"
    decoder: DecoderStructure = field(default_factory=DecoderStructure)
    noise_variance: float = 1e-4
    learn_noise: bool = False
    warp_eps: float = 1e-6
    restarts: int = 3
    max_iter: int = 200
    tol: float = 1e-6
    lengthscale_range: tuple = (0.5, 1e2)

    def __post_init__(self):
        lo, hi = (float(v) for v in self.lengthscale_range)
        if not 0 < lo < hi:
            raise ValueError("lengthscale_range must satisfy 0 < low < high")
        object.__setattr__(self, "lengthscale_range", (lo, hi))


@dataclass(frozen=True)
class CoregionalizationParams:
    """Mixing matrices ``A_q`` (one per decoder block); ``B_q = A_q A_q^T``."""

    A: tuple

    @property
    def B(self) -> tuple:
        return tuple(a @ a.T for a in self.A)


class ParamLayout:
    """Maps the flat optimizer vector onto named parameter groups."""

    # (lower, upper) box for each group
    BOUNDS = {
        "encoder": (-30.0, 30.0),
        "log_variance": (np.log(1e-4), np.log(1e2)),
        "A": (-10.0, 10.0),
        "log_noise": (np.log(1e-8), np.log(1.0)),
    }

    def __init__(self, D: int, config: ModelConfig):
        self.D = D
        self.d = config.d
        self.hidden = config.hidden
        self.config = config
        st = config.decoder
        self.blocks = st.blocks(D)
        self.latent = st.latent_counts(D)
        self.n_dec_kernels = st.n_decoder_kernels(D)
        d, H = self.d, self.hidden
        groups = [("encoder", (H * D + H + d * H + d,)), ("resp_kernel", (d + 1,))]
        groups += [(f"dec_kernel_{k}", (d + 1,)) for k in range(self.n_dec_kernels)]
        groups += [(f"A_{q}", (len(b), p)) for q, (b, p) in enumerate(zip(self.blocks, self.latent))]
        if config.learn_noise:
            groups.append(("log_noise", (1,)))
        self.shapes = dict(groups)
        self.slices = {}
        o = 0
        for name, shape in groups:
            n = int(np.prod(shape))
            self.slices[name] = slice(o, o + n)
            o += n
        self.size = o

    def get(self, theta, name):
        return theta[self.slices[name]].reshape(self.shapes[name])

    def encoder(self, theta) -> FeatureMapParams:
        return FeatureMapParams.unflatten(theta[self.slices["encoder"]], self.D, self.d, self.hidden)

    def resp_kernel(self, theta) -> KernelParams:
        return KernelParams.unflatten(self.config.kernel, theta[self.slices["resp_kernel"]])

    def dec_kernel(self, theta, k) -> KernelParams:
        return KernelParams.unflatten(self.config.kernel, theta[self.slices[f"dec_kernel_{k}"]])

    def coreg(self, theta) -> CoregionalizationParams:
        return CoregionalizationParams(tuple(self.get(theta, f"A_{q}").copy() for q in range(len(self.blocks))))

    def noise_variance(self, theta) -> float:
        if self.config.learn_noise:
            return float(np.exp(theta[self.slices["log_noise"]][0]))
        return float(self.config.noise_variance)

    def initial(self, rng: np.random.Generator) -> np.ndarray:
        theta = np.zeros(self.size)
        enc = FeatureMapParams.initialize(self.D, self.d, rng, self.hidden)
        theta[self.slices["encoder"]] = enc.flatten()
        # kernels start at log-lengthscale 0, log-variance 0 (already zero)
        for q, (b, p) in enumerate(zip(self.blocks, self.latent)):
            A = 0.5 * np.eye(len(b), p) + rng.uniform(-0.05, 0.05, size=(len(b), p))
            theta[self.slices[f"A_{q}"]] = A.ravel()
        if self.config.learn_noise:
            theta[self.slices["log_noise"]] = np.log(self.config.noise_variance)
        return theta

    def group_of(self, i: int) -> str:
        """Name of the parameter group holding flat index ``i``."""
        for name, sl in self.slices.items():
            if sl.start <= i < sl.stop:
                return name
        raise IndexError(i)

    def bounds(self) -> BoxBounds:
        lo = np.empty(self.size)
        hi = np.empty(self.size)
        for name, sl in self.slices.items():
            if "kernel" in name:
                ls = slice(sl.start, sl.stop - 1)
                lo[ls], hi[ls] = np.log(self.config.lengthscale_range)
                lo[sl.stop - 1], hi[sl.stop - 1] = self.BOUNDS["log_variance"]
            else:
                key = "A" if name.startswith("A_") else name
                lo[sl], hi[sl] = self.BOUNDS[key]
        return BoxBounds(lo, hi)


# ---------------------------------------------------------------------------
# data preparation
# ---------------------------------------------------------------------------


def warp_inputs(X, eps: float = 1e-6) -> np.ndarray:
    """Probit of inputs clipped to ``[eps, 1 - eps]``."""
    return ndtri(np.clip(np.asarray(X, dtype=float), eps, 1.0 - eps))


def standardize(y):
    y = np.asarray(y, dtype=float).ravel()
    mean = float(np.mean(y))
    std = float(np.std(y))
    if not np.isfinite(std) or std < 1e-12:
        std = 1.0
    return (y - mean) / std, mean, std


def _check_data(X, y):
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float).ravel()
    if X.shape[0] != y.shape[0]:
        raise ValueError(f"{X.shape[0]} inputs but {y.shape[0]} targets")
    if np.any(X < 0.0) or np.any(X > 1.0):
        raise ValueError("training inputs must lie in [0, 1]^D")
    if not np.all(np.isfinite(y)):
        raise ValueError("targets must be finite")
    return X, y


# ---------------------------------------------------------------------------
# joint objective
# ---------------------------------------------------------------------------


class JointObjective:
    """Negative joint log marginal likelihood and its exact gradient.

    Standardizes ``y`` and warps ``X`` once; calling the instance with a flat
    parameter vector returns ``(value, gradient)``.
    """

    def __init__(self, X, y, config: ModelConfig):
        X, y = _check_data(X, y)
        if X.shape[0] < 2:
            raise ValueError("the joint objective needs at least two observations")
        self.X = X
        self.config = config
        self.N, self.D = X.shape
        self.y, self.y_mean, self.y_std = standardize(y)
        self.XV = warp_inputs(X, config.warp_eps)
        self.layout = ParamLayout(self.D, config)
        # stacked columns of the warped inputs, one vector per block
        self.x_v = [self.XV[:, b].T.ravel() for b in self.layout.blocks]
        self.n_evals = 0

    def value(self, theta) -> float:
        return self._evaluate(theta, want_grad=False)[0]

    def __call__(self, theta):
        return self._evaluate(theta, want_grad=True)

    def _evaluate(self, theta, want_grad):
        self.n_evals += 1
        theta = np.asarray(theta, dtype=float)
        lay = self.layout
        N, D = self.N, self.D
        s2 = lay.noise_variance(theta)
        enc = lay.encoder(theta)
        Z, cache = encode_forward(enc, self.X)
        grad = np.zeros(lay.size) if want_grad else None
        dZ = np.zeros_like(Z)
        dlog_s2 = 0.0

        # response surface
        kp = lay.resp_kernel(theta)
        Kr, dKr = train_matrix(kp, Z)
        Ky = Kr + s2 * np.eye(N)
        try:
            cf = linalg.cho_factor(Ky, lower=True, check_finite=True)
        except (linalg.LinAlgError, ValueError) as exc:
            raise NumericalFailure(f"response covariance not positive definite: {exc}") from exc
        alpha = linalg.cho_solve(cf, self.y)
        value = float(self.y @ alpha) + 2.0 * float(np.sum(np.log(np.diag(cf[0]))))
        if want_grad:
            Kinv = linalg.cho_solve(cf, np.eye(N))
            G = Kinv - np.outer(alpha, alpha)
            gz, gll, glv = train_matrix_backward(kp, Z, Kr, dKr, G)
            dZ += gz
            grad[lay.slices["resp_kernel"]] = np.append(gll, glv)
            dlog_s2 += s2 * float(np.trace(G))

        # decoder, block by block
        coreg = lay.coreg(theta)
        dec_kernels = [lay.dec_kernel(theta, k) for k in range(lay.n_dec_kernels)]
        dec_cache = {}
        for q, b in enumerate(lay.blocks):
            k_idx = self.config.decoder.kernel_index(q)
            kc = dec_kernels[k_idx]
            if k_idx not in dec_cache:
                dec_cache[k_idx] = train_matrix(kc, Z)
            Kc, dKc = dec_cache[k_idx]
            A = coreg.A[q]
            B = A @ A.T
            nk = kron.noisy_kron([B, Kc], s2)
            xv = self.x_v[q]
            alpha_v = kron.kron_solve_noisy(nk, xv)
            quad = float(xv @ alpha_v)
            logdet = kron.kron_logdet_noisy(nk)
            if not (np.isfinite(quad) and np.isfinite(logdet)):
                raise NumericalFailure("non-finite decoder likelihood term")
            value += (quad + logdet) / D
            if want_grad:
                Dq = len(b)
                QB, Qc = nk.eig.eigvec_factors
                lamB, lamc = nk.eig.eigval_factors
                Wm = (1.0 / nk.diagonal()).reshape(Dq, N)
                Ma = alpha_v.reshape((N, Dq), order="F")
                GB = (QB * (Wm @ lamc)) @ QB.T - Ma.T @ Kc @ Ma
                Gc = (Qc * (lamB @ Wm)) @ Qc.T - Ma @ B @ Ma.T
                GB /= D
                Gc /= D
                grad[lay.slices[f"A_{q}"]] = (2.0 * GB @ A).ravel()
                gz, gll, glv = train_matrix_backward(kc, Z, Kc, dKc, Gc)
                dZ += gz
                grad[lay.slices[f"dec_kernel_{k_idx}"]] += np.append(gll, glv)
                dlog_s2 += s2 * (float(np.sum(Wm)) - float(alpha_v @ alpha_v)) / D

        if not np.isfinite(value):
            raise NumericalFailure("non-finite joint objective")
        if want_grad:
            grad[lay.slices["encoder"]] = encode_backward(enc, cache, dZ)
            if self.config.learn_noise:
                grad[lay.slices["log_noise"]] = dlog_s2
            if not np.all(np.isfinite(grad)):
                raise NumericalFailure("non-finite gradient of the joint objective")
        return value, grad


def joint_neg_log_marginal(params, data, structure: DecoderStructure | None = None,
                           config: ModelConfig | None = None) -> float:
    """Value of the joint training objective at a flat parameter vector.

    ``data`` is ``(X, y)``.  ``config`` supplies the feature dimension and
    fixed settings; ``structure`` overrides its decoder layout.
    """
    X, y = data
    config = config or ModelConfig()
    if structure is not None:
        config = replace(config, decoder=structure)
    return JointObjective(X, y, config).value(params)


# ---------------------------------------------------------------------------
# fitted surrogate
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PosteriorGaussian:
    mean: np.ndarray | float
    variance: np.ndarray | float


@dataclass
class _DecoderBlock:
    index: np.ndarray
    kernel: KernelParams
    B: np.ndarray
    MaB: np.ndarray      # posterior-mean weights, (N, Dq)
    Qc: np.ndarray
    Wm: np.ndarray       # 1 / (lamB (x) lamc + s2) as (Dq, N)
    U: np.ndarray        # (Q_B^T B)^2, (Dq, Dq)


class JointSurrogate:
    """A trained joint model.  Immutable once constructed.

    Build with :func:`fit` or :meth:`from_params`; all factorizations are
    computed in the constructor from ``theta``.
    """

    def __init__(self, theta, X, y, config: ModelConfig, degraded: bool = False,
                 fit_info: dict | None = None):
        X, y = _check_data(X, y)
        self.config = config
        self.X = X
        self.y_raw = y
        self.N, self.D = X.shape
        self.y, self.y_mean, self.y_std = standardize(y)
        self.layout = ParamLayout(self.D, config)
        theta = np.array(theta, dtype=float)
        if theta.shape != (self.layout.size,):
            raise ValueError(f"expected {self.layout.size} parameters, got {theta.shape}")
        theta.setflags(write=False)
        self.theta = theta
        self.degraded = degraded
        self.fit_info = fit_info or {}
        lay = self.layout
        self.noise_variance = lay.noise_variance(theta)
        self.encoder = lay.encoder(theta)
        self.response_kernel = lay.resp_kernel(theta)
        self.decoder_kernels = [lay.dec_kernel(theta, k) for k in range(lay.n_dec_kernels)]
        self.coreg = lay.coreg(theta)
        self.XV = warp_inputs(X, config.warp_eps)
        self.Z = encode(self.encoder, X)

        Kr = kernel_matrix(self.response_kernel, self.Z)
        Kr[np.diag_indices_from(Kr)] += JITTER * self.response_kernel.variance
        Ky = Kr + self.noise_variance * np.eye(self.N)
        try:
            self._chol = linalg.cho_factor(Ky, lower=True)
        except (linalg.LinAlgError, ValueError) as exc:
            raise NumericalFailure(f"response covariance not positive definite: {exc}") from exc
        self._alpha = linalg.cho_solve(self._chol, self.y)

        self._blocks = []
        for q, b in enumerate(lay.blocks):
            kc = self.decoder_kernels[config.decoder.kernel_index(q)]
            Kc = kernel_matrix(kc, self.Z)
            Kc[np.diag_indices_from(Kc)] += JITTER * kc.variance
            A = self.coreg.A[q]
            B = A @ A.T
            nk = kron.noisy_kron([B, Kc], self.noise_variance)
            alpha_v = kron.kron_solve_noisy(nk, self.XV[:, b].T.ravel())
            Ma = alpha_v.reshape((self.N, len(b)), order="F")
            QB, Qc = nk.eig.eigvec_factors
            self._blocks.append(_DecoderBlock(
                index=b, kernel=kc, B=0.5 * (B + B.T),
                MaB=Ma @ B, Qc=Qc,
                Wm=(1.0 / nk.diagonal()).reshape(len(b), self.N),
                U=(QB.T @ B) ** 2,
            ))

    @classmethod
    def from_params(cls, theta, X, y, config: ModelConfig, **kw) -> "JointSurrogate":
        return cls(theta, X, y, config, **kw)

    # -- response surface ---------------------------------------------------

    def predict_z(self, Zs, standardized: bool = False):
        """Response posterior mean and variance at feature points ``(M, d)``."""
        Zs = np.atleast_2d(np.asarray(Zs, dtype=float))
        Ks = kernel_matrix(self.response_kernel, Zs, self.Z)
        mean = Ks @ self._alpha
        V = linalg.solve_triangular(self._chol[0], Ks.T, lower=True)
        var = np.maximum(self.response_kernel.variance - np.sum(V * V, axis=0), 0.0)
        if standardized:
            return mean, var
        return self.y_mean + self.y_std * mean, self.y_std ** 2 * var

    def predict_z_grad(self, Zs):
        """Mean, variance and their gradients in ``z`` (original y units)."""
        Zs = np.atleast_2d(np.asarray(Zs, dtype=float))
        Ks, J = cross_grad(self.response_kernel, Zs, self.Z)
        mean = Ks @ self._alpha
        KiKs = linalg.cho_solve(self._chol, Ks.T)
        var_raw = self.response_kernel.variance - np.sum(Ks.T * KiKs, axis=0)
        dmean = np.einsum("mnd,n->md", J, self._alpha)
        dvar = -2.0 * np.einsum("mnd,nm->md", J, KiKs)
        clipped = var_raw <= 0.0
        var = np.where(clipped, 0.0, var_raw)
        dvar[clipped] = 0.0
        ys = self.y_std
        return self.y_mean + ys * mean, ys ** 2 * var, ys * dmean, ys ** 2 * dvar

    # -- decoder --------------------------------------------------------------

    def decoder_predict(self, Zs):
        """Decoder posterior mean and variance in warped space, ``(M, D)`` each."""
        Zs = np.atleast_2d(np.asarray(Zs, dtype=float))
        M = Zs.shape[0]
        mean = np.empty((M, self.D))
        var = np.empty((M, self.D))
        for blk in self._blocks:
            Ks = kernel_matrix(blk.kernel, Zs, self.Z)
            mean[:, blk.index] = Ks @ blk.MaB
            V = (Ks @ blk.Qc) ** 2
            red = (V @ blk.Wm.T) @ blk.U
            prior = np.diag(blk.B) * blk.kernel.variance
            var[:, blk.index] = np.maximum(prior[None, :] - red, 0.0)
        return mean, var

    def decoder_mean_jacobian(self, Zs) -> np.ndarray:
        """Jacobian of the decoder posterior mean, shape ``(M, D, d)``."""
        Zs = np.atleast_2d(np.asarray(Zs, dtype=float))
        out = np.empty((Zs.shape[0], self.D, Zs.shape[1]))
        for blk in self._blocks:
            _, J = cross_grad(blk.kernel, Zs, self.Z)
            out[:, blk.index, :] = np.einsum("mnj,ni->mij", J, blk.MaB)
        return out

    def decoder_mean(self, Zs) -> np.ndarray:
        Zs = np.atleast_2d(np.asarray(Zs, dtype=float))
        mean = np.empty((Zs.shape[0], self.D))
        for blk in self._blocks:
            mean[:, blk.index] = kernel_matrix(blk.kernel, Zs, self.Z) @ blk.MaB
        return mean


# ---------------------------------------------------------------------------
# public operations
# ---------------------------------------------------------------------------


def response_posterior_z(s: JointSurrogate, z_star) -> PosteriorGaussian:
    """Response posterior at a feature point (original y units)."""
    mean, var = s.predict_z(np.asarray(z_star, dtype=float)[None, :])
    return PosteriorGaussian(float(mean[0]), float(var[0]))


def response_posterior(s: JointSurrogate, x_star) -> PosteriorGaussian:
    """Response posterior at a data-space point, via its encoding."""
    x_star = np.asarray(x_star, dtype=float)
    return response_posterior_z(s, encode(s.encoder, x_star))


def decoder_posterior(s: JointSurrogate, z_star):
    """Warped-space decoder posterior ``(mean, variance)``, D-vectors."""
    mean, var = s.decoder_predict(np.asarray(z_star, dtype=float)[None, :])
    return mean[0], var[0]


def squash_expectation(mean, variance) -> np.ndarray:
    """``E[Phi(t)]`` for ``t ~ N(mean, variance)``, i.e. ``Phi(mean / sqrt(1 + variance))``."""
    mean = np.asarray(mean, dtype=float)
    variance = np.maximum(np.asarray(variance, dtype=float), 0.0)
    return np.clip(ndtr(mean / np.sqrt(1.0 + variance)), 0.0, 1.0)


def reconstruct(s: JointSurrogate, z_star) -> np.ndarray:
    """Map a feature point back to ``[0, 1]^D`` through the warped decoder."""
    mean, var = decoder_posterior(s, z_star)
    return squash_expectation(mean, var)


# ---------------------------------------------------------------------------
# fitting
# ---------------------------------------------------------------------------


def _restart_rng(seed, r):
    return np.random.default_rng(np.random.SeedSequence([int(seed), 7919, int(r)]))


def fit(X, y, config: ModelConfig = ModelConfig(), seed: int = 0,
        warm_start=None) -> JointSurrogate:
    """Train the joint model by multistart quasi-Newton minimization.

    Without ``warm_start`` this runs ``config.restarts`` seeded random
    restarts; with it, the warm start plus a single fresh restart.  The
    parameters with the lowest objective win.  ``fit_info["restarts"]``
    records the initial and final objective of every restart.
    """
    obj = JointObjective(X, y, config)
    lay = obj.layout
    bounds = lay.bounds()
    starts = []
    if warm_start is not None:
        ws = np.clip(np.asarray(warm_start, dtype=float), bounds.lower, bounds.upper)
        if ws.shape != (lay.size,):
            raise ValueError(f"warm start has {ws.shape} parameters, expected {lay.size}")
        starts.append(("warm", ws))
        n_fresh = 1
    else:
        n_fresh = max(1, config.restarts)
    for r in range(n_fresh):
        starts.append((f"fresh{r}", lay.initial(_restart_rng(seed, r))))

    records = []
    best = None
    for name, theta0 in starts:
        try:
            f0 = obj.value(theta0)
        except NonFiniteLossError:
            records.append({"start": name, "f_init": float("inf"), "f_final": float("inf"),
                            "failed": True, "iterations": 0, "trace": []})
            continue
        res = minimize_box(obj, theta0, bounds, tol=config.tol, max_iter=config.max_iter)
        records.append({"start": name, "f_init": f0, "f_final": res.f_opt,
                        "failed": res.failed, "iterations": res.iterations,
                        "trace": list(res.trace)})
        if best is None or res.f_opt < best[1]:
            best = (res.x_opt, res.f_opt)
    if best is None:
        raise FitError("joint objective was non-finite at every restart")
    degraded = all(r["failed"] for r in records)
    info = {"restarts": records, "objective": best[1], "n_evals": obj.n_evals}
    log.debug("fit: best objective %.6g after %d evaluations", best[1], obj.n_evals)
    return JointSurrogate(best[0], obj.X, np.asarray(y, dtype=float), config,
                          degraded=degraded, fit_info=info)


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------


def _array_field(a):
    a = np.asarray(a, dtype=float)
    return {"shape": list(a.shape), "data": [float(v) for v in a.ravel()]}


def surrogate_to_dict(s: JointSurrogate) -> dict:
    cfg = s.config
    return {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "config": {
            "d": cfg.d, "hidden": cfg.hidden, "kernel": cfg.kernel,
            "decoder_variant": cfg.decoder.variant,
            "block_size": cfg.decoder.block_size,
            "n_latent": cfg.decoder.n_latent,
            "noise_variance": cfg.noise_variance,
            "learn_noise": cfg.learn_noise,
            "warp_eps": cfg.warp_eps,
            "restarts": cfg.restarts, "max_iter": cfg.max_iter, "tol": cfg.tol,
            "lengthscale_range": list(cfg.lengthscale_range),
        },
        "degraded": bool(s.degraded),
        "fields": {
            "theta": _array_field(s.theta),
            "X": _array_field(s.X),
            "y": _array_field(s.y_raw),
        },
    }


def surrogate_from_dict(obj: dict) -> JointSurrogate:
    if obj.get("format") != CHECKPOINT_FORMAT:
        raise ValueError(f"not a surrogate checkpoint (format={obj.get('format')!r})")
    if obj.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {obj.get('version')!r}")
    c = obj["config"]
    config = ModelConfig(
        d=c["d"], hidden=c["hidden"], kernel=c["kernel"],
        decoder=DecoderStructure(c["decoder_variant"], c["block_size"], c["n_latent"]),
        noise_variance=c["noise_variance"], learn_noise=c["learn_noise"],
        warp_eps=c["warp_eps"], restarts=c["restarts"], max_iter=c["max_iter"], tol=c["tol"],
        lengthscale_range=tuple(c["lengthscale_range"]),
    )
    f = {k: np.asarray(v["data"], dtype=float).reshape(v["shape"]) for k, v in obj["fields"].items()}
    return JointSurrogate(f["theta"], f["X"], f["y"], config, degraded=obj.get("degraded", False))


def save_surrogate(s: JointSurrogate, path) -> None:
    Path(path).write_text(json.dumps(surrogate_to_dict(s), indent=1))


def load_surrogate(path) -> JointSurrogate:
    return surrogate_from_dict(json.loads(Path(path).read_text()))
