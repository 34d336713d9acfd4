"""The feature-space Bayesian optimization loop and its bookkeeping.

Each iteration fits the joint surrogate on all observations so far,
maximizes the acquisition over the feature box (optionally under the
Lipschitz distance constraint), decodes the maximizer back to ``[0, 1]^D``
and evaluates the objective there.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np
from scipy.stats import qmc

from .acquisition import AcquisitionSpec, Proposal, estimate_lipschitz, propose
from .benchmarks import EmbeddedObjective
from .surrogate import FitError, JointSurrogate, ModelConfig, fit, reconstruct

log = logging.getLogger(__name__)

REGRET_FLOOR = 1e-16
INIT_DESIGNS = ("uniform", "lhs")


class RegretUnavailable(ValueError):
    """The benchmark has no registered minimum value."""


@dataclass(frozen=True)
class BOConfig:
    D: int
    d_fs: int
    T_end: int = 300
    N0: int = 10
    noise_variance: float = 1e-4
    acquisition: str = "EI"
    beta: float = math.sqrt(3.0)
    constrained: bool = True
    model: ModelConfig = field(default_factory=ModelConfig)
    seed: int = 0
    init_design: str = "uniform"
    n_random: int = 5000
    n_top: int = 100
    lipschitz_random: int = 2000
    lipschitz_top: int = 10

    def __post_init__(self):
        if not 1 <= self.d_fs <= self.D:
            raise ValueError(f"d_fs must lie in [1, D={self.D}], got {self.d_fs}")
        if self.N0 < 2:
            raise ValueError("N0 must be at least 2")
        if self.T_end < 0:
            raise ValueError("T_end must be nonnegative")
        if self.noise_variance < 0:
            raise ValueError("noise_variance must be >= 0")
        if self.init_design not in INIT_DESIGNS:
            raise ValueError(f"init_design must be one of {INIT_DESIGNS}")
        if self.n_top > self.n_random or self.lipschitz_top > self.lipschitz_random:
            raise ValueError("multistart top count exceeds its random budget")
        AcquisitionSpec(self.acquisition, 0.0, self.beta)
        if self.model.d != self.d_fs:
            object.__setattr__(self, "model", replace(self.model, d=self.d_fs))


@dataclass
class BOTrace:
    """All observations of one run; rows with negative ``iteration`` are the initial design."""

    X: np.ndarray
    y: np.ndarray
    f_true: np.ndarray
    iteration: np.ndarray
    wall: np.ndarray
    degraded: np.ndarray
    fallback: np.ndarray
    Z: list = field(default_factory=list)
    L: list = field(default_factory=list)
    aborted: bool = False
    message: str = ""

    @property
    def n(self) -> int:
        return int(self.y.shape[0])

    @property
    def best_y(self) -> np.ndarray:
        return np.minimum.accumulate(self.y)

    @property
    def best_f_true(self) -> np.ndarray:
        return np.minimum.accumulate(self.f_true)

    @property
    def x_star(self) -> np.ndarray:
        return self.X[int(np.argmin(self.y))]


class _Recorder:
    def __init__(self, D):
        self.rows = {"X": [], "y": [], "f_true": [], "iteration": [], "wall": [],
                     "degraded": [], "fallback": []}
        self.D = D
        self.Z, self.L = [], []

    def add(self, x, y, f, it, wall, degraded=False, fallback=False):
        for k, v in zip(self.rows, (x, y, f, it, wall, degraded, fallback)):
            self.rows[k].append(v)

    def trace(self, aborted=False, message="") -> BOTrace:
        r = self.rows
        X = np.array(r["X"], dtype=float).reshape(-1, self.D)
        return BOTrace(X, np.array(r["y"], dtype=float), np.array(r["f_true"], dtype=float),
                       np.array(r["iteration"], dtype=int), np.array(r["wall"], dtype=float),
                       np.array(r["degraded"], dtype=bool), np.array(r["fallback"], dtype=bool),
                       self.Z, self.L, aborted, message)


def _streams(seed: int):
    """Independent generators for initial design, noise, restarts and multistart."""
    ss = np.random.SeedSequence(int(seed))
    return [np.random.default_rng(s) for s in ss.spawn(4)]


def _initial_design(rng, N0, D, kind):
    if kind == "lhs":
        return qmc.LatinHypercube(d=D, seed=rng).random(N0)
    return rng.uniform(size=(N0, D))


def _draw_seed(rng) -> int:
    return int(rng.integers(0, 2**31 - 1))


def run_bo(objective: EmbeddedObjective, cfg: BOConfig,
           callback: Optional[Callable] = None) -> BOTrace:
    """Run ``cfg.T_end`` iterations after ``cfg.N0`` initial observations.

    ``callback(t, surrogate, proposal, x_next)`` is invoked after each
    proposal (surrogate may be ``None`` when no model was available).  A
    non-finite objective value stops the run; the partial trace is returned
    with ``aborted=True``.
    """
    if objective.D != cfg.D:
        raise ValueError(f"objective has D={objective.D}, config has D={cfg.D}")
    rng_init, rng_noise, rng_restart, rng_ms = _streams(cfg.seed)
    rec = _Recorder(cfg.D)
    X0 = _initial_design(rng_init, cfg.N0, cfg.D, cfg.init_design)
    t0 = time.perf_counter()
    for i, x in enumerate(X0):
        y, f = objective.evaluate(x, rng_noise)
        if not (np.isfinite(y) and np.isfinite(f)):
            return rec.trace(True, f"non-finite objective at initial point {i}")
        rec.add(x, y, f, i - cfg.N0, time.perf_counter() - t0)

    prev: JointSurrogate | None = None
    for t in range(cfg.T_end):
        t_start = time.perf_counter()
        X = np.array(rec.rows["X"])
        Y = np.array(rec.rows["y"])
        fit_seed, ms_seed = _draw_seed(rng_restart), _draw_seed(rng_ms)
        degraded = False
        try:
            s = fit(X, Y, cfg.model, seed=fit_seed,
                    warm_start=None if prev is None else prev.theta)
            degraded = s.degraded
            if not degraded:
                prev = s
        except FitError as exc:
            log.warning("iteration %d: surrogate fit failed (%s); reusing previous model", t, exc)
            s, degraded = prev, True
        if s is None:
            # no usable model yet: explore uniformly
            x_next = rng_init.uniform(size=cfg.D)
            prop = None
        else:
            spec = AcquisitionSpec(cfg.acquisition, float(np.min(Y)), cfg.beta)
            L = None
            if cfg.constrained:
                L = estimate_lipschitz(s, seed=ms_seed + 1, n_random=cfg.lipschitz_random,
                                       n_top=cfg.lipschitz_top)
            prop = propose(s, spec, cfg.constrained, seed=ms_seed,
                           n_random=cfg.n_random, n_top=cfg.n_top, L=L)
            x_next = reconstruct(s, prop.z)
            rec.Z.append(prop.z)
            rec.L.append(L)
        if callback is not None:
            callback(t, s, prop, x_next)
        y, f = objective.evaluate(x_next, rng_noise)
        if not (np.isfinite(y) and np.isfinite(f)):
            return rec.trace(True, f"non-finite objective at iteration {t}")
        rec.add(x_next, y, f, t, time.perf_counter() - t_start, degraded,
                bool(prop is not None and prop.fallback))
        log.info("iteration %d: y=%.6g best=%.6g", t, y, min(rec.rows["y"]))
    return rec.trace()


def random_search_baseline(objective: EmbeddedObjective, budget: int, seed: int = 0,
                           N0: int = 10) -> BOTrace:
    """Uniform sampling with the same streams as :func:`run_bo`.

    The first ``min(N0, budget)`` points coincide with the BO initial design
    for the same seed.
    """
    if budget < 1:
        raise ValueError("budget must be >= 1")
    rng_init, rng_noise, _, _ = _streams(seed)
    rec = _Recorder(objective.D)
    n0 = min(N0, budget)
    X = np.vstack([rng_init.uniform(size=(n0, objective.D)),
                   rng_init.uniform(size=(budget - n0, objective.D))])
    t0 = time.perf_counter()
    for i, x in enumerate(X):
        y, f = objective.evaluate(x, rng_noise)
        if not (np.isfinite(y) and np.isfinite(f)):
            return rec.trace(True, f"non-finite objective at sample {i}")
        rec.add(x, y, f, i - n0, time.perf_counter() - t0)
    return rec.trace()


def immediate_log_regret(trace, f_min: float | None) -> np.ndarray:
    """``log10 |min_{s<=t} f_true_s - f_min|`` for every observation ``t``.

    ``trace`` is a :class:`BOTrace` or a sequence of true values.  Exact
    zeros are floored at ``1e-16``.
    """
    if f_min is None or not np.isfinite(f_min):
        raise RegretUnavailable("no known minimum for this objective")
    f = trace.f_true if isinstance(trace, BOTrace) else np.asarray(trace, dtype=float)
    best = np.minimum.accumulate(f)
    return np.log10(np.maximum(np.abs(best - f_min), REGRET_FLOOR))
