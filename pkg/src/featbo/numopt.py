"""Deterministic box-constrained optimization helpers.

``minimize_box`` wraps SciPy's L-BFGS-B (memory 10).  ``multistart_maximize``
does a seeded random screen followed by local refinement of the best
candidates.  ``maximize_constrained`` handles a single inequality
``g(x) >= 0`` with an exterior quadratic penalty sequence, restores
feasibility by bisection toward the (feasible) start point and keeps only
feasible candidates.

Objectives follow one convention: ``f(x)`` returns ``(value, gradient)``
when ``jac=True`` and a bare value otherwise (SciPy then uses finite
differences).  An optional ``f_batch(X)`` returns values for many points at
once and is used for the random screen.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.optimize import minimize

from .gradients import NonFiniteLossError

FEAS_TOL = 1e-8


@dataclass(frozen=True)
class BoxBounds:
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lower, dtype=float)).copy()
        hi = np.atleast_1d(np.asarray(self.upper, dtype=float)).copy()
        if lo.shape != hi.shape or lo.ndim != 1:
            raise ValueError(f"bound shapes differ: {lo.shape} vs {hi.shape}")
        if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
            raise ValueError("bounds must be finite")
        if np.any(lo >= hi):
            raise ValueError("every lower bound must be strictly below its upper bound")
        lo.setflags(write=False)
        hi.setflags(write=False)
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @classmethod
    def unit(cls, d: int) -> "BoxBounds":
        return cls(np.zeros(d), np.ones(d))

    @property
    def dim(self) -> int:
        return self.lower.shape[0]

    def clip(self, x) -> np.ndarray:
        return np.clip(x, self.lower, self.upper)

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        return rng.uniform(self.lower, self.upper, size=(n, self.dim))


@dataclass
class OptimResult:
    x_opt: np.ndarray
    f_opt: float
    iterations: int = 0
    converged: bool = False
    trace: list = field(default_factory=list)
    failed: bool = False
    fallback: bool = False
    message: str = ""


class _Abort(Exception):
    pass


def projected_gradient_norm(x, g, bounds: BoxBounds) -> float:
    """Infinity norm of the gradient projected onto feasible directions."""
    pg = np.where((x <= bounds.lower) & (g > 0), 0.0, g)
    pg = np.where((x >= bounds.upper) & (pg < 0), 0.0, pg)
    return float(np.max(np.abs(pg))) if pg.size else 0.0


def minimize_box(f: Callable, x0, bounds: BoxBounds, tol: float = 1e-6,
                 max_iter: int = 500, jac: bool = True, ftol: float = 1e-15) -> OptimResult:
    """Minimize ``f`` over a box with limited-memory quasi-Newton steps.

    Returns the best point seen.  If ``f`` or its gradient turns non-finite
    (or raises :class:`NonFiniteLossError`) the run stops and the best
    previous iterate is returned with ``failed=True``.
    """
    x0 = np.asarray(x0, dtype=float)
    if np.any(x0 < bounds.lower - 1e-12) or np.any(x0 > bounds.upper + 1e-12):
        raise ValueError("x0 lies outside the bounds")
    x0 = bounds.clip(x0)
    best = {"x": None, "f": np.inf, "g": None}

    def wrapped(x):
        try:
            out = f(x)
        except NonFiniteLossError as exc:
            raise _Abort(str(exc)) from exc
        val, grad = out if jac else (out, None)
        val = float(val)
        if not np.isfinite(val) or (grad is not None and not np.all(np.isfinite(grad))):
            raise _Abort("non-finite objective or gradient")
        if val < best["f"]:
            best.update(x=np.array(x, copy=True), f=val, g=None if grad is None else np.array(grad))
        return (val, np.asarray(grad, dtype=float)) if jac else val

    try:
        first = wrapped(x0)
    except _Abort as exc:
        return OptimResult(x0, float("inf"), 0, False, [], failed=True, message=str(exc))
    f0 = first[0] if jac else first
    trace = [f0]

    def callback(intermediate_result):
        trace.append(float(intermediate_result.fun))

    failed = False
    message = ""
    nit = 0
    try:
        res = minimize(
            wrapped, x0, jac=jac, method="L-BFGS-B",
            bounds=list(zip(bounds.lower, bounds.upper)),
            callback=callback,
            options={"maxcor": 10, "gtol": tol, "ftol": ftol, "maxiter": max_iter,
                     "maxfun": max(15000, 20 * max_iter)},
        )
        nit = int(res.nit)
        message = str(res.message)
    except _Abort as exc:
        failed = True
        message = str(exc)
        nit = len(trace) - 1

    x_opt = bounds.clip(best["x"])
    f_opt = best["f"]
    converged = False
    if not failed and best["g"] is not None:
        converged = projected_gradient_norm(x_opt, best["g"], bounds) <= tol
    elif not failed and not jac:
        converged = bool(nit < max_iter)
    return OptimResult(x_opt, f_opt, nit, converged, trace, failed=failed, message=message)


def _negate(f, jac):
    if jac:
        def neg(x):
            v, g = f(x)
            return -v, -np.asarray(g)
    else:
        def neg(x):
            return -f(x)
    return neg


def _value(f, x, jac):
    try:
        out = f(x)
    except NonFiniteLossError:
        return -np.inf
    v = float(out[0] if jac else out)
    return v if np.isfinite(v) else -np.inf


def _screen(f, f_batch, X, jac):
    if f_batch is not None:
        vals = np.asarray(f_batch(X), dtype=float)
    else:
        vals = np.array([_value(f, x, jac) for x in X])
    return np.where(np.isfinite(vals), vals, -np.inf)


def multistart_maximize(f: Callable, bounds: BoxBounds, n_random: int = 5000, n_top: int = 100,
                        seed: int = 0, jac: bool = True, f_batch: Optional[Callable] = None,
                        tol: float = 1e-6, max_iter: int = 200) -> OptimResult:
    """Random screen of ``n_random`` points, then refine the ``n_top`` best.

    The result is never worse than the best screened sample.  Ties between
    local runs go to the lowest start index.
    """
    if n_top > n_random:
        raise ValueError("n_top must not exceed n_random")
    rng = np.random.default_rng(seed)
    X = bounds.sample(rng, n_random)
    vals = _screen(f, f_batch, X, jac)
    order = np.argsort(-vals, kind="stable")
    i0 = int(order[0])
    best_x, best_f = X[i0].copy(), float(vals[i0])
    neg = _negate(f, jac)
    any_ok = False
    total_it = 0
    for i in order[:n_top]:
        if not np.isfinite(vals[i]):
            continue
        res = minimize_box(neg, X[i], bounds, tol=tol, max_iter=max_iter, jac=jac)
        total_it += res.iterations
        if res.failed and not np.isfinite(res.f_opt):
            continue
        any_ok = True
        if -res.f_opt > best_f:
            best_x, best_f = res.x_opt, -res.f_opt
    return OptimResult(best_x, best_f, total_it, any_ok, [], fallback=not any_ok)


def _penalized(f, g, mu, jac):
    if jac:
        def fun(x):
            fv, fg = f(x)
            gv, gg = g(x)
            v = min(gv, 0.0)
            return -fv + mu * v * v, -np.asarray(fg) + 2.0 * mu * v * np.asarray(gg)
    else:
        def fun(x):
            v = min(g(x), 0.0)
            return -f(x) + mu * v * v
    return fun


def _restore(g, x_bad, x_good, jac, steps=60):
    """Bisect the segment ``x_good -> x_bad`` for the last feasible point."""
    gval = (lambda x: g(x)[0]) if jac else g
    lo, hi = 0.0, 1.0
    for _ in range(steps):
        mid = 0.5 * (lo + hi)
        if gval(x_good + mid * (x_bad - x_good)) >= 0.0:
            lo = mid
        else:
            hi = mid
    return x_good + lo * (x_bad - x_good)


def maximize_constrained(f: Callable, g: Callable, bounds: BoxBounds, n_random: int = 5000,
                         n_top: int = 100, seed: int = 0, jac: bool = True,
                         f_batch: Optional[Callable] = None, g_batch: Optional[Callable] = None,
                         fallback_points=None, n_stages: int = 5,
                         tol: float = 1e-6, max_iter: int = 200) -> OptimResult:
    """Maximize ``f`` subject to ``g(x) >= 0`` inside a box.

    Same seeded screen as :func:`multistart_maximize`, extended by
    ``fallback_points`` (assumed feasible) as extra candidate starts.  Each selected start
    is refined through penalty weights ``10^k * scale`` (``k < n_stages``),
    stopping early once an iterate is feasible.  Infeasible end points are
    pulled back onto the feasible set along the segment to their start.  If
    nothing feasible turns up, the best of ``fallback_points`` is returned
    with ``fallback=True``.
    """
    if n_top > n_random:
        raise ValueError("n_top must not exceed n_random")
    rng = np.random.default_rng(seed)
    X = bounds.sample(rng, n_random)
    if fallback_points is not None and len(fallback_points):
        # known feasible points also serve as starts; tiny feasible sets are rarely sampled
        X = np.vstack([X, bounds.clip(np.atleast_2d(np.asarray(fallback_points, dtype=float)))])
    fv = _screen(f, f_batch, X, jac)
    if g_batch is not None:
        gv = np.asarray(g_batch(X), dtype=float)
    else:
        gv = np.array([g(x)[0] if jac else g(x) for x in X])
    feasible = gv >= 0.0
    finite = np.isfinite(fv)
    scale = float(np.ptp(fv[finite])) if np.count_nonzero(finite) > 1 else 1.0
    scale = max(scale, 1e-8)

    cands = []  # (value, x)
    for i in np.flatnonzero(feasible & finite):
        cands.append((float(fv[i]), X[i].copy(), int(i)))
    # starts: best feasible samples first, then least-violating infeasible ones
    feas_idx = np.flatnonzero(feasible & finite)
    feas_idx = feas_idx[np.argsort(-fv[feas_idx], kind="stable")]
    starts = list(feas_idx[:n_top])
    if len(starts) < n_top:
        inf_idx = np.flatnonzero(~feasible & finite)
        merit = fv[inf_idx] - scale * 1e2 * gv[inf_idx] ** 2
        inf_idx = inf_idx[np.argsort(-merit, kind="stable")]
        starts += list(inf_idx[: n_top - len(starts)])

    gval = (lambda x: g(x)[0]) if jac else g
    total_it = 0
    for rank, i in enumerate(starts):
        x = X[i].copy()
        x_anchor = x if feasible[i] else None
        for k in range(n_stages):
            mu = scale * 10.0 ** k
            res = minimize_box(_penalized(f, g, mu, jac), x, bounds, tol=tol,
                               max_iter=max_iter, jac=jac)
            total_it += res.iterations
            if not np.all(np.isfinite(res.x_opt)):
                break
            x = res.x_opt
            if gval(x) >= 0.0:
                break
        if gval(x) < 0.0:
            if x_anchor is None:
                continue
            x = _restore(g, x, x_anchor, jac)
        val = _value(f, x, jac)
        if np.isfinite(val) and gval(x) >= -FEAS_TOL:
            cands.append((val, x, X.shape[0] + rank))

    if not cands:
        if fallback_points is None or len(fallback_points) == 0:
            raise RuntimeError("no feasible point found and no fallback points given")
        P = np.atleast_2d(np.asarray(fallback_points, dtype=float))
        vals = _screen(f, f_batch, P, jac)
        j = int(np.argmax(vals))
        return OptimResult(P[j].copy(), float(vals[j]), total_it, False, [], fallback=True,
                           message="no feasible candidate; returned best fallback point")

    best = max(cands, key=lambda c: (c[0], -c[2]))
    return OptimResult(best[1], best[0], total_it, True, [])
