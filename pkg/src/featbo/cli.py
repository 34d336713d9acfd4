"""Batch experiment runner: JSON config in, per-seed CSVs and a summary out.

Config keys (all optional; defaults come from the selected profile)::

    benchmark         registry name                       "rosenbrock-linear"
    D                 ambient dimension override           registry value
    intrinsic_dim     intrinsic dimension override         registry value
    embedding_seed    seed of the embedding matrix         0
    d_fs              feature-space dimension              registry value
    iterations        BO iterations after the initial set  300
    n_init            initial observations                 10
    noise_variance    observation noise variance           1e-4
    acquisition       "PI" | "EI" | "UCB"                  "EI"
    beta              UCB weight                           sqrt(3)
    constrained       Lipschitz-constrained acquisition    true
    decoder           "full" | "block_shared" | "block_separate"
    block_size        decoder block size                   3
    kernel            "matern52" | "se"                    "matern52"
    restarts          surrogate restarts on the first fit  3
    fit_max_iter      optimizer iterations per restart     200
    init_design       "uniform" | "lhs"                    "uniform"
    n_random, n_top   acquisition multistart budget        5000, 100
    lipschitz_random, lipschitz_top                        2000, 10
    seeds             list of distinct integers            0..19
    out               output directory                     "results"
    profile           "full" | "ci"                        "full"
    workers           parallel runs (capped by FEATBO_THREADS)
    record_timing     write measured wall_ms into CSVs     false

The ``ci`` profile changes the defaults to a small, fast setup.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from .benchmarks import REGISTRY, default_feature_dim, get_benchmark
from .bo import BOConfig, BOTrace, RegretUnavailable, immediate_log_regret, run_bo
from .surrogate import DecoderStructure, ModelConfig

log = logging.getLogger(__name__)

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3
PROFILES = ("full", "ci")

PROFILE_DEFAULTS = {
    "full": {},
    "ci": {
        "benchmark": "sines-identity-small",
        "iterations": 15,
        "seeds": [0, 1],
        "d_fs": 2,
        "restarts": 2,
        "fit_max_iter": 100,
        "n_random": 500,
        "n_top": 5,
        "lipschitz_random": 500,
        "lipschitz_top": 5,
    },
}


class ConfigError(ValueError):
    """Invalid experiment configuration; the message names the offending key."""


@dataclass(frozen=True)
class ExperimentConfig:
    benchmark: str = "rosenbrock-linear"
    D: int | None = None
    intrinsic_dim: int | None = None
    embedding_seed: int = 0
    d_fs: int | None = None
    iterations: int = 300
    n_init: int = 10
    noise_variance: float = 1e-4
    acquisition: str = "EI"
    beta: float = math.sqrt(3.0)
    constrained: bool = True
    decoder: str = "full"
    block_size: int = 3
    kernel: str = "matern52"
    restarts: int = 3
    fit_max_iter: int = 200
    init_design: str = "uniform"
    n_random: int = 5000
    n_top: int = 100
    lipschitz_random: int = 2000
    lipschitz_top: int = 10
    seeds: tuple = field(default_factory=lambda: tuple(range(20)))
    out: str = "results"
    profile: str = "full"
    workers: int | None = None
    record_timing: bool = False

    def objective(self):
        return get_benchmark(self.benchmark, self.noise_variance, self.embedding_seed,
                             self.D, self.intrinsic_dim)

    def feature_dim(self) -> int:
        return self.d_fs if self.d_fs is not None else default_feature_dim(self.benchmark)

    def bo_config(self, seed: int) -> BOConfig:
        obj = self.objective()
        d = self.feature_dim()
        model = ModelConfig(d=d, kernel=self.kernel,
                            decoder=DecoderStructure(self.decoder, self.block_size),
                            noise_variance=max(self.noise_variance, 1e-8),
                            restarts=self.restarts, max_iter=self.fit_max_iter)
        return BOConfig(D=obj.D, d_fs=d, T_end=self.iterations, N0=self.n_init,
                        noise_variance=self.noise_variance, acquisition=self.acquisition,
                        beta=self.beta, constrained=self.constrained, model=model, seed=seed,
                        init_design=self.init_design, n_random=self.n_random, n_top=self.n_top,
                        lipschitz_random=self.lipschitz_random, lipschitz_top=self.lipschitz_top)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["seeds"] = list(self.seeds)
        return out


_INT_KEYS = {"D", "intrinsic_dim", "embedding_seed", "d_fs", "iterations", "n_init", "block_size",
             "restarts", "fit_max_iter", "n_random", "n_top", "lipschitz_random",
             "lipschitz_top", "workers"}
_FLOAT_KEYS = {"noise_variance", "beta"}
_BOOL_KEYS = {"constrained", "record_timing"}
_CHOICES = {
    "acquisition": ("PI", "EI", "UCB"),
    "decoder": ("full", "block_shared", "block_separate"),
    "kernel": ("matern52", "se"),
    "init_design": ("uniform", "lhs"),
    "profile": PROFILES,
}
_MINIMUM = {"iterations": 0, "n_init": 2, "block_size": 1, "restarts": 1, "fit_max_iter": 1,
            "n_random": 1, "n_top": 1, "lipschitz_random": 1, "lipschitz_top": 1, "workers": 1,
            "D": 1, "intrinsic_dim": 1, "d_fs": 1, "embedding_seed": 0}


def _check_value(key, v):
    if key in _INT_KEYS:
        if v is None and key in {"D", "intrinsic_dim", "d_fs", "workers"}:
            return None
        if isinstance(v, bool) or not isinstance(v, int):
            raise ConfigError(f"{key}: expected an integer, got {v!r}")
        if v < _MINIMUM[key]:
            raise ConfigError(f"{key}: must be >= {_MINIMUM[key]}, got {v}")
        return v
    if key in _FLOAT_KEYS:
        if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
            raise ConfigError(f"{key}: expected a finite number, got {v!r}")
        if key == "noise_variance" and v < 0:
            raise ConfigError(f"{key}: must be >= 0, got {v}")
        if key == "beta" and v <= 0:
            raise ConfigError(f"{key}: must be > 0, got {v}")
        return float(v)
    if key in _BOOL_KEYS:
        if not isinstance(v, bool):
            raise ConfigError(f"{key}: expected true or false, got {v!r}")
        return v
    if key in _CHOICES:
        if key == "acquisition" and isinstance(v, str):
            v = v.upper()
        if v not in _CHOICES[key]:
            raise ConfigError(f"{key}: must be one of {list(_CHOICES[key])}, got {v!r}")
        return v
    if key == "benchmark":
        if v not in REGISTRY:
            raise ConfigError(f"benchmark: unknown name {v!r}; available: {', '.join(REGISTRY)}")
        return v
    if key == "seeds":
        if not isinstance(v, (list, tuple)) or not v:
            raise ConfigError("seeds: expected a nonempty list of integers")
        if any(isinstance(s, bool) or not isinstance(s, int) or s < 0 for s in v):
            raise ConfigError("seeds: every seed must be a nonnegative integer")
        if len(set(v)) != len(v):
            raise ConfigError("seeds: seeds must be distinct")
        return tuple(v)
    if key == "out":
        if not isinstance(v, str) or not v:
            raise ConfigError("out: expected a nonempty path string")
        return v
    raise ConfigError(f"{key}: unknown key")


def config_from_dict(raw: dict, profile: str | None = None) -> ExperimentConfig:
    """Validate ``raw`` and merge it over the profile defaults."""
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    known = {f.name for f in fields(ExperimentConfig)}
    for key in raw:
        if key not in known:
            raise ConfigError(f"{key}: unknown key")
    prof = profile if profile is not None else raw.get("profile", "full")
    prof = _check_value("profile", prof)
    merged = dict(PROFILE_DEFAULTS[prof])
    merged.update(raw)
    merged["profile"] = prof
    values = {k: _check_value(k, v) for k, v in merged.items()}
    cfg = ExperimentConfig(**values)
    _check_consistency(cfg)
    return cfg


def _check_consistency(cfg: ExperimentConfig) -> None:
    try:
        obj = cfg.objective()
    except (ValueError, KeyError) as exc:
        key = "intrinsic_dim" if cfg.intrinsic_dim is not None else "D"
        raise ConfigError(f"{key}: {exc}") from exc
    if cfg.feature_dim() > obj.D:
        raise ConfigError(f"d_fs: must not exceed D={obj.D}, got {cfg.feature_dim()}")
    if cfg.n_top > cfg.n_random:
        raise ConfigError("n_top: must not exceed n_random")
    if cfg.lipschitz_top > cfg.lipschitz_random:
        raise ConfigError("lipschitz_top: must not exceed lipschitz_random")


def parse_config(path, profile: str | None = None) -> ExperimentConfig:
    """Read a JSON experiment config; see the module docstring for the schema."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"config: cannot read {path}: {exc}") from exc
    try:
        raw = json.loads(text) if text.strip() else {}
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config: malformed JSON ({exc})") from exc
    return config_from_dict(raw, profile)


def serialize_config(cfg: ExperimentConfig) -> str:
    return json.dumps(cfg.to_dict(), indent=2, sort_keys=True)


# ---------------------------------------------------------------------------
# running
# ---------------------------------------------------------------------------


@dataclass
class RunSummary:
    iterations: list
    mean_log_regret: list | None
    se_log_regret: list | None
    final_best_f_true: dict
    final_log_regret: dict | None
    wall_seconds: dict
    aborted: dict

    def to_dict(self) -> dict:
        return asdict(self)


def _fmt(v: float) -> str:
    return format(float(v), ".17g")


CSV_TAIL = ["y_noisy", "f_true", "best_f_true", "log10_regret", "wall_ms"]


def csv_columns(D: int) -> list:
    return ["iteration"] + [f"x_{j}" for j in range(D)] + CSV_TAIL


def write_trace_csv(path, trace: BOTrace, f_min, record_timing=False) -> None:
    try:
        regret = immediate_log_regret(trace, f_min)
    except RegretUnavailable:
        regret = np.full(trace.n, np.nan)
    best = trace.best_f_true
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(csv_columns(trace.X.shape[1]))
        for k in range(trace.n):
            wall = trace.wall[k] * 1e3 if record_timing else 0.0
            w.writerow([int(trace.iteration[k])] + [_fmt(v) for v in trace.X[k]]
                       + [_fmt(trace.y[k]), _fmt(trace.f_true[k]), _fmt(best[k]),
                          _fmt(regret[k]), _fmt(wall)])


def _run_seed(cfg_dict: dict, seed: int) -> dict:
    cfg = config_from_dict(cfg_dict)
    obj = cfg.objective()
    trace = run_bo(obj, cfg.bo_config(seed))
    write_trace_csv(Path(cfg.out) / f"seed_{seed}.csv", trace, obj.f_min, cfg.record_timing)
    bo_rows = trace.iteration >= 0
    try:
        regret = immediate_log_regret(trace, obj.f_min)[bo_rows].tolist()
    except RegretUnavailable:
        regret = None
    return {"seed": seed, "regret": regret, "final_best": float(trace.best_f_true[-1]),
            "wall": float(np.sum(trace.wall)), "aborted": bool(trace.aborted),
            "message": trace.message}


def _worker_count(cfg: ExperimentConfig) -> int:
    n = cfg.workers or os.cpu_count() or 1
    cap = os.environ.get("FEATBO_THREADS")
    if cap:
        try:
            n = min(n, max(1, int(cap)))
        except ValueError:
            log.warning("ignoring non-integer FEATBO_THREADS=%r", cap)
    return max(1, min(n, len(cfg.seeds)))


def summarize(results: list, T: int) -> RunSummary:
    results = sorted(results, key=lambda r: r["seed"])
    mean = se = final_reg = None
    if all(r["regret"] is not None for r in results):
        complete = [r["regret"] for r in results if len(r["regret"]) == T]
        if complete and T > 0:
            R = np.array(complete)
            mean = R.mean(axis=0).tolist()
            se = (R.std(axis=0, ddof=1) / np.sqrt(R.shape[0])).tolist() if R.shape[0] > 1 \
                else [0.0] * T
        final_reg = {str(r["seed"]): (r["regret"][-1] if r["regret"] else None) for r in results}
    return RunSummary(
        iterations=list(range(T)),
        mean_log_regret=mean,
        se_log_regret=se,
        final_best_f_true={str(r["seed"]): r["final_best"] for r in results},
        final_log_regret=final_reg,
        wall_seconds={str(r["seed"]): r["wall"] for r in results},
        aborted={str(r["seed"]): r["aborted"] for r in results},
    )


def run_experiment(cfg: ExperimentConfig, workers: int | None = None) -> RunSummary:
    """Run every seed, write ``seed_<s>.csv`` files and ``summary.json``."""
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    n = workers or _worker_count(cfg)
    payload = cfg.to_dict()
    if n > 1:
        with ProcessPoolExecutor(max_workers=n) as pool:
            results = list(pool.map(_run_seed, [payload] * len(cfg.seeds), cfg.seeds))
    else:
        results = [_run_seed(payload, s) for s in cfg.seeds]
    summary = summarize(results, cfg.iterations)
    (out / "summary.json").write_text(json.dumps(
        {"config": cfg.to_dict(), **summary.to_dict()}, indent=2, sort_keys=True))
    return summary


# ---------------------------------------------------------------------------
# command line
# ---------------------------------------------------------------------------


def _parse_seeds(text: str) -> list:
    try:
        return [int(s) for s in text.split(",") if s.strip()]
    except ValueError as exc:
        raise ConfigError(f"seeds: cannot parse {text!r}") from exc


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="featbo", description="Feature-space Bayesian optimization experiments")
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run an experiment from a JSON config")
    run.add_argument("--config", required=True, help="path to a JSON config")
    run.add_argument("--out", help="output directory (overrides config)")
    run.add_argument("--seeds", help="comma-separated seeds (overrides config)")
    run.add_argument("--profile", choices=PROFILES, help="defaults profile (overrides config)")
    sub.add_parser("list-benchmarks", help="print registered benchmarks")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "list-benchmarks":
        for name, (kind, d, emb, D, dfs) in REGISTRY.items():
            print(f"{name}\tkind={kind} d={d} embedding={emb} D={D} d_fs={dfs}")
        return EXIT_OK
    try:
        cfg = parse_config(args.config, args.profile)
        overrides = {}
        if args.out:
            overrides["out"] = args.out
        if args.seeds:
            overrides["seeds"] = _parse_seeds(args.seeds)
        if overrides:
            cfg = config_from_dict({**cfg.to_dict(), **overrides})
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        summary = run_experiment(cfg)
    except Exception as exc:  # noqa: BLE001 - reported as a runtime failure exit code
        print(f"runtime failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    if any(summary.aborted.values()):
        print("runtime failure: at least one run aborted on a non-finite objective",
              file=sys.stderr)
        return EXIT_RUNTIME
    print(f"wrote {len(cfg.seeds)} runs to {cfg.out}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
