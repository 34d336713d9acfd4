"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

The verdict lines appear in the terminal summary under "acceptance criteria".
Criteria 6 and 7 run full optimization loops and take several minutes.
"""

import time
import tracemalloc

import numpy as np
import pytest
from conftest import record
from scipy.special import ndtr

from featbo import kron
from featbo.acquisition import constraint_value
from featbo.benchmarks import (
    THOMSON6_FMIN,
    get_benchmark,
    make_objective,
    product_of_sines,
    rosenbrock,
    thomson_potential,
)
from featbo.bo import BOConfig, immediate_log_regret, random_search_baseline, run_bo
from featbo.cli import config_from_dict, run_experiment
from featbo.surrogate import (
    DecoderStructure,
    JointObjective,
    ModelConfig,
    ParamLayout,
    fit,
    reconstruct,
    squash_expectation,
)
from oracles import sines_min_bruteforce, thomson6_reference


def spd(rng, n):
    A = rng.standard_normal((n, n))
    return A @ A.T / n + 1e-3 * np.eye(n)


def rel(a, b):
    return float(np.linalg.norm(np.ravel(a - b)) / max(np.linalg.norm(np.ravel(b)), 1e-300))


# ---------------------------------------------------------------------------


def test_criterion_1_kronecker_oracle_and_scaling():
    rng = np.random.default_rng(2024)
    worst = 0.0
    n_inst = 0
    while n_inst < 60:
        sizes = list(rng.integers(1, 13, size=rng.integers(1, 4)))
        nv = int(np.prod(sizes))
        if nv > 500:
            continue
        fs = [spd(rng, int(n)) for n in sizes]
        s2 = float(10 ** rng.uniform(-3, 1))
        dense = np.ones((1, 1))
        for K in fs:
            dense = np.kron(dense, K)
        Ky = dense + s2 * np.eye(nv)
        x = rng.standard_normal(nv)
        nk = kron.noisy_kron(fs, s2)
        worst = max(worst,
                    rel(kron.kron_matvec(fs, x), dense @ x),
                    rel(kron.kron_solve_noisy(nk, x), np.linalg.solve(Ky, x)),
                    abs(kron.kron_logdet_noisy(nk) - np.linalg.slogdet(Ky)[1])
                    / max(abs(np.linalg.slogdet(Ky)[1]), 1.0))
        n_inst += 1

    N, D = 200, 60
    B, Kc = spd(rng, D), spd(rng, N)
    v = rng.standard_normal(N * D)
    tracemalloc.start()
    t0 = time.perf_counter()
    nk = kron.noisy_kron([B, Kc], 1e-2)
    sol = kron.kron_solve_noisy(nk, v)
    elapsed = time.perf_counter() - t0
    peak = tracemalloc.get_traced_memory()[1]
    tracemalloc.stop()
    residual = rel(kron.kron_noisy_matvec(nk, [B, Kc], sol), v)
    dense_bytes = (N * D) ** 2 * 8
    ok = worst <= 1e-8 and elapsed < 5.0 and peak < dense_bytes / 100 and residual < 1e-8
    record(1, "Kronecker algebra vs dense oracle; N=200, D=60 solve",
           ok, f"({n_inst} instances, worst rel {worst:.1e}; solve {elapsed:.2f} s, "
               f"peak {peak / 2**20:.1f} MiB vs dense {dense_bytes / 2**30:.2f} GiB)")
    assert ok


def test_criterion_2_joint_gradient_check():
    worst = 0.0
    n_inst = 20
    for k in range(n_inst):
        rng = np.random.default_rng(500 + k)
        N, D = int(rng.integers(3, 13)), int(rng.integers(1, 9))
        d = min(int(rng.integers(1, 4)), D)
        config = ModelConfig(d=d, kernel=("matern52", "se")[k % 2],
                             decoder=DecoderStructure(("full", "block_shared", "block_separate")[k % 3], 2),
                             learn_noise=bool(k % 2))
        obj = JointObjective(rng.uniform(size=(N, D)), rng.standard_normal(N), config)
        th = obj.layout.initial(rng)
        enc = obj.layout.slices["encoder"]
        th[enc] += 0.3 * rng.standard_normal(enc.stop - enc.start)
        _, g = obj(th)
        fd = np.empty_like(th)
        h = 1e-4
        for i in range(th.size):
            def central(step):
                tp, tm = th.copy(), th.copy()
                tp[i] += step
                tm[i] -= step
                return (obj.value(tp) - obj.value(tm)) / (2 * step)
            fd[i] = (4 * central(h / 2) - central(h)) / 3
        for sl in obj.layout.slices.values():
            worst = max(worst, rel(g[sl], fd[sl]))
    ok = worst <= 1e-4
    record(2, "joint objective gradient vs finite differences", ok,
           f"({n_inst} instances, worst per-group rel {worst:.1e})")
    assert ok


def test_criterion_3_acquisition_closed_forms():
    from featbo.acquisition import AcquisitionSpec, acq_value

    checks = [
        (acq_value(AcquisitionSpec("PI", y_min=0.0), 0.0, 1.0), 0.5),
        (acq_value(AcquisitionSpec("EI", y_min=0.0), 0.0, 1.0), 0.398942),
        (acq_value(AcquisitionSpec("UCB"), 1.0, 2.0), 2.464102),
        (acq_value(AcquisitionSpec("EI", y_min=-1.0), 0.0, 1.0), 0.083315),
        (acq_value(AcquisitionSpec("PI", y_min=1.0), 0.5, 0.0), 1.0),
        (acq_value(AcquisitionSpec("PI", y_min=1.0), 1.5, 0.0), 0.0),
        (acq_value(AcquisitionSpec("EI", y_min=1.0), 0.25, 0.0), 0.75),
        (acq_value(AcquisitionSpec("EI", y_min=1.0), 1.25, 0.0), 0.0),
        (acq_value(AcquisitionSpec("UCB", y_min=1.0), 0.3, 0.0), -0.3),
    ]
    err = max(abs(a - b) for a, b in checks)
    cont = max(abs(acq_value(AcquisitionSpec(k, 0.5), mu, 1e-10) - acq_value(AcquisitionSpec(k, 0.5), mu, 0.0))
               for k in ("PI", "EI") for mu in (-0.4, 0.6, 1.7))
    ok = err <= 1e-6 and cont <= 1e-8
    record(3, "PI/EI/UCB tabulated values and zero-variance limits", ok,
           f"(max error {err:.1e}, continuity gap {cont:.1e})")
    assert ok


def test_criterion_4_warped_reconstruction():
    rng = np.random.default_rng(7)
    worst = 0.0
    for _ in range(10):
        mu, var = rng.uniform(-3, 3), rng.uniform(0, 4)
        mc = float(np.mean(ndtr(rng.normal(mu, np.sqrt(var), size=10**6))))
        worst = max(worst, abs(float(squash_expectation(mu, var)) - mc))
    X = rng.uniform(size=(8, 5))
    s = fit(X, np.sum(X, axis=1), ModelConfig(d=2, restarts=1, max_iter=50), seed=0)
    Zs = rng.uniform(-2, 3, size=(200, 2))
    in_box = all(np.all((x >= 0) & (x <= 1)) for x in (reconstruct(s, z) for z in Zs))
    ok = worst <= 1e-3 and in_box
    record(4, "warped reconstruction vs Monte Carlo; outputs in the unit box", ok,
           f"(10 pairs, worst |diff| {worst:.1e}; in box: {in_box})")
    assert ok


def test_criterion_5_constraint_soundness():
    cfg = config_from_dict({}, "ci")
    obj = cfg.objective()
    min_margin = np.inf
    lipschitz_ok = True
    n_checked = 0

    def check(t, s, prop, x_next):
        nonlocal min_margin, lipschitz_ok, n_checked
        min_margin = min(min_margin, constraint_value(prop.z, prop.constraint))
        rng = np.random.default_rng(1000 + t)
        Z1, Z2 = rng.uniform(size=(2, 100, s.config.d))
        lhs = np.abs(s.decoder_mean(Z1) - s.decoder_mean(Z2))
        rhs = prop.constraint.L * np.linalg.norm(Z1 - Z2, axis=1)[:, None] * (1 + 1e-6)
        lipschitz_ok &= bool(np.all(lhs <= rhs))
        n_checked += 1

    for seed in cfg.seeds:
        bo_cfg = cfg.bo_config(seed)
        assert bo_cfg.constrained
        run_bo(obj, bo_cfg, callback=check)
    expected = len(cfg.seeds) * cfg.iterations
    ok = n_checked == expected and min_margin >= -1e-8 and lipschitz_ok
    record(5, "constrained proposals feasible; sampled-pairs Lipschitz check", ok,
           f"({n_checked} proposals, min constraint {min_margin:.2e}, Lipschitz valid: {lipschitz_ok})")
    assert ok


# -- optimization efficacy on product of sines, d=2 in D=20 ------------------

EFFICACY_SEEDS = range(5)
EFFICACY = dict(D=20, d_fs=2, T_end=60, N0=10, n_random=3000, n_top=20,
                lipschitz_random=1000, lipschitz_top=5)


@pytest.fixture(scope="module")
def sines_d2():
    return get_benchmark("sines-linear", intrinsic_dim=2, D=20)


def final_stats(obj, traces):
    best = [tr.best_f_true[-1] for tr in traces]
    reg = [immediate_log_regret(tr, obj.f_min)[-1] for tr in traces]
    return float(np.median(best)), float(np.median(reg))


@pytest.fixture(scope="module")
def random_search_stats(sines_d2):
    budget = EFFICACY["N0"] + EFFICACY["T_end"]
    return final_stats(sines_d2, [random_search_baseline(sines_d2, budget, s) for s in EFFICACY_SEEDS])


@pytest.mark.slow
def test_criterion_6_beats_random_search(sines_d2, random_search_stats):
    traces = [run_bo(sines_d2, BOConfig(acquisition="EI", constrained=True, seed=s, **EFFICACY))
              for s in EFFICACY_SEEDS]
    bo_f, bo_r = final_stats(sines_d2, traces)
    rs_f, rs_r = random_search_stats
    ok = bo_f < rs_f and bo_r <= rs_r - 0.5
    record(6, "constrained EI beats random search (sines d=2, D=20, 60 its, 5 seeds)", ok,
           f"(median best f {bo_f:.4f} vs {rs_f:.4f}; median log regret {bo_r:.3f} vs {rs_r:.3f})")
    assert ok


@pytest.mark.slow
def test_criterion_7_constrained_no_worse_than_unconstrained(sines_d2):
    regrets = {}
    for constrained in (True, False):
        traces = [run_bo(sines_d2, BOConfig(acquisition="PI", constrained=constrained, seed=s,
                                            **EFFICACY)) for s in EFFICACY_SEEDS]
        regrets[constrained] = final_stats(sines_d2, traces)[1]
    ok = regrets[True] <= regrets[False] + 0.1
    record(7, "constrained PI regret no worse than unconstrained", ok,
           f"(median log regret {regrets[True]:.3f} vs {regrets[False]:.3f})")
    assert ok


def test_criterion_8_benchmark_ground_truths():
    r = rosenbrock(np.ones(10))
    sines_ref = sines_min_bruteforce()
    sines_at_min = make_objective("sines", 10, "linear", 60).f_true(
        make_objective("sines", 10, "linear", 60).optimum_x())
    t2 = thomson_potential(np.array([0.0, 0.0, 0.0, 1.0]))
    e6, P = thomson6_reference()
    P = P / np.linalg.norm(P, axis=1, keepdims=True)
    angles = np.column_stack([np.mod(np.arctan2(P[:, 1], P[:, 0]) / (2 * np.pi), 1.0),
                              np.arccos(np.clip(P[:, 2], -1, 1)) / np.pi]).ravel()
    t6 = thomson_potential(angles)
    ok = (r == 0.0 and abs(sines_ref - (-10.0)) <= 1e-6 and abs(sines_at_min + 10.0) <= 1e-6
          and abs(product_of_sines(np.array([np.pi / 2, -np.pi / 2])) + 10.0) <= 1e-12
          and t2 == 0.5 and abs(t6 - e6) <= 1e-6 and abs(THOMSON6_FMIN - e6) <= 1e-6)
    record(8, "benchmark ground truths", ok,
           f"(Rosenbrock(1)={r}, sines brute force {sines_ref:.9f}, Thomson2 {t2}, "
           f"Thomson6 harness {t6:.9f} vs oracle {e6:.9f})")
    assert ok


def test_criterion_9_byte_identical_reruns(tmp_path):
    outs = []
    for name in ("first", "second"):
        cfg = config_from_dict({"out": str(tmp_path / name)}, "ci")
        run_experiment(cfg, workers=1)
        outs.append(cfg)
    same = all((tmp_path / "first" / f"seed_{s}.csv").read_bytes()
               == (tmp_path / "second" / f"seed_{s}.csv").read_bytes() for s in outs[0].seeds)
    record(9, "identical config and seeds give byte-identical CSVs", same,
           f"({len(outs[0].seeds)} seeds, ci profile)")
    assert same
