"""Time the numba and numpy implementations of the hot kernels side by side.

    python3 bench/bench_kernels.py [--n 400] [--d 10] [--repeat 20]

Also times one joint-objective gradient evaluation under each backend by
re-running this script in a subprocess with FEATBO_DISABLE_NUMBA set.
"""

import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from featbo import _accel


def best_of(fn, repeat):
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def kernel_table(n, d, repeat):
    rng = np.random.default_rng(0)
    A, B = rng.uniform(size=(n, d)), rng.uniform(size=(n, d))
    w = rng.uniform(1, 10, d)
    r2 = _accel.scaled_sqdist_numpy(A, B, w)
    P = rng.standard_normal((n, n))
    pts = rng.standard_normal((n // 4, 3))
    cases = {
        "scaled_sqdist": lambda impl: impl(A, B, w),
        "kernel_from_r2": lambda impl: impl(r2, 1.0, _accel.MATERN52),
        "kernel_backward": lambda impl: impl(P, A, B, w),
        "thomson_energy": lambda impl: impl(pts),
    }
    print(f"{'kernel':<18}{'numpy ms':>12}{'numba ms':>12}{'speedup':>10}")
    for name, call in cases.items():
        f_np = getattr(_accel, f"{name}_numpy")
        f_nb = getattr(_accel, f"{name}_numba")
        t_np = best_of(lambda: call(f_np), repeat)
        if f_nb is None:
            print(f"{name:<18}{t_np * 1e3:>12.3f}{'n/a':>12}")
            continue
        call(f_nb)  # compile outside the timed region
        t_nb = best_of(lambda: call(f_nb), repeat)
        print(f"{name:<18}{t_np * 1e3:>12.3f}{t_nb * 1e3:>12.3f}{t_np / t_nb:>10.2f}")


def objective_timing(repeat):
    from featbo.surrogate import JointObjective, ModelConfig

    rng = np.random.default_rng(1)
    X = rng.uniform(size=(60, 20))
    obj = JointObjective(X, rng.standard_normal(60), ModelConfig(d=2))
    theta = obj.layout.initial(rng)
    obj(theta)
    return best_of(lambda: obj(theta), repeat)


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--n", type=int, default=400)
    p.add_argument("--d", type=int, default=10)
    p.add_argument("--repeat", type=int, default=20)
    p.add_argument("--objective-only", action="store_true", help=argparse.SUPPRESS)
    args = p.parse_args()
    if args.objective_only:
        print(f"{objective_timing(args.repeat):.6f}")
        return
    kernel_table(args.n, args.d, args.repeat)
    times = {}
    for label, flag in (("numba", "0"), ("numpy", "1")):
        env = {**os.environ, "FEATBO_DISABLE_NUMBA": flag}
        out = subprocess.run([sys.executable, __file__, "--objective-only", "--repeat",
                              str(args.repeat)], env=env, capture_output=True, text=True,
                             check=True)
        times[label] = float(out.stdout.strip())
    print(f"\njoint objective + gradient (N=60, D=20, d=2): "
          f"numpy {times['numpy'] * 1e3:.2f} ms, numba {times['numba'] * 1e3:.2f} ms")


if __name__ == "__main__":
    main()
