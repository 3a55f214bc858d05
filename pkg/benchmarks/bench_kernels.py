"""Benchmark the numba kernels against the pure-numpy fallbacks.

Times the three hot paths on solver-scale inputs: the fused dual sums
(value, gradient, Hessian in one pass over the atoms), the batch
conjugate inversion, and the box-constrained least-squares projection.

    python benchmarks/bench_kernels.py [--n 100000] [--repeats 20]
"""

import argparse
import time

import numpy as np

from memrecon.kernels import numba_backend as nb
from memrecon.kernels import numpy_backend as npb

FAMILIES = [
    ("gaussian", npb.GAUSSIAN, 0.0, 1.0),
    ("poisson", npb.POISSON, 1.0, 0.0),
    ("exponential", npb.EXPONENTIAL, 4.0, 0.0),
    ("uniform", npb.UNIFORM, 0.0, 2.0),
    ("two_point", npb.TWO_POINT, 1.0, 0.5),
]


def best_of(fn, repeats):
    times = []
    for _ in range(repeats):
        start = time.perf_counter()
        fn()
        times.append(time.perf_counter() - start)
    return min(times)


def report(label, t_np, t_nb):
    print(f"{label:<38} numpy {t_np * 1e3:9.3f} ms   numba {t_nb * 1e3:9.3f} ms   "
          f"speedup {t_np / t_nb:6.2f}x")


def bench_dual_sums(n, k, repeats):
    rng = np.random.default_rng(0)
    x = rng.uniform(0, 1, n)
    phi = np.ascontiguousarray(np.stack([x ** (j + 1) for j in range(k)]))
    w = np.full(n, 1.0 / n)
    print(f"\nfused dual sums (k={k}, n={n})")
    for name, code, p1, p2 in FAMILIES:
        v = rng.normal(size=k) * (0.02 if code == npb.EXPONENTIAL else 0.5)
        args = (phi, w, v, code, p1, p2, 1e-8)
        nb.weighted_logmgf_sums(*args)  # compile before timing
        va = nb.weighted_logmgf_sums(*args)[0]
        vb = npb.weighted_logmgf_sums(*args)[0]
        assert abs(va - vb) <= 1e-9 * (1 + abs(vb)), (name, va, vb)
        t_np = best_of(lambda: npb.weighted_logmgf_sums(*args), repeats)
        t_nb = best_of(lambda: nb.weighted_logmgf_sums(*args), repeats)
        report(f"  {name}", t_np, t_nb)


def bench_conjugate(n, repeats):
    rng = np.random.default_rng(1)
    print(f"\nbatch conjugate inversion (n={n})")
    for name, code, p1, p2 in FAMILIES:
        if code not in (npb.UNIFORM, npb.TWO_POINT):
            continue
        lo = p1 if code == npb.UNIFORM else 0.0
        hi = p2 if code == npb.UNIFORM else p1
        x = rng.uniform(lo + 1e-3, hi - 1e-3, n)
        nb.conjugate_value_batch(code, p1, p2, x)
        a = nb.conjugate_value_batch(code, p1, p2, x)
        b = npb.conjugate_value_batch(code, p1, p2, x)
        assert np.allclose(a, b, rtol=1e-8, atol=1e-10)
        t_np = best_of(lambda: npb.conjugate_value_batch(code, p1, p2, x), repeats)
        t_nb = best_of(lambda: nb.conjugate_value_batch(code, p1, p2, x), repeats)
        report(f"  {name}", t_np, t_nb)


def bench_box_projection(n, k, repeats):
    rng = np.random.default_rng(2)
    A = np.ascontiguousarray(rng.uniform(0, 1, size=(k, n)) / n)
    z_true = rng.uniform(0.1, 1.9, n)
    y = A @ z_true
    z0 = np.full(n, 1.0)
    step = 1.0 / (2.0 * float(np.linalg.eigvalsh(A @ A.T)[-1]))
    args = (A, y, 0.0, 2.0, z0, step, 3000, 1e-14, 0.0)
    print(f"\nbox-constrained least squares, 3000 iterations (k={k}, n={n})")
    nb.box_residual_min(*args)
    fa = nb.box_residual_min(*args)[1]
    fb = npb.box_residual_min(*args)[1]
    assert abs(fa - fb) < 1e-12
    t_np = best_of(lambda: npb.box_residual_min(*args), repeats)
    t_nb = best_of(lambda: nb.box_residual_min(*args), repeats)
    report("  projected gradient", t_np, t_nb)


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--n", type=int, default=100_000, help="atoms per problem")
    parser.add_argument("--k", type=int, default=4, help="moment dimension")
    parser.add_argument("--repeats", type=int, default=20, help="timing repeats (best-of)")
    args = parser.parse_args()

    print(f"backends: numpy {np.__version__} vs numba (cache warm after first call)")
    bench_dual_sums(args.n, args.k, args.repeats)
    bench_conjugate(args.n, args.repeats)
    bench_box_projection(min(args.n, 2000), args.k, args.repeats)


if __name__ == "__main__":
    main()
