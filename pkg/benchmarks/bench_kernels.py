"""Time the numba and pure-numpy kernel paths on the same inputs.

    python3 benchmarks/bench_kernels.py [--hidden 16] [--steps 300] [--repeat 20]
"""

import argparse
import time

import numpy as np

from isslstm import _kernels as K


def _best(fn, repeat):
    fn()  # warm-up (includes numba compilation on first call)
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t)
    return min(times)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--hidden", type=int, default=16)
    ap.add_argument("--inputs", type=int, default=7)
    ap.add_argument("--steps", type=int, default=300)
    ap.add_argument("--repeat", type=int, default=20)
    args = ap.parse_args()
    rng = np.random.default_rng(0)
    n, m, N = args.hidden, args.inputs, args.steps
    W = rng.normal(0, 0.3, (4, n, m))
    R = rng.normal(0, 0.3, (4, n, n))
    b = rng.normal(0, 0.3, (4, n))
    X = rng.uniform(-1, 1, (N, m))
    z = np.zeros(n)
    dH = rng.normal(size=(N + 1, n))
    fwd = K.layer_forward_numpy(W, R, b, X, z, z)
    cases = {
        "forward": (
            lambda: K.layer_forward_numpy(W, R, b, X, z, z),
            lambda: K.layer_forward_numba(W, R, b, X, z, z),
        ),
        "backward": (
            lambda: K.layer_backward_numpy(W, R, X, *fwd, dH),
            lambda: K.layer_backward_numba(W, R, X, *fwd, dH),
        ),
    }
    A = np.array([[0.6, 0.2], [0.4, 0.1]])
    Bu, Bb = np.array([0.3, 0.2]), np.array([0.5, 0.3])
    e0 = rng.uniform(0, 1, (50, 2))
    un = rng.uniform(0, 1, (50, 200))
    cases["envelope"] = (
        lambda: K.envelope_recursion_numpy(A, Bu, Bb, 0.5, e0, un),
        lambda: K.envelope_recursion_numba(A, Bu, Bb, 0.5, e0, un),
    )
    print(f"n_hu={n} n_in={m} steps={N}")
    print(f"{'kernel':<10} {'numpy ms':>10} {'numba ms':>10} {'speedup':>8}")
    for name, (f_np, f_nb) in cases.items():
        t_np = _best(f_np, args.repeat)
        t_nb = _best(f_nb, args.repeat)
        print(f"{name:<10} {t_np * 1e3:10.3f} {t_nb * 1e3:10.3f} {t_np / t_nb:8.1f}")


if __name__ == "__main__":
    main()
