"""Time the numba kernels against their pure-numpy twins.

    python3 benchmarks/bench_kernels.py [--paths 4096] [--steps 1000] [--repeat 5]

Each kernel is run once per backend before timing so JIT compilation is
excluded.  Reports the best of ``--repeat`` runs and the speedup.
"""
import argparse
import time

import numpy as np

from cylsde import kernels
from cylsde._backend import HAVE_NUMBA


def cases(n, s):
    rng = np.random.default_rng(0)
    d, K = 3, 4
    dt = 1.0 / s
    raw = rng.integers(0, 2**64, size=n * s, dtype=np.uint64)
    vals = rng.normal(size=(n, s, d, K))
    dW = rng.normal(scale=np.sqrt(dt), size=(n, K, s))
    A = -np.eye(d)
    a0 = np.zeros(d)
    M = 0.3 * rng.normal(size=(K, d, d))
    b = rng.normal(size=(K, d))
    psi0 = np.ones((n, d))
    return {
        "box_muller": (raw, np.sqrt(dt)),
        "ito_path": (vals, dW),
        "em_affine": (A, a0, M, b, psi0, dW, dt),
        "heun_affine": (A, a0, M, b, psi0, dW, dt),
    }


def best_time(fn, args, repeat):
    fn(*args)
    times = []
    for _ in range(repeat):
        start = time.perf_counter()
        fn(*args)
        times.append(time.perf_counter() - start)
    return min(times)


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--paths", type=int, default=4096)
    parser.add_argument("--steps", type=int, default=1000)
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args(argv)
    backends = ["numpy"] + (["numba"] if HAVE_NUMBA else [])
    print(f"paths={args.paths} steps={args.steps} repeat={args.repeat}")
    print(f"{'kernel':<12} " + " ".join(f"{b:>10}" for b in backends) + "   speedup")
    for name, kargs in cases(args.paths, args.steps).items():
        row = {}
        for b in backends:
            with kernels.use_backend(b):
                row[b] = best_time(getattr(kernels, name), kargs, args.repeat)
        speed = f"{row['numpy'] / row['numba']:8.1f}x" if "numba" in row else "      n/a"
        print(f"{name:<12} " + " ".join(f"{row[b]:9.4f}s" for b in backends) + f"  {speed}")


if __name__ == "__main__":
    main()
