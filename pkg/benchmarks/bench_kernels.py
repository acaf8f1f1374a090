"""Compare the compiled and numpy kernels on reduction and Hecke-leaf batches.

Usage: python benchmarks/bench_kernels.py [--n 200000] [--repeat 3]
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from sadyn import _pykernels
from sadyn.dynamics import _sl2_zp_haar

try:
    from sadyn import _ckernels
except ImportError:  # extension not built
    _ckernels = None


def random_sl2(rng, n, spread=4.0):
    t = rng.uniform(-spread, spread, n)
    th = rng.uniform(0, 2 * np.pi, n)
    x = rng.uniform(-5, 5, n)
    a = np.zeros((n, 2, 2))
    a[:, 0, 0], a[:, 1, 1] = np.exp(t), np.exp(-t)
    k = np.stack([np.cos(th), -np.sin(th), np.sin(th), np.cos(th)], 1).reshape(n, 2, 2)
    u = np.broadcast_to(np.eye(2), (n, 2, 2)).copy()
    u[:, 0, 1] = x
    return u @ a @ k


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n", type=int, default=200_000)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)
    rng = np.random.default_rng(0)
    mats = random_sl2(rng, args.n)
    ks = _sl2_zp_haar(rng, args.n, 2, 12)
    cases = [("reduce_batch", lambda m: m.reduce_batch(mats)),
             ("hecke_batch p=2 i=5", lambda m: m.hecke_batch(ks, 2, 5))]
    print(f"{'kernel':<22}{'python (s)':>12}{'cython (s)':>12}{'speedup':>10}  agree")
    for name, call in cases:
        tp, outp = best_of(lambda: call(_pykernels), args.repeat)
        if _ckernels is None:
            print(f"{name:<22}{tp:>12.4f}{'n/a':>12}{'n/a':>10}  n/a")
            continue
        tc, outc = best_of(lambda: call(_ckernels), args.repeat)
        agree = all(np.array_equal(a, b) for a, b in zip(outp, outc))
        print(f"{name:<22}{tp:>12.4f}{tc:>12.4f}{tp / tc:>10.1f}  {agree}")


if __name__ == "__main__":
    main()
