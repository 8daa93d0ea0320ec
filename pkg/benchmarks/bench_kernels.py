"""Time the numba and pure-numpy kernel paths side by side.

    python3 benchmarks/bench_kernels.py [--repeat 5]

Numba compile time is paid in a warm-up call and excluded.  Set
SWAN_LAB_DISABLE_NUMBA=1 to check what the package itself dispatches to.
"""

import argparse
import time

import numpy as np

from swan_lab import _kernels
from swan_lab.tasks import FAMILIES, random_family_graph


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def eigen_case(n, seed=0):
    a = np.random.default_rng(seed).normal(size=(n, n))

    def run(hess, hqr):
        h = a.copy()
        hess(h)
        hqr(h, 60)

    return run


def bfs_case(count, seed=0):
    rng = np.random.default_rng(seed)
    graphs = [random_family_graph(FAMILIES[i % len(FAMILIES)], rng).csr() + (0,) for i in range(count)]
    sizes = [int(len(ip) - 1) for ip, _, _ in graphs]

    def run(bfs):
        for (ip, ix, _), n in zip(graphs, sizes):
            bfs(ip, ix, n)

    return run


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--repeat", type=int, default=5)
    args = p.parse_args(argv)
    print(f"numba available: {_kernels.HAVE_NUMBA}; package dispatch uses numba: {_kernels.USE_NUMBA}")
    if not _kernels.HAVE_NUMBA:
        print("numba not installed; nothing to compare")
        return 0
    print(f"{'kernel':<28}{'numpy (ms)':>12}{'numba (ms)':>12}{'speed-up':>10}")
    for n in (16, 32, 64, 128):
        run = eigen_case(n)
        run(_kernels.hessenberg_numba, _kernels.hqr_numba)  # compile
        t_np = best_of(lambda: run(_kernels.hessenberg_numpy, _kernels.hqr_numpy), args.repeat)
        t_nb = best_of(lambda: run(_kernels.hessenberg_numba, _kernels.hqr_numba), args.repeat)
        print(f"{f'eigen n={n}':<28}{1e3 * t_np:>12.2f}{1e3 * t_nb:>12.2f}{t_np / t_nb:>9.1f}x")
    run = bfs_case(200)
    run(_kernels.bfs_all_pairs_numba)
    t_np = best_of(lambda: run(_kernels.bfs_all_pairs_numpy), args.repeat)
    t_nb = best_of(lambda: run(_kernels.bfs_all_pairs_numba), args.repeat)
    print(f"{'bfs 200 graphs n=25..35':<28}{1e3 * t_np:>12.2f}{1e3 * t_nb:>12.2f}{t_np / t_nb:>9.1f}x")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
