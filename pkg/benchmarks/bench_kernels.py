"""Time the numba kernels against their numpy fallbacks.

    python benchmarks/bench_kernels.py [--repeat 5] [--nodes 2000]

Each kernel is run once per path before timing so numba's JIT compilation is
excluded; both paths must produce identical results.
"""

import argparse
import random
import timeit

import numpy as np

from lcaforge import kernels as K


def random_dag_csr(n, avg_degree, seed):
    rng = random.Random(seed)
    edges = set()
    for _ in range(n * avg_degree):
        u, v = sorted(rng.sample(range(n), 2))
        edges.add((u, v))
    return K.to_csr(n, edges)


def cases(n_nodes):
    indptr, indices = random_dag_csr(n_nodes, 4, seed=7)
    rng = np.random.default_rng(7)
    seeds = rng.choice(n_nodes, size=8, replace=False)
    ranks = rng.integers(0, 3, size=8)
    levels = rng.integers(0, 3, size=n_nodes)
    return {
        "counter_uniforms (100k x 8)": lambda nb: K.counter_uniforms(42, 0, 100_000, 8, use_numba=nb),
        f"reachable ({n_nodes} nodes)": lambda nb: K.reachable(indptr, indices, seeds, use_numba=nb),
        f"propagate_max ({n_nodes} nodes)": lambda nb: K.propagate_max(indptr, indices, seeds, ranks, use_numba=nb),
        f"min_over_reachable ({n_nodes} nodes)": lambda nb: K.min_over_reachable(indptr, indices, levels, use_numba=nb),
    }


def same(a, b):
    if isinstance(a, tuple):
        return all(np.array_equal(x, y) for x, y in zip(a, b))
    return np.array_equal(a, b)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--nodes", type=int, default=2000)
    args = ap.parse_args()
    if K._nb is None:
        raise SystemExit("numba is not installed; nothing to compare")
    print(f"{'kernel':40s} {'numba ms':>10s} {'numpy ms':>10s} {'speedup':>8s}")
    for name, fn in cases(args.nodes).items():
        if not same(fn(True), fn(False)):
            raise SystemExit(f"{name}: numba and numpy results differ")
        t_nb = min(timeit.repeat(lambda: fn(True), number=1, repeat=args.repeat))
        t_np = min(timeit.repeat(lambda: fn(False), number=1, repeat=args.repeat))
        print(f"{name:40s} {t_nb * 1e3:10.3f} {t_np * 1e3:10.3f} {t_np / t_nb:7.1f}x")


if __name__ == "__main__":
    main()
