"""Time the compiled kernels against the numpy/pure-Python fallback.

    python3 benchmarks/bench_kernels.py [--repeat 3]
"""

import argparse
import time

import numpy as np

from timeblind import _pykernels
from timeblind.decomposition import DEFAULT_INTERVAL, grid_tables
from timeblind.model import equal_spikes, sample_batch

try:
    from timeblind import _kernels
except ImportError:
    _kernels = None


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def bench_posterior(repeat):
    m = equal_spikes(1024, 64, 10.0, 0.01)
    tab = grid_tables(m, DEFAULT_INTERVAL, 2000)
    q = np.ascontiguousarray(m.class_energies(sample_batch(m, 4096, DEFAULT_INTERVAL, 0).z))
    args = (q, tab.base, tab.inv_2v, tab.alpha, tab.cond_var)
    yield "posterior_moments n=4096 G=2000", {
        "python": best_of(lambda: _pykernels.posterior_moments(*args), repeat),
        "cython": best_of(lambda: _kernels.posterior_moments(*args), repeat) if _kernels else None,
    }


def bench_hungarian(repeat):
    rng = np.random.default_rng(0)
    for B in (64, 256):
        cost = rng.uniform(0, 1, (B, B))
        yield f"hungarian B={B}", {
            "python": best_of(lambda: _pykernels.hungarian(cost), repeat),
            "cython": best_of(lambda: _kernels.hungarian(cost), repeat) if _kernels else None,
        }


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--repeat", type=int, default=3)
    args = p.parse_args()
    print(f"{'kernel':<34}{'python [s]':>12}{'cython [s]':>12}{'speedup':>10}")
    for bench in (bench_posterior, bench_hungarian):
        for name, t in bench(args.repeat):
            if t["cython"] is None:
                print(f"{name:<34}{t['python']:>12.4f}{'n/a':>12}{'':>10}")
            else:
                print(f"{name:<34}{t['python']:>12.4f}{t['cython']:>12.4f}{t['python'] / t['cython']:>9.1f}x")


if __name__ == "__main__":
    main()
