"""Benchmark the compiled kernels against the pure-numpy fallback.

Runs the two hot kernels — the vectorized digamma/gammaln pair and the
per-document fixed-point solver — through each available backend and
reports the best-of-N wall time.  The compiled backend is exercised only
if numba imports cleanly, so the script degrades gracefully on
installs without the `fast` extra.

Usage:
    python3 benchmarks/bench_kernels.py [--size 2000000] [--docs 2000]
        [--vocab 1000] [--topics 100] [--repeats 5]
"""

import argparse
import importlib
import time

import numpy as np


def _load_backends():
    backends = {}
    try:
        backends["numba"] = importlib.import_module("popvb._kernels_numba")
    except ImportError:
        print("numba not installed; benchmarking the numpy fallback only")
    backends["numpy"] = importlib.import_module("popvb._kernels_numpy")
    return backends


def _best_of(repeats, fn, *args):
    best = np.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def bench_special(backends, size, repeats):
    x = np.random.default_rng(0).uniform(0.01, 50.0, size)
    print("\nvectorized special functions (%.1e points):" % size)
    for name, mod in backends.items():
        mod.digamma(x[:16])  # trigger JIT compilation outside the timing
        mod.gammaln(x[:16])
        t_dig = _best_of(repeats, mod.digamma, x)
        t_gam = _best_of(repeats, mod.gammaln, x)
        print("  %-6s digamma %8.2f ms    gammaln %8.2f ms"
              % (name, t_dig * 1e3, t_gam * 1e3))


def bench_fixed_point(backends, n_docs, vocab, topics, repeats):
    rng = np.random.default_rng(1)
    docs = []
    for _ in range(n_docs):
        n_distinct = int(rng.integers(10, 60))
        counts = rng.integers(1, 5, n_distinct).astype(np.float64)
        elog = np.ascontiguousarray(
            np.log(rng.dirichlet(np.full(vocab, 0.1), topics).T
                   [:n_distinct] + 1e-12))
        docs.append((counts, elog, float(counts.sum())))
    print("\nper-document fixed point (%d docs, K=%d, V=%d):"
          % (n_docs, topics, vocab))

    def run_all(mod):
        for counts, elog, total in docs:
            mod.lda_doc_fixed_point(counts, elog, 0.1, total, 1e-4, 100)

    for name, mod in backends.items():
        run_all(mod)  # warm-up / JIT compilation
        t = _best_of(repeats, run_all, mod)
        print("  %-6s %8.2f ms  (%.1f us/doc)"
              % (name, t * 1e3, t * 1e6 / n_docs))


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--size", type=int, default=2_000_000)
    parser.add_argument("--docs", type=int, default=2000)
    parser.add_argument("--vocab", type=int, default=1000)
    parser.add_argument("--topics", type=int, default=100)
    parser.add_argument("--repeats", type=int, default=5)
    args = parser.parse_args()
    backends = _load_backends()
    bench_special(backends, args.size, args.repeats)
    bench_fixed_point(backends, args.docs, args.vocab, args.topics,
                      args.repeats)


if __name__ == "__main__":
    main()
