"""Time the numba and numpy Gibbs kernels on the same planted corpus.

    python benchmarks/bench_kernels.py --m 200 --n 100 --k 10 --sweeps 5

Both backends consume identical uniforms, so the script also checks that
they end in the same state.
"""
import argparse
import time

import numpy as np

from mis2 import kernels
from mis2.synthetic import planted_corpus


def _time(fn, repeat):
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def lda_case(corpus, k, sweeps, seed):
    rng = np.random.default_rng(seed)
    doc_ids, word_ids = corpus.tokens()
    N = word_ids.shape[0]
    z0 = rng.integers(0, k, size=N).astype(np.int64)
    alpha = np.full((k, corpus.V), 0.1)
    beta = np.full(k, 0.5)
    us = rng.random((sweeps, N))

    def make(fn):
        def go():
            z = z0.copy()
            ndk = np.zeros((corpus.M, k), dtype=np.int64)
            nkw = np.zeros((k, corpus.V), dtype=np.int64)
            np.add.at(ndk, (doc_ids, z), 1)
            np.add.at(nkw, (z, word_ids), 1)
            nk = nkw.sum(axis=1)
            for u in us:
                fn(doc_ids, word_ids, z, ndk, nkw, nk, alpha, alpha.sum(axis=1), beta, u)
            go.z = z
        return go

    return make(kernels.lda_sweep_numba), make(kernels.lda_sweep_numpy)


def hdp_case(corpus, sweeps, seed, kmax=200):
    rng = np.random.default_rng(seed)
    doc_ids, word_ids = corpus.tokens()
    N = word_ids.shape[0]
    us = rng.random((sweeps, N))
    sticks = rng.beta(1.0, 1.0, size=(sweeps, N))

    def make(fn):
        def go():
            z = np.full(N, -1, dtype=np.int64)
            ndk = np.zeros((corpus.M, kmax), dtype=np.int64)
            nkw = np.zeros((kmax, corpus.V), dtype=np.int64)
            nk = np.zeros(kmax, dtype=np.int64)
            active = np.zeros(kmax, dtype=np.bool_)
            eta, state, stats = np.zeros(kmax), np.ones(1), np.zeros(2, dtype=np.int64)
            for u, s in zip(us, sticks):
                fn(doc_ids, word_ids, z, ndk, nkw, nk, active, eta, state, 1.0, 0.1, u, s, stats)
            go.z = z
        return go

    return make(kernels.hdp_sweep_numba), make(kernels.hdp_sweep_numpy)


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--m", type=int, default=200, help="documents")
    p.add_argument("--n", type=int, default=100, help="tokens per document")
    p.add_argument("--v", type=int, default=50)
    p.add_argument("--k", type=int, default=10)
    p.add_argument("--sweeps", type=int, default=5)
    p.add_argument("--repeat", type=int, default=3)
    p.add_argument("--seed", type=int, default=0)
    args = p.parse_args(argv)

    corpus = planted_corpus(k=args.k, v=args.v, m=args.m, n=args.n, seed=args.seed)[0]
    tokens = args.m * args.n
    print(f"corpus: M={args.m} N_m={args.n} V={args.v} tokens={tokens}, {args.sweeps} sweeps, best of {args.repeat}")
    print(f"{'kernel':<6} {'numba s':>10} {'numpy s':>10} {'speedup':>9}  same state")
    for name, (fast, slow) in (("lda", lda_case(corpus, args.k, args.sweeps, args.seed)),
                               ("hdp", hdp_case(corpus, args.sweeps, args.seed))):
        fast()  # compile
        t_fast = _time(fast, args.repeat)
        t_slow = _time(slow, args.repeat)
        same = np.array_equal(fast.z, slow.z)
        print(f"{name:<6} {t_fast:>10.4f} {t_slow:>10.4f} {t_slow / t_fast:>8.1f}x  {same}")


if __name__ == "__main__":
    main()
