"""Compare the compiled and numpy implementations of the hot kernels.

    python3 benchmarks/bench_core.py [--sizes 100 400] [--repeat 5]

Prints a table of median wall times and the speedup of each backend over the
numpy fallback, then checks that both backends agree. The fallback leans on
BLAS, so at small N the compiled loops mostly break even.
"""
import argparse
import statistics
import time

import numpy as np

from dkpca import _core


def _time(fn, repeat):
    fn()  # warm-up
    out = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        out.append(time.perf_counter() - t0)
    return statistics.median(out)


def cases(N, s=8, d=20, seed=0):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((N, d))
    H = np.linalg.qr(rng.standard_normal((N, s)))[0]
    Hn = np.linalg.qr(rng.standard_normal((N, s // 2)))[0]
    W = rng.standard_normal((N, N))
    W = W + W.T
    sigma2 = 0.05
    return {
        "sqdist": lambda m: m.sqdist(X, X),
        "rbf_gram": lambda m: m.rbf_gram(X, X, float(d)),
        "rbf_coupling": lambda m: m.rbf_coupling(H, Hn, sigma2),
        "pair_diff_contract": lambda m: m.pair_diff_contract(W, H),
    }


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--sizes", type=int, nargs="+", default=[100, 400, 1000])
    p.add_argument("--repeat", type=int, default=5)
    args = p.parse_args(argv)

    backends = _core.available_backends()
    if "cython" not in backends:
        print("compiled backend not built; timing the numpy fallback only")
    print(f"{'op':<20}{'N':>6}" + "".join(f"{b:>12}" for b in backends) + f"{'speedup':>10}")
    for N in args.sizes:
        for name, fn in cases(N).items():
            times = {b: _time(lambda: fn(m), args.repeat) for b, m in backends.items()}
            ref = times["python"]
            other = times.get("cython", ref)
            row = f"{name:<20}{N:>6}" + "".join(f"{t * 1e3:>10.2f}ms" for t in times.values())
            print(row + f"{ref / other:>9.2f}x")
            results = [fn(m) for m in backends.values()]
            for r in results[1:]:
                np.testing.assert_allclose(r, results[0], rtol=1e-10, atol=1e-12)


if __name__ == "__main__":
    main()
