"""Timing of the Sylvester solvers: compiled vs fallback triangular sweep.

    python3 benchmarks/bench_kernels.py [--sizes 4 8 16 32 64] [--repeat 5]

Columns are median wall times per solve in milliseconds:

trsyl-cy / trsyl-py
    triangular sweep alone, Cython kernel vs NumPy fallback
schur-cy / schur-py
    full ``sylvester_solve`` (Schur reduction plus sweep) with each backend
kron
    ``sylvester_solve(method="kron")``, dense LU of the Kronecker sum
scipy
    ``scipy.linalg.solve_sylvester`` for reference
"""
import argparse
import timeit

import numpy as np
from scipy.linalg import solve_sylvester

from cqlqg import _kernels
from cqlqg._kernels import _fallback
from cqlqg.linalg import sylvester_solve


def stable(rng, n):
    A = rng.normal(size=(n, n))
    return A - (np.max(np.linalg.eigvals(A).real) + 0.5) * np.eye(n)


def median_ms(fn, repeat, number):
    times = timeit.repeat(fn, repeat=repeat, number=number)
    return 1e3 * float(np.median(times)) / number


def with_backend(trsyl, fn):
    def run():
        saved = _kernels.trsyl
        _kernels.trsyl = trsyl
        try:
            fn()
        finally:
            _kernels.trsyl = saved
    return run


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", type=int, nargs="+", default=[4, 8, 16, 32, 64])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)

    rng = np.random.default_rng(args.seed)
    compiled = _kernels.trsyl if _kernels.BACKEND == "cython" else None
    print(f"backend: {_kernels.BACKEND}")
    cols = ["n", "trsyl-cy", "trsyl-py", "schur-cy", "schur-py", "kron", "scipy"]
    print("".join(f"{c:>10}" for c in cols))
    for n in args.sizes:
        T1 = np.triu(rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))) - 3 * np.eye(n)
        T2 = np.triu(rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))) - 3 * np.eye(n)
        C = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
        A1, A2, Q = stable(rng, n), stable(rng, n), rng.normal(size=(n, n))
        number = max(1, 2000 // n ** 2)
        nan = float("nan")
        row = [
            median_ms(lambda: compiled(T1, T2, C), args.repeat, number) if compiled else nan,
            median_ms(lambda: _fallback.trsyl(T1, T2, C), args.repeat, number),
            median_ms(with_backend(compiled, lambda: sylvester_solve(A1, A2, Q)), args.repeat, number)
            if compiled else nan,
            median_ms(with_backend(_fallback.trsyl, lambda: sylvester_solve(A1, A2, Q)),
                      args.repeat, number),
            # dense Kronecker LU grows like n^6; skip where it is impractical
            median_ms(lambda: sylvester_solve(A1, A2, Q, method="kron"), args.repeat, 1)
            if n <= 32 else nan,
            median_ms(lambda: solve_sylvester(A1, A2.T, -Q), args.repeat, number),
        ]
        print(f"{n:>10}" + "".join(f"{t:>10.3f}" for t in row))


if __name__ == "__main__":
    main()
