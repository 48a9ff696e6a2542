"""Compare the compiled and numpy kernel backends.

    python3 benchmarks/bench_kernels.py [--repeat 5] [--json out.json]

Reports the best-of-``repeat`` wall time per call for each kernel at a few
problem sizes typical of an attack (tens to a few hundred GP rows, images
up to 64 pixels per side).
"""
import argparse
import json
import timeit

import numpy as np

from bayesattack._backend import available_backends


def cases(rng):
    for n, d in ((20, 48), (100, 48), (200, 108)):
        X = rng.uniform(-1, 1, (n, d))
        ls = rng.uniform(0.3, 2, d)
        W = rng.standard_normal((n, n))
        W = W + W.T
        x = rng.uniform(-1, 1, d)
        yield f"matern52_cov n={n} d={d}", lambda k, X=X, ls=ls: k.matern52_cov(X, X, ls, 1.3)
        yield f"matern52_cross_grad n={n} d={d}", lambda k, x=x, X=X, ls=ls: k.matern52_cross_grad(x, X, ls, 1.3)
        yield (f"matern52_lengthscale_grad n={n} d={d}",
               lambda k, X=X, ls=ls, W=W: k.matern52_lengthscale_grad(X, ls, 1.3, W))
    for side in (16, 32, 64):
        re = rng.standard_normal((side, side))
        im = rng.standard_normal((side, side))
        yield f"dft2 {side}x{side}", lambda k, re=re, im=im: k.dft2(re, im, False)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--json", default=None, help="also write the timings here")
    args = ap.parse_args(argv)

    backends = available_backends()
    names = sorted(backends)
    if "cython" not in backends:
        print("compiled backend not built; timing the numpy backend only")
    rows = []
    print(f"{'kernel':<42}" + "".join(f"{n:>12}" for n in names) + ("     speedup" if len(names) > 1 else ""))
    for label, fn in cases(np.random.default_rng(0)):
        times = {}
        for name in names:
            k = backends[name]
            fn(k)  # warm up
            number = max(1, int(0.05 / max(timeit.timeit(lambda: fn(k), number=1), 1e-7)))
            times[name] = min(timeit.repeat(lambda: fn(k), number=number, repeat=args.repeat)) / number
        line = f"{label:<42}" + "".join(f"{times[n] * 1e6:>10.1f}us" for n in names)
        if len(names) > 1:
            line += f"{times['python'] / times['cython']:>11.1f}x"
        print(line)
        rows.append({"kernel": label, **{f"{n}_seconds": t for n, t in times.items()}})
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(rows, fh, indent=1)


if __name__ == "__main__":
    main()
