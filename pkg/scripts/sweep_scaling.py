"""Wall-clock cost of one E/M sweep as the number of local models grows."""

import argparse
import time

import numpy as np

from lgr import variational as vi


def sweep_seconds(N, M, D, repeats, rng):
    X = rng.uniform(-1, 1, size=(N, D))
    y = np.sin(3 * X.sum(axis=1))
    centers = rng.uniform(-1, 1, size=(M, D))
    log_lambdas = np.full((M, D), np.log(0.3))
    prec = vi.Precisions(10.0, np.full(M, 10.0), np.ones((M, D + 1)))
    weights = vi.prior_weights(prec.alpha)
    best = np.inf
    for _ in range(repeats):
        t = time.perf_counter()
        vi.em_sweep(X, y, centers, log_lambdas, weights, prec)
        best = min(best, time.perf_counter() - t)
    return best


def main(argv=None):
    p = argparse.ArgumentParser()
    p.add_argument("--n", type=int, default=5000)
    p.add_argument("--dim", type=int, default=2)
    p.add_argument("--models", default="25,50,100,200,400")
    p.add_argument("--repeats", type=int, default=5)
    args = p.parse_args(argv)
    rng = np.random.default_rng(0)
    previous = None
    print("M      seconds   ratio")
    for M in [int(m) for m in args.models.split(",")]:
        s = sweep_seconds(args.n, M, args.dim, args.repeats, rng)
        ratio = "" if previous is None else f"{s / previous:6.2f}"
        print(f"{M:<6d} {s:8.4f}   {ratio}")
        previous = s


if __name__ == "__main__":
    main()
