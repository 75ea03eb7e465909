"""Times the jitted lab kernels against their pure-numpy fallbacks.

Both paths are imported directly (the env flag only controls which one the
package dispatches to), outputs are checked for exact equality first, and
each kernel is timed at two sizes: the shape the synthetic lab actually uses
(16-token sentences over a 50-token vocabulary) and a larger stress shape.

Run:  python3 benchmarks/bench_kernels.py [--repeats N]
"""

import argparse
import time

import numpy as np

from transzero._kernels import (
    USING_NUMBA,
    match_count_np,
    sample_rows_np,
    seq_logprob_np,
)

if USING_NUMBA:
    from transzero._kernels import _match_count_nb, _sample_rows_nb, _seq_logprob_nb


def make_inputs(rows, cols, seed=0):
    rng = np.random.default_rng(seed)
    probs = rng.random((rows, cols))
    cdf = np.cumsum(probs, axis=1)
    u = rng.random(rows)
    logp = np.log(probs / probs.sum(axis=1, keepdims=True))
    src = rng.integers(0, rows, size=rows).astype(np.int64)
    out = rng.integers(0, cols, size=rows).astype(np.int64)
    a = rng.integers(0, cols, size=rows).astype(np.int64)
    b = np.where(rng.random(rows) < 0.5, a, rng.integers(0, cols, size=rows)).astype(np.int64)
    return cdf, u, logp, src, out, a, b


def best_of(fn, args, repeats, inner):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        for _ in range(inner):
            fn(*args)
        best = min(best, (time.perf_counter() - t0) / inner)
    return best * 1e6  # microseconds


def bench(rows, cols, repeats):
    cdf, u, logp, src, out, a, b = make_inputs(rows, cols)
    src = np.minimum(src, logp.shape[0] - 1)
    kernels = [
        ("sample_rows", sample_rows_np, (cdf, u), _sample_rows_nb if USING_NUMBA else None),
        ("seq_logprob", seq_logprob_np, (logp, src, out), _seq_logprob_nb if USING_NUMBA else None),
        ("match_count", match_count_np, (a, b), _match_count_nb if USING_NUMBA else None),
    ]
    inner = max(1, 50_000 // rows)
    print(f"\n-- {rows} rows x {cols} cols (best of {repeats}, {inner} calls each) --")
    print(f"{'kernel':<14}{'numpy us':>12}{'numba us':>12}{'speedup':>10}")
    for name, np_fn, args, nb_fn in kernels:
        np_t = best_of(np_fn, args, repeats, inner)
        if nb_fn is None:
            print(f"{name:<14}{np_t:>12.2f}{'-':>12}{'-':>10}")
            continue
        got_np, got_nb = np_fn(*args), nb_fn(*args)
        if not np.array_equal(np.asarray(got_np), np.asarray(got_nb)):
            raise SystemExit(f"{name}: jitted and fallback outputs differ")
        nb_fn(*args)  # ensure compilation is outside the timed region
        nb_t = best_of(nb_fn, args, repeats, inner)
        print(f"{name:<14}{np_t:>12.2f}{nb_t:>12.2f}{np_t / nb_t:>9.1f}x")


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeats", type=int, default=5, help="timing repetitions per kernel")
    args = parser.parse_args()

    print(f"numba active: {USING_NUMBA}")
    if not USING_NUMBA:
        print("(jitted path unavailable: numba missing or TRANSZERO_NO_NUMBA set; timing fallbacks only)")
    bench(rows=16, cols=50, repeats=args.repeats)
    bench(rows=4096, cols=512, repeats=args.repeats)


if __name__ == "__main__":
    main()
