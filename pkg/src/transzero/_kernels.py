"""Numeric inner loops for the synthetic lab.

Each kernel exists twice: a numba-jitted version and a pure-numpy fallback
with identical semantics (bit-identical outputs -- the jitted loops use the
same comparison predicates and the same sequential accumulation order).  The
active path is chosen once at import time: set ``TRANSZERO_NO_NUMBA=1`` to
force the fallback, which is also used automatically when numba is missing.

``benchmarks/bench_kernels.py`` times both paths against each other.
"""

from __future__ import annotations

import os

import numpy as np

_FLAG = os.environ.get("TRANSZERO_NO_NUMBA", "").strip()
_DISABLED = _FLAG not in ("", "0")

if not _DISABLED:
    try:
        from numba import njit

        HAS_NUMBA = True
    except ImportError:  # pragma: no cover - depends on environment
        HAS_NUMBA = False
else:
    HAS_NUMBA = False

USING_NUMBA = HAS_NUMBA


# ------------------------------------------------------------------ fallbacks


def sample_rows_np(cdf: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Draw one index per row of an (unnormalized) cumulative table.

    ``cdf[i]`` must be non-decreasing with a strictly positive final entry;
    ``u[i]`` is a uniform draw in [0, 1).  Returns, per row, the count of
    entries <= u * total, clipped into the row -- i.e. inverse-CDF sampling.
    """
    t = u * cdf[:, -1]
    idx = (cdf <= t[:, None]).sum(axis=1)
    return np.minimum(idx, cdf.shape[1] - 1).astype(np.int64)


def seq_logprob_np(logp: np.ndarray, src: np.ndarray, out: np.ndarray) -> float:
    # Sequential accumulation keeps the result identical to the jitted loop.
    total = 0.0
    picked = logp[src, out]
    for i in range(picked.shape[0]):
        total += picked[i]
    return total


def match_count_np(a: np.ndarray, b: np.ndarray) -> int:
    m = min(a.shape[0], b.shape[0])
    if m == 0:
        return 0
    return int((a[:m] == b[:m]).sum())


# ------------------------------------------------------------------ jitted


if HAS_NUMBA:

    @njit(cache=True)
    def _sample_rows_nb(cdf, u):  # pragma: no cover - exercised via dispatch
        n, v = cdf.shape
        out = np.empty(n, np.int64)
        for i in range(n):
            t = u[i] * cdf[i, v - 1]
            j = 0
            while j < v - 1 and cdf[i, j] <= t:
                j += 1
            out[i] = j
        return out

    @njit(cache=True)
    def _seq_logprob_nb(logp, src, out):  # pragma: no cover
        total = 0.0
        for i in range(src.shape[0]):
            total += logp[src[i], out[i]]
        return total

    @njit(cache=True)
    def _match_count_nb(a, b):  # pragma: no cover
        m = min(a.shape[0], b.shape[0])
        c = 0
        for i in range(m):
            if a[i] == b[i]:
                c += 1
        return c

    sample_rows = _sample_rows_nb
    seq_logprob = _seq_logprob_nb

    def match_count(a: np.ndarray, b: np.ndarray) -> int:
        return int(_match_count_nb(a, b))

else:
    sample_rows = sample_rows_np
    seq_logprob = seq_logprob_np
    match_count = match_count_np
