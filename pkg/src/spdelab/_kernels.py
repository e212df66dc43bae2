"""Row-wise compiled kernels.

Each row of a batch is processed with a fixed loop order, so a row's result
never depends on how many other rows share the call. That property is what
makes thread-count-independent output possible.
"""

import numba
import numpy as np


@numba.njit(cache=True, nogil=True)
def thomas_batch(lower, diag, upper, rhs):
    """Solve ``B`` independent tridiagonal systems.

    ``lower[:, j]`` couples row ``j`` to ``j-1`` (``lower[:, 0]`` unused) and
    ``upper[:, j]`` couples ``j`` to ``j+1`` (``upper[:, -1]`` unused).
    """
    nb, n = rhs.shape
    out = np.empty_like(rhs)
    c = np.empty(n)
    d = np.empty(n)
    for b in range(nb):
        inv = 1.0 / diag[b, 0]
        c[0] = upper[b, 0] * inv
        d[0] = rhs[b, 0] * inv
        for j in range(1, n):
            inv = 1.0 / (diag[b, j] - lower[b, j] * c[j - 1])
            c[j] = upper[b, j] * inv
            d[j] = (rhs[b, j] - lower[b, j] * d[j - 1]) * inv
        out[b, n - 1] = d[n - 1]
        for j in range(n - 2, -1, -1):
            out[b, j] = d[j] - c[j] * out[b, j + 1]
    return out


@numba.njit(cache=True, nogil=True)
def synthesize(weights, profiles):
    """``out[b, j] = sum_i weights[b, i] * profiles[i, j]`` in a fixed order."""
    nb, nm = weights.shape
    n = profiles.shape[1]
    out = np.zeros((nb, n))
    for b in range(nb):
        for i in range(nm):
            w = weights[b, i]
            for j in range(n):
                out[b, j] += w * profiles[i, j]
    return out
