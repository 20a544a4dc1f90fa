"""Banded linear solves used by the time stepper.

Two interchangeable back ends:

* numba ``@njit`` Thomas sweeps (default when numba imports), and
* a numpy/LAPACK path through :func:`scipy.linalg.solve_banded`.

Set ``QNLS_NUMBA=0`` in the environment to force the fallback.  The choice is
made once at import time; :data:`BACKEND` reports it.
"""

from __future__ import annotations

import os

import numpy as np
from scipy.linalg import solve_banded

_WANT_NUMBA = os.environ.get("QNLS_NUMBA", "1").strip().lower() not in ("0", "false", "no", "off")

try:
    if not _WANT_NUMBA:
        raise ImportError
    from numba import njit

    HAVE_NUMBA = True
except ImportError:
    HAVE_NUMBA = False

BACKEND = "numba" if HAVE_NUMBA else "numpy"


# ---------------------------------------------------------------------------
# fallback implementations


def _tridiag_numpy(lower, diag, upper, rhs):
    n = diag.shape[0]
    ab = np.zeros((3, n), dtype=np.result_type(lower, diag, upper, rhs))
    ab[0, 1:] = upper[:-1]
    ab[1] = diag
    ab[2, :-1] = lower[1:]
    return solve_banded((1, 1), ab, rhs, check_finite=False)


def _block_tridiag_numpy(lower, diag, upper, rhs):
    # interleave (a_j, b_j) -> unknown 2j, 2j+1; bandwidth 3 on either side
    n = diag.shape[0]
    size = 2 * n
    ab = np.zeros((7, size))
    rows = np.arange(n)
    for p in range(2):
        for q in range(2):
            i = 2 * rows + p
            # diagonal blocks
            j = 2 * rows + q
            ab[3 + i - j, j] = diag[:, p, q]
            # coupling to j+1
            i_u = 2 * rows[:-1] + p
            j_u = 2 * (rows[:-1] + 1) + q
            ab[3 + i_u - j_u, j_u] = upper[:-1, p, q]
            # coupling to j-1
            i_l = 2 * rows[1:] + p
            j_l = 2 * (rows[1:] - 1) + q
            ab[3 + i_l - j_l, j_l] = lower[1:, p, q]
    x = solve_banded((3, 3), ab, rhs.reshape(size), check_finite=False)
    return x.reshape(n, 2)


# ---------------------------------------------------------------------------
# numba implementations

if HAVE_NUMBA:

    @njit(cache=True)
    def _tridiag_numba(lower, diag, upper, rhs):
        n = diag.shape[0]
        cp = np.empty(n, dtype=diag.dtype)
        dp = np.empty(n, dtype=rhs.dtype)
        x = np.empty(n, dtype=rhs.dtype)
        beta = diag[0]
        cp[0] = upper[0] / beta
        dp[0] = rhs[0] / beta
        for i in range(1, n):
            beta = diag[i] - lower[i] * cp[i - 1]
            cp[i] = upper[i] / beta
            dp[i] = (rhs[i] - lower[i] * dp[i - 1]) / beta
        x[n - 1] = dp[n - 1]
        for i in range(n - 2, -1, -1):
            x[i] = dp[i] - cp[i] * x[i + 1]
        return x

    @njit(cache=True)
    def _block_tridiag_numba(lower, diag, upper, rhs):
        n = diag.shape[0]
        cp = np.empty((n, 2, 2))
        dp = np.empty((n, 2))
        x = np.empty((n, 2))
        for i in range(n):
            # m = diag_i - lower_i @ cp_{i-1};  g = rhs_i - lower_i @ dp_{i-1}
            m00 = diag[i, 0, 0]
            m01 = diag[i, 0, 1]
            m10 = diag[i, 1, 0]
            m11 = diag[i, 1, 1]
            g0 = rhs[i, 0]
            g1 = rhs[i, 1]
            if i > 0:
                l00 = lower[i, 0, 0]
                l01 = lower[i, 0, 1]
                l10 = lower[i, 1, 0]
                l11 = lower[i, 1, 1]
                m00 -= l00 * cp[i - 1, 0, 0] + l01 * cp[i - 1, 1, 0]
                m01 -= l00 * cp[i - 1, 0, 1] + l01 * cp[i - 1, 1, 1]
                m10 -= l10 * cp[i - 1, 0, 0] + l11 * cp[i - 1, 1, 0]
                m11 -= l10 * cp[i - 1, 0, 1] + l11 * cp[i - 1, 1, 1]
                g0 -= l00 * dp[i - 1, 0] + l01 * dp[i - 1, 1]
                g1 -= l10 * dp[i - 1, 0] + l11 * dp[i - 1, 1]
            det = m00 * m11 - m01 * m10
            i00 = m11 / det
            i01 = -m01 / det
            i10 = -m10 / det
            i11 = m00 / det
            u00 = upper[i, 0, 0]
            u01 = upper[i, 0, 1]
            u10 = upper[i, 1, 0]
            u11 = upper[i, 1, 1]
            cp[i, 0, 0] = i00 * u00 + i01 * u10
            cp[i, 0, 1] = i00 * u01 + i01 * u11
            cp[i, 1, 0] = i10 * u00 + i11 * u10
            cp[i, 1, 1] = i10 * u01 + i11 * u11
            dp[i, 0] = i00 * g0 + i01 * g1
            dp[i, 1] = i10 * g0 + i11 * g1
        x[n - 1, 0] = dp[n - 1, 0]
        x[n - 1, 1] = dp[n - 1, 1]
        for i in range(n - 2, -1, -1):
            x[i, 0] = dp[i, 0] - cp[i, 0, 0] * x[i + 1, 0] - cp[i, 0, 1] * x[i + 1, 1]
            x[i, 1] = dp[i, 1] - cp[i, 1, 0] * x[i + 1, 0] - cp[i, 1, 1] * x[i + 1, 1]
        return x


def solve_tridiagonal(lower, diag, upper, rhs, backend: str | None = None):
    """Solve lower[i] x[i-1] + diag[i] x[i] + upper[i] x[i+1] = rhs[i].

    ``lower[0]`` and ``upper[-1]`` are ignored.  No pivoting: intended for the
    Crank-Nicolson matrices I + i*tau*H whose Hermitian part is positive.
    """
    backend = backend or BACKEND
    dtype = np.result_type(lower, diag, upper, rhs)
    args = [np.ascontiguousarray(a, dtype=dtype) for a in (lower, diag, upper, rhs)]
    if backend == "numba":
        if not HAVE_NUMBA:
            raise RuntimeError("numba backend requested but numba is unavailable")
        return _tridiag_numba(*args)
    return _tridiag_numpy(*args)


def solve_block_tridiagonal(lower, diag, upper, rhs, backend: str | None = None):
    """Solve a block tridiagonal system with real 2x2 blocks.

    Shapes: ``lower``, ``diag``, ``upper`` are (n, 2, 2); ``rhs`` is (n, 2).
    Row i reads lower[i] x[i-1] + diag[i] x[i] + upper[i] x[i+1] = rhs[i].
    """
    backend = backend or BACKEND
    args = [np.ascontiguousarray(a, dtype=float) for a in (lower, diag, upper, rhs)]
    if backend == "numba":
        if not HAVE_NUMBA:
            raise RuntimeError("numba backend requested but numba is unavailable")
        return _block_tridiag_numba(*args)
    return _block_tridiag_numpy(*args)
