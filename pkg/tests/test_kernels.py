import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qnls import kernels
from qnls.kernels import solve_block_tridiagonal, solve_tridiagonal

BACKENDS = ["numpy"] + (["numba"] if kernels.HAVE_NUMBA else [])


def _dense_tri(lower, diag, upper):
    n = len(diag)
    A = np.diag(diag).astype(np.result_type(lower, diag, upper))
    A[np.arange(1, n), np.arange(n - 1)] = lower[1:]
    A[np.arange(n - 1), np.arange(1, n)] = upper[:-1]
    return A


@pytest.mark.parametrize("backend", BACKENDS)
@given(n=st.integers(2, 40), seed=st.integers(0, 2**31))
@settings(max_examples=30, deadline=None)
def test_tridiagonal_matches_dense(backend, n, seed):
    rng = np.random.default_rng(seed)
    lower = rng.normal(size=n) + 1j * rng.normal(size=n)
    upper = rng.normal(size=n) + 1j * rng.normal(size=n)
    diag = 5.0 + rng.normal(size=n) + 1j * rng.normal(size=n)  # diagonally dominant
    rhs = rng.normal(size=n) + 1j * rng.normal(size=n)
    x = solve_tridiagonal(lower, diag, upper, rhs, backend=backend)
    np.testing.assert_allclose(_dense_tri(lower, diag, upper) @ x, rhs, atol=1e-10)


@pytest.mark.parametrize("backend", BACKENDS)
@given(n=st.integers(2, 30), seed=st.integers(0, 2**31))
@settings(max_examples=30, deadline=None)
def test_block_tridiagonal_matches_dense(backend, n, seed):
    rng = np.random.default_rng(seed)
    lower = rng.normal(size=(n, 2, 2))
    upper = rng.normal(size=(n, 2, 2))
    diag = rng.normal(size=(n, 2, 2)) + 8.0 * np.eye(2)
    rhs = rng.normal(size=(n, 2))
    x = solve_block_tridiagonal(lower, diag, upper, rhs, backend=backend)
    A = np.zeros((2 * n, 2 * n))
    for i in range(n):
        A[2 * i:2 * i + 2, 2 * i:2 * i + 2] = diag[i]
        if i > 0:
            A[2 * i:2 * i + 2, 2 * i - 2:2 * i] = lower[i]
        if i < n - 1:
            A[2 * i:2 * i + 2, 2 * i + 2:2 * i + 4] = upper[i]
    np.testing.assert_allclose(A @ x.reshape(-1), rhs.reshape(-1), atol=1e-10)


@pytest.mark.skipif(not kernels.HAVE_NUMBA, reason="numba unavailable")
def test_backends_agree(rng):
    n = 500
    lower, upper = rng.normal(size=n), rng.normal(size=n)
    diag = 4.0 + rng.normal(size=n)
    rhs = rng.normal(size=n) + 1j * rng.normal(size=n)
    a = solve_tridiagonal(lower, diag.astype(complex), upper, rhs, backend="numba")
    b = solve_tridiagonal(lower, diag.astype(complex), upper, rhs, backend="numpy")
    np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-12)


def test_backend_flag_reported():
    assert kernels.BACKEND in ("numba", "numpy")


def test_env_flag_selects_fallback():
    import subprocess
    import sys

    out = subprocess.run(
        [sys.executable, "-c", "from qnls import kernels; print(kernels.BACKEND)"],
        env={**__import__("os").environ, "QNLS_NUMBA": "0"}, capture_output=True, text=True, check=True,
    )
    assert out.stdout.strip() == "numpy"
