"""Fourier–Galerkin and collocation building blocks on the circle of length 2π."""

from __future__ import annotations

import math
from typing import Callable, Optional

import numpy as np

__all__ = [
    "grid_size",
    "coefficients",
    "coefficients_from_samples",
    "toeplitz",
    "derivative_coefficients",
    "collocation_derivative",
    "hermite_ladder",
]


def grid_size(nmax: int, minimum: int = 512) -> int:
    """Even sampling size resolving frequencies up to ``nmax`` with ample margin."""
    n = max(minimum, 8 * (nmax + 1))
    return int(2 ** math.ceil(math.log2(n)))


def coefficients_from_samples(values: np.ndarray, nmax: int) -> np.ndarray:
    """Coefficients ``f_n`` for ``-nmax..nmax`` from uniform samples on ``[0, 2π)``."""
    values = np.asarray(values)
    ng = values.shape[0]
    if ng < 2 * nmax + 1:
        raise ValueError("too few samples for the requested band")
    co = np.fft.fft(values, axis=0) / ng
    idx = np.arange(-nmax, nmax + 1) % ng
    return co[idx]


def coefficients(func: Callable, nmax: int, analytic: Optional[np.ndarray] = None, ng: Optional[int] = None):
    """Fourier coefficients of a periodic function (analytic values take precedence)."""
    if analytic is not None:
        return np.asarray(analytic, dtype=complex)
    ng = ng or grid_size(nmax)
    s = np.linspace(0.0, 2.0 * math.pi, ng, endpoint=False)
    return coefficients_from_samples(np.asarray(func(s)), nmax)


def derivative_coefficients(co: np.ndarray) -> np.ndarray:
    """Coefficients of the derivative, for a centred coefficient vector."""
    nmax = (co.shape[0] - 1) // 2
    n = np.arange(-nmax, nmax + 1)
    return 1j * n * co


def toeplitz(co: np.ndarray, N: int) -> np.ndarray:
    """Galerkin matrix ``T[i, j] = f_(i - j)`` for modes ``-N..N``.

    ``co`` must hold the centred coefficients for ``|n| <= 2N``.
    """
    co = np.asarray(co, dtype=complex)
    if co.shape[0] != 4 * N + 1:
        raise ValueError("coefficient vector must cover |n| <= 2N")
    i = np.arange(2 * N + 1)
    return co[(i[:, None] - i[None, :]) + 2 * N]


def collocation_derivative(K: int, length: float) -> np.ndarray:
    """Real antisymmetric Fourier differentiation matrix on ``K`` (odd) periodic nodes."""
    if K % 2 == 0:
        raise ValueError("use an odd number of nodes")
    h = 2.0 * math.pi / K
    j = np.arange(K)
    diff = j[:, None] - j[None, :]
    with np.errstate(divide="ignore"):
        D = 0.5 * (-1.0) ** diff / np.sin(diff * h / 2.0)
    D[diff == 0] = 0.0
    return D * (2.0 * math.pi / length)


def hermite_ladder(K: int) -> np.ndarray:
    """Lowering operator ``a`` on the first ``K`` Hermite functions (``a h_n = sqrt(n) h_(n-1)``)."""
    a = np.zeros((K, K))
    for n in range(1, K):
        a[n - 1, n] = math.sqrt(n)
    return a
