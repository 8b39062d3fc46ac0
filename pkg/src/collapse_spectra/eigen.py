"""Dense Hermitian eigensolver.

Two independent paths are provided:

* complex Householder reduction to a Hermitian tridiagonal matrix, a
  diagonal phase change making it real symmetric, then implicit-shift QL
  with eigenvector accumulation;
* cyclic complex Jacobi rotations (small matrices only).

LAPACK is never called here; tests use it as an external cross-check.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np

try:  # numba is optional at runtime; the kernels also run as plain Python
    from numba import njit as _njit

    def _jit(fn):
        return _njit(cache=True, nogil=True)(fn)

except ImportError:  # pragma: no cover - exercised only without numba
    def _jit(fn):
        return fn


__all__ = [
    "EigenError",
    "EigenReport",
    "hermitian_eigenvalues",
    "householder_tridiagonal",
    "tridiagonal_ql",
    "jacobi_hermitian",
    "DEFAULT_TOL",
    "JACOBI_MAX_DIM",
]

DEFAULT_TOL = 1e-11
JACOBI_MAX_DIM = 64


class EigenError(ArithmeticError):
    """Non-Hermitian input or failure of the QL/Jacobi iteration."""


@dataclass
class EigenReport:
    eigenvalues: np.ndarray
    residual: float
    iterations: int
    history: List[Tuple[int, List[float]]] = field(default_factory=list)
    vectors: Optional[np.ndarray] = None
    method: str = "ql"
    converged: bool = True
    scale: float = 1.0  # max(1, |A|) used to normalise the residual

    @property
    def relative_residual(self) -> float:
        return self.residual / self.scale


# --------------------------------------------------------------------------
# Householder reduction
# --------------------------------------------------------------------------
def householder_tridiagonal(A: np.ndarray):
    """Reduce Hermitian ``A`` to ``Q^H A Q = T`` tridiagonal.

    Returns ``(d, e, Q)`` where ``d`` is the real diagonal and ``e[j]`` the
    complex entry ``T[j + 1, j]``.
    """
    A = np.array(A, dtype=complex)
    n = A.shape[0]
    Q = np.eye(n, dtype=complex)
    for k in range(n - 2):
        x = A[k + 1 :, k]
        alpha_abs = np.linalg.norm(x)
        if alpha_abs == 0.0:
            continue
        x0 = x[0]
        phase = x0 / abs(x0) if x0 != 0 else 1.0
        alpha = -phase * alpha_abs
        v = x.copy()
        v[0] -= alpha
        vn = np.linalg.norm(v)
        if vn == 0.0:
            continue
        v /= vn
        sub = A[k + 1 :, k + 1 :]
        p = sub @ v
        beta = np.real(np.vdot(v, p))
        # H sub H with H = I - 2 v v^H
        sub -= 2.0 * (np.outer(v, p.conj()) + np.outer(p, v.conj())) - 4.0 * beta * np.outer(v, v.conj())
        A[k + 1 :, k + 1 :] = sub
        A[k + 1 :, k] = 0.0
        A[k, k + 1 :] = 0.0
        A[k + 1, k] = alpha
        A[k, k + 1] = np.conj(alpha)
        Qs = Q[:, k + 1 :]
        Q[:, k + 1 :] = Qs - 2.0 * np.outer(Qs @ v, v.conj())
    d = np.real(np.diag(A)).copy()
    e = np.array([A[j + 1, j] for j in range(n - 1)], dtype=complex)
    return d, e, Q


@_jit
def _tql2(d, e, zt):
    """Implicit QL on a real symmetric tridiagonal matrix.

    ``e[i]`` couples ``d[i]`` and ``d[i+1]``; ``zt`` holds eigenvectors as rows.
    Returns the total number of QL sweeps, or ``-1`` on failure.
    """
    n = d.shape[0]
    eps = 2.220446049250313e-16
    total = 0
    for l in range(n):
        it = 0
        while True:
            m = l
            while m < n - 1:
                dd = abs(d[m]) + abs(d[m + 1])
                if abs(e[m]) <= eps * dd:
                    break
                m += 1
            if m == l:
                break
            it += 1
            total += 1
            if it > 80:
                return -1
            g = (d[l + 1] - d[l]) / (2.0 * e[l])
            r = math.hypot(g, 1.0)
            g = d[m] - d[l] + e[l] / (g + (r if g >= 0 else -r))
            s = 1.0
            c = 1.0
            p = 0.0
            i = m - 1
            underflow = False
            while i >= l:
                f = s * e[i]
                b = c * e[i]
                r = math.hypot(f, g)
                e[i + 1] = r
                if r == 0.0:
                    d[i + 1] -= p
                    e[m] = 0.0
                    underflow = True
                    break
                s = f / r
                c = g / r
                g = d[i + 1] - p
                r = (d[i] - g) * s + 2.0 * c * b
                p = s * r
                d[i + 1] = g + p
                g = c * r - b
                for k in range(n):
                    f = zt[i + 1, k]
                    zt[i + 1, k] = s * zt[i, k] + c * f
                    zt[i, k] = c * zt[i, k] - s * f
                i -= 1
            if underflow:
                continue
            d[l] -= p
            e[l] = g
            e[m] = 0.0
    return total


def tridiagonal_ql(d, e, vectors: bool = True):
    """Eigen-decomposition of the real symmetric tridiagonal ``(d, e)``."""
    d = np.array(d, dtype=float)
    n = d.size
    ee = np.zeros(n)
    ee[: n - 1] = np.asarray(e, dtype=float)
    zt = np.eye(n)
    sweeps = _tql2(d, ee, zt)
    if sweeps < 0:
        raise EigenError("QL iteration did not converge")
    order = np.argsort(d, kind="stable")
    return d[order], zt[order].T, int(sweeps)


@_jit
def _jacobi_kernel(Are, Aim, Vre, Vim, tol, max_sweeps):
    n = Are.shape[0]
    for sweep in range(max_sweeps):
        off = 0.0
        for p in range(n):
            for q in range(p + 1, n):
                off += Are[p, q] ** 2 + Aim[p, q] ** 2
        scale = 0.0
        for p in range(n):
            scale += Are[p, p] ** 2
        if math.sqrt(off) <= tol * max(1.0, math.sqrt(scale)):
            return sweep
        for p in range(n - 1):
            for q in range(p + 1, n):
                ar = Are[p, q]
                ai = Aim[p, q]
                mag = math.hypot(ar, ai)
                if mag < 1e-300:
                    continue
                # phase e^{-i phi} on column q makes A[p, q] real positive
                cr = ar / mag
                ci = -ai / mag
                for r in range(n):
                    xr = Are[r, q]
                    xi = Aim[r, q]
                    Are[r, q] = xr * cr - xi * ci
                    Aim[r, q] = xr * ci + xi * cr
                for r in range(n):
                    xr = Are[q, r]
                    xi = Aim[q, r]
                    Are[q, r] = xr * cr + xi * ci
                    Aim[q, r] = xi * cr - xr * ci
                for r in range(n):
                    xr = Vre[r, q]
                    xi = Vim[r, q]
                    Vre[r, q] = xr * cr - xi * ci
                    Vim[r, q] = xr * ci + xi * cr
                app = Are[p, p]
                aqq = Are[q, q]
                theta = (aqq - app) / (2.0 * mag)
                t = 1.0 / (abs(theta) + math.sqrt(theta * theta + 1.0))
                if theta < 0:
                    t = -t
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c
                for r in range(n):
                    xr = Are[r, p]
                    xi = Aim[r, p]
                    yr = Are[r, q]
                    yi = Aim[r, q]
                    Are[r, p] = c * xr - s * yr
                    Aim[r, p] = c * xi - s * yi
                    Are[r, q] = s * xr + c * yr
                    Aim[r, q] = s * xi + c * yi
                for r in range(n):
                    xr = Are[p, r]
                    xi = Aim[p, r]
                    yr = Are[q, r]
                    yi = Aim[q, r]
                    Are[p, r] = c * xr - s * yr
                    Aim[p, r] = c * xi - s * yi
                    Are[q, r] = s * xr + c * yr
                    Aim[q, r] = s * xi + c * yi
                Are[p, q] = 0.0
                Aim[p, q] = 0.0
                Are[q, p] = 0.0
                Aim[q, p] = 0.0
                Aim[p, p] = 0.0
                Aim[q, q] = 0.0
                for r in range(n):
                    xr = Vre[r, p]
                    xi = Vim[r, p]
                    yr = Vre[r, q]
                    yi = Vim[r, q]
                    Vre[r, p] = c * xr - s * yr
                    Vim[r, p] = c * xi - s * yi
                    Vre[r, q] = s * xr + c * yr
                    Vim[r, q] = s * xi + c * yi
    return -1


def jacobi_hermitian(A: np.ndarray, tol: float = 1e-15, max_sweeps: int = 60):
    """Cyclic complex Jacobi; returns ``(eigenvalues, vectors, sweeps)``."""
    A = np.asarray(A, dtype=complex)
    n = A.shape[0]
    Are = np.ascontiguousarray(A.real, dtype=float).copy()
    Aim = np.ascontiguousarray(A.imag, dtype=float).copy()
    Vre = np.eye(n)
    Vim = np.zeros((n, n))
    sweeps = _jacobi_kernel(Are, Aim, Vre, Vim, tol, max_sweeps)
    if sweeps < 0:
        raise EigenError("Jacobi iteration did not converge")
    w = np.diag(Are).copy()
    order = np.argsort(w, kind="stable")
    V = (Vre + 1j * Vim)[:, order]
    return w[order], V, int(sweeps)


# --------------------------------------------------------------------------
# public entry point
# --------------------------------------------------------------------------
def _hermitize(matrix, herm_tol: float) -> np.ndarray:
    A = np.asarray(matrix, dtype=complex)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise EigenError("matrix must be square")
    if A.size == 0:
        return A
    if not np.all(np.isfinite(A)):
        raise EigenError("matrix has non-finite entries")
    defect = np.abs(A - A.conj().T).max()
    if defect > herm_tol * max(1.0, np.abs(A).max()):
        raise EigenError(f"matrix is not Hermitian (defect {defect:.3e})")
    return 0.5 * (A + A.conj().T)


def hermitian_eigenvalues(
    matrix,
    tol: float = DEFAULT_TOL,
    method: str = "auto",
    vectors: bool = False,
    herm_tol: float = 1e-10,
) -> EigenReport:
    """Full spectrum of a Hermitian matrix, ascending.

    ``method`` is ``ql``, ``jacobi`` (dimension at most 64) or ``auto``
    (QL).  The residual ``max |A v - l v|`` is always computed and must not
    exceed ``tol * max(1, |A|_max_eig)``.
    """
    A = _hermitize(matrix, herm_tol)
    n = A.shape[0]
    if n == 0:
        return EigenReport(np.zeros(0), 0.0, 0, method=method, vectors=np.zeros((0, 0)) if vectors else None)
    if method == "auto":
        method = "ql"
    if method == "jacobi":
        if n > JACOBI_MAX_DIM:
            raise EigenError(f"Jacobi path limited to dimension {JACOBI_MAX_DIM}")
        w, V, iters = jacobi_hermitian(A)
    elif method == "ql":
        if n == 1:
            w, V, iters = np.array([A[0, 0].real]), np.eye(1, dtype=complex), 0
        else:
            d, e, Q = householder_tridiagonal(A)
            mag = np.abs(e)
            phases = np.ones(n, dtype=complex)
            for j in range(n - 1):
                phases[j + 1] = phases[j] * (e[j] / mag[j] if mag[j] > 0 else 1.0)
            w, Z, iters = tridiagonal_ql(d, mag)
            V = (Q * phases) @ Z
    else:
        raise EigenError(f"unknown method {method!r}")
    R = A @ V - V * w
    residual = float(np.sqrt(np.max(np.sum(np.abs(R) ** 2, axis=0))))
    scale = max(1.0, float(np.max(np.abs(w))))
    if residual > tol * scale:
        raise EigenError(f"residual {residual:.3e} exceeds tolerance {tol * scale:.3e}")
    return EigenReport(
        eigenvalues=w,
        residual=residual,
        iterations=iters,
        vectors=V if vectors else None,
        method=method,
        scale=scale,
    )
