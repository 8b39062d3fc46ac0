"""Pointwise frame geometry of the collapsing families.

Frame conventions: the fiber coordinates have period 2π in each direction,
``G = W^2`` is the Gram matrix of the coordinate fields at ``epsilon = 1``,
the fiber metric at scale ``epsilon`` is ``epsilon^2 G`` and
``zeta_a = W^{-1} e_a`` (columns) is orthonormal.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Dict, List, Optional, Sequence

import numpy as np
from scipy import linalg as sla

from .models import TWO_PI, BundleModel, ModelError, central_difference

__all__ = [
    "GeometryData",
    "connection_form",
    "t_form",
    "frame_connection",
    "equivariant_frame",
    "eval_geometry",
    "fiber_christoffel",
    "scal_fiber",
    "zcheck_norm_sq",
    "nilpotency_defect",
    "heisenberg_tau",
    "random_nilpotent_tau",
    "mean_curvature",
    "fiber_volume",
    "metric_path",
    "holonomy_rotation",
    "verify_bounds",
    "BoundsReport",
]


# --------------------------------------------------------------------------
# matrix-valued building blocks
# --------------------------------------------------------------------------
def _check_spd(W: np.ndarray, what: str = "W") -> None:
    if np.abs(W - W.T).max() > 1e-10 * max(1.0, np.abs(W).max()):
        raise ModelError(f"{what} is not symmetric", [what])
    if np.linalg.eigvalsh(0.5 * (W + W.T)).min() <= 0:
        raise ModelError(f"{what} is not positive definite", [what])


def connection_form(W, dW) -> np.ndarray:
    """Skew part ``(W^-1 dW - dW W^-1) / 2`` of the log-derivative of ``W``."""
    W = np.atleast_2d(np.asarray(W, dtype=float))
    dW = np.atleast_2d(np.asarray(dW, dtype=float))
    try:
        Wi = np.linalg.inv(W)
    except np.linalg.LinAlgError as exc:
        raise ModelError("singular W", ["W"]) from exc
    if not np.all(np.isfinite(Wi)):
        raise ModelError("singular W", ["W"])
    return 0.5 * (Wi @ dW - dW @ Wi)


def t_form(W, dW) -> np.ndarray:
    """Symmetric part ``(W^-1 dW + dW W^-1) / 2``."""
    W = np.atleast_2d(np.asarray(W, dtype=float))
    dW = np.atleast_2d(np.asarray(dW, dtype=float))
    Wi = np.linalg.inv(W)
    return 0.5 * (Wi @ dW + dW @ Wi)


def frame_connection(W, dW) -> np.ndarray:
    """``omega[a, b] = g(nabla zeta_a, zeta_b)`` along the base direction.

    ``W`` is any frame matrix with ``G = W^T W`` and ``zeta = W^-1 e``.  With
    ``B = dW W^-1`` the result is ``(B - B^T) / 2``; for symmetric ``W`` this
    is the transpose of :func:`connection_form`.
    """
    W = np.atleast_2d(np.asarray(W, dtype=float))
    dW = np.atleast_2d(np.asarray(dW, dtype=float))
    B = np.linalg.solve(W.T, dW.T).T
    return 0.5 * (B - B.T)


def sqrt_spd(G: np.ndarray, dG: Optional[np.ndarray] = None):
    """Symmetric square root of ``G`` and, optionally, its derivative."""
    lam, V = np.linalg.eigh(G)
    if lam.min() <= 0:
        raise ModelError("metric is not positive definite", ["metric_path"])
    r = np.sqrt(lam)
    W = (V * r) @ V.T
    if dG is None:
        return W
    Gt = V.T @ dG @ V
    dW = V @ (Gt / np.add.outer(r, r)) @ V.T
    return W, 0.5 * (dW + dW.T)


# --------------------------------------------------------------------------
# mapping torus metric paths
# --------------------------------------------------------------------------
_SZ = np.array([[1.0, 0.0], [0.0, -1.0]])
_SX = np.array([[0.0, 1.0], [1.0, 0.0]])


@lru_cache(maxsize=64)
def _log_eigen(H: tuple):
    """Eigen-decomposition of the real logarithm of ``H`` (cached per holonomy)."""
    L = sla.logm(np.asarray(H, dtype=float))
    if np.abs(np.imag(L)).max() > 1e-10:
        raise ModelError("holonomy has no real logarithm; use metric_path geodesic_bump", ["metric_path"])
    L = np.real(L)
    ell, V = np.linalg.eig(L)
    return L, ell, V, np.linalg.inv(V)


def _holonomy_power(H: np.ndarray, t: float):
    """``P = exp(t log H)`` and ``log H``."""
    L, ell, V, Vi = _log_eigen(tuple(map(tuple, np.asarray(H, dtype=float))))
    P = np.real((V * np.exp(t * ell)) @ Vi)
    return P, L


def _bump(t):
    """Smooth step on [0,1] with all derivatives vanishing at both ends."""
    t = float(t)
    if t <= 0.0:
        return 0.0, 0.0
    if t >= 1.0:
        return 1.0, 0.0
    a, b = math.exp(-1.0 / t), math.exp(-1.0 / (1.0 - t))
    da, db = a / t ** 2, -b / (1.0 - t) ** 2
    val = a / (a + b)
    der = (da * (a + b) - a * (da + db)) / (a + b) ** 2
    return val, der


def metric_path(model: BundleModel, s: float):
    """Gram matrix ``G(s)`` of the mapping-torus fiber and ``dG/ds`` at ``epsilon = 1``.

    ``equivariant`` path: ``G = P^T R0 E(s) R0 P`` with ``P = exp(s log(H) / 2π)``,
    ``R0 = G0^{1/2}`` and ``E(s) = exp(mu (cos s sz + sin s sx))``.  It is
    analytic in ``s`` and satisfies ``G(2π) = H^T G(0) H`` with ``G(0) = R0 E(0) R0``.

    ``geodesic_bump``: SPD geodesic from ``G0`` to ``H^T G0 H`` run at the
    speed of a smooth step.
    """
    H = model.H
    G0 = np.eye(2) if model.base_metric is None else np.asarray(model.base_metric, dtype=float)
    R0 = sqrt_spd(G0)
    kind = model.metric_path.get("kind", "equivariant")
    s = float(s)
    if kind == "equivariant":
        mu = float(model.metric_path.get("mu", 0.0))
        P, L = _holonomy_power(H, s / TWO_PI)
        dP = (L / TWO_PI) @ P
        S = math.cos(s) * _SZ + math.sin(s) * _SX
        dS = -math.sin(s) * _SZ + math.cos(s) * _SX
        # S^2 = Id gives a closed form for the exponential
        E = math.cosh(mu) * np.eye(2) + math.sinh(mu) * S
        dE = math.sinh(mu) * dS
        M = R0 @ E @ R0
        dM = R0 @ dE @ R0
        G = P.T @ M @ P
        dG = dP.T @ M @ P + P.T @ dM @ P + P.T @ M @ dP
    else:
        # reduce to one period through G(s + 2π) = H^T G(s) H
        wind = math.floor(s / TWO_PI) if not 0.0 <= s <= TWO_PI else 0
        Hn = np.linalg.matrix_power(np.round(H).astype(int), abs(wind)).astype(float)
        if wind < 0:
            Hn = np.linalg.inv(Hn)
        t = (s - wind * TWO_PI) / TWO_PI
        G1 = H.T @ G0 @ H
        Ri = np.linalg.inv(R0)
        X = Ri @ G1 @ Ri
        lam, V = np.linalg.eigh(0.5 * (X + X.T))
        b, db = _bump(t)
        Xb = (V * lam ** b) @ V.T
        dXb = (V * (np.log(lam) * lam ** b)) @ V.T * (db / TWO_PI)
        G = Hn.T @ R0 @ Xb @ R0 @ Hn
        dG = Hn.T @ R0 @ dXb @ R0 @ Hn
    return 0.5 * (G + G.T), 0.5 * (dG + dG.T)


def _rotation(phi: float) -> np.ndarray:
    c, s = math.cos(phi), math.sin(phi)
    return np.array([[c, -s], [s, c]])


def equivariant_frame(model: BundleModel, s: float):
    """Frame matrix ``F`` with ``F^T F = G(s)`` and ``F(s + 2π) = F(s) H``, plus ``dF/ds``.

    The frame ``F^-1 e`` is then smooth on the mapping torus itself, so its
    connection form is a smooth periodic function of ``s``.
    """
    H = model.H
    G0 = np.eye(2) if model.base_metric is None else np.asarray(model.base_metric, dtype=float)
    R0 = sqrt_spd(G0)
    s = float(s)
    if model.metric_path.get("kind", "equivariant") == "equivariant":
        mu = float(model.metric_path.get("mu", 0.0))
        P, L = _holonomy_power(H, s / TWO_PI)
        dP = (L / TWO_PI) @ P
        S = math.cos(s) * _SZ + math.sin(s) * _SX
        dS = -math.sin(s) * _SZ + math.cos(s) * _SX
        Eh = math.cosh(mu / 2) * np.eye(2) + math.sinh(mu / 2) * S
        dEh = math.sinh(mu / 2) * dS
        return Eh @ R0 @ P, dEh @ R0 @ P + Eh @ R0 @ dP
    wind = math.floor(s / TWO_PI)
    Hn = np.linalg.matrix_power(np.round(H).astype(int), abs(wind)).astype(float)
    if wind < 0:
        Hn = np.linalg.inv(Hn)
    t = (s - wind * TWO_PI) / TWO_PI
    Ri = np.linalg.inv(R0)
    X = Ri @ H.T @ G0 @ H @ Ri
    lam, V = np.linalg.eigh(0.5 * (X + X.T))
    # constant rotation taking X^(1/2) R0 to R0 H; it is switched on with the step
    O = (V * np.sqrt(lam)) @ V.T @ R0 @ np.linalg.inv(R0 @ H)
    alpha = math.atan2(O[1, 0], O[0, 0])
    b, db = _bump(t)
    Xh = (V * lam ** (b / 2)) @ V.T
    dXh = (V * (0.5 * np.log(lam) * lam ** (b / 2))) @ V.T * (db / TWO_PI)
    Rb = _rotation(-b * alpha)
    dRb = -alpha * (db / TWO_PI) * _rotation(-b * alpha + math.pi / 2)
    F = Rb @ Xh @ R0 @ Hn
    dF = (dRb @ Xh + Rb @ dXh) @ R0 @ Hn
    return F, dF


def holonomy_rotation(model: BundleModel) -> float:
    """Principal angle of the fiber frame monodromy ``W(0) H W(2π)^{-1}``."""
    W0 = sqrt_spd(metric_path(model, 0.0)[0])
    W1 = sqrt_spd(metric_path(model, TWO_PI)[0])
    O = W0 @ model.H @ np.linalg.inv(W1)
    if np.linalg.det(O) < 0:
        raise ModelError("orientation-reversing holonomy has no spin lift here", ["holonomy"])
    return float(math.atan2(O[1, 0], O[0, 0]))


# --------------------------------------------------------------------------
# fiber structure constants
# --------------------------------------------------------------------------
def fiber_christoffel(tau) -> np.ndarray:
    """Levi-Civita symbols ``Gamma[c, a, b] = g(nabla_a zeta_b, zeta_c)``.

    ``tau[c, a, b]`` are the structure constants ``[zeta_a, zeta_b] = tau^c_ab zeta_c``
    of an orthonormal invariant frame.
    """
    t = np.asarray(tau, dtype=float)
    return 0.5 * (t - np.einsum("abc->cab", t) + np.einsum("bca->cab", t))


def scal_fiber(tau) -> float:
    t = np.asarray(tau, dtype=float)
    return -0.25 * float(np.sum(t * t))


def zcheck_norm_sq(tau) -> float:
    """Squared norm of the difference tensor between Levi-Civita and affine connections."""
    g = fiber_christoffel(tau)
    return float(np.sum(g * g))


def nilpotency_defect(tau) -> float:
    """``sum tau^c_ab tau^b_ac`` (the Killing form trace); zero for nilpotent algebras."""
    t = np.asarray(tau, dtype=float)
    return float(np.einsum("cab,bac->", t, t))


def heisenberg_tau(scale_exponents=(1.0, 1.0, 2.0), epsilon: float = 1.0) -> np.ndarray:
    """Structure constants of the Heisenberg algebra in the rescaled orthonormal frame.

    With ``[X, Y] = Z`` and frame ``eps^a X, eps^b Y, eps^c Z`` the unit frame
    bracket is ``eps^(c - a - b)`` times the third vector.
    """
    a, b, c = scale_exponents
    lam = float(epsilon) ** (c - a - b)
    t = np.zeros((3, 3, 3))
    t[2, 0, 1] = lam
    t[2, 1, 0] = -lam
    return t


def random_nilpotent_tau(k: int, rng: np.random.Generator) -> np.ndarray:
    """Random two-step nilpotent structure constants in a random orthonormal frame."""
    if k < 3:
        return np.zeros((k, k, k))
    r = int(rng.integers(2, k))  # generating layer, brackets land in the rest
    t = np.zeros((k, k, k))
    for a in range(r):
        for b in range(a + 1, r):
            v = rng.normal(size=k - r)
            t[r:, a, b] = v
            t[r:, b, a] = -v
    Q, _ = np.linalg.qr(rng.normal(size=(k, k)))
    # tau'^c_ab = Q_ic Q_ja Q_kb tau^i_jk for the frame zeta'_a = sum_j Q_ja zeta_j
    return np.einsum("ic,ja,kb,ijk->cab", Q, Q, Q, t)


# --------------------------------------------------------------------------
# GeometryData
# --------------------------------------------------------------------------
@dataclass
class GeometryData:
    """Frame data at one base point; per-direction lists are indexed by base direction."""

    point: tuple
    W: np.ndarray
    dW: List[np.ndarray]
    calW: List[np.ndarray]
    T_form: List[np.ndarray]
    mean_curvature: np.ndarray
    tau: np.ndarray
    fiber_christoffel: np.ndarray
    A_coeffs: np.ndarray  # A[a, alpha, beta]
    fiber_vol: float
    extra: Dict[str, float] = field(default_factory=dict)


def fiber_volume(W: np.ndarray) -> float:
    """Volume of the fiber with reference lattice of covolume (2π)^k."""
    k = W.shape[0]
    return float(np.linalg.det(W)) * TWO_PI ** k


def _fiber_W(model: BundleModel, s: float, eps: float):
    fam = model.family
    if fam in ("warped_torus", "forms_torus"):
        c = np.array([float(w.value(s)) for w in model.warpings])
        dc = np.array([float(w.derivative(s)) for w in model.warpings])
        return eps * np.diag(c), eps * np.diag(dc)
    if fam == "mapping_torus":
        G, dG = metric_path(model, s)
        W, dW = sqrt_spd(G, dG)
        return eps * W, eps * dW
    raise ModelError(f"family {fam} has no circle base", ["family"])


def eval_geometry(model: BundleModel, point, epsilon: Optional[float] = None) -> GeometryData:
    """Geometry of ``model`` at base ``point`` in the split orthonormal frame."""
    eps = model.epsilon if epsilon is None else float(epsilon)
    if not eps > 0:
        raise ModelError("epsilon must be positive", ["epsilon"])
    fam = model.family
    if fam == "heisenberg":
        tau = heisenberg_tau(model.scale_exponents, eps)
        Wm = np.diag([eps ** e for e in model.scale_exponents])
        return GeometryData(
            point=(),
            W=Wm,
            dW=[],
            calW=[],
            T_form=[],
            mean_curvature=np.zeros(0),
            tau=tau,
            fiber_christoffel=fiber_christoffel(tau),
            A_coeffs=np.zeros((3, 0, 0)),
            fiber_vol=float(np.prod(np.diag(Wm))),
        )
    if fam == "circle_bundle_T2":
        x, y = (float(v) for v in np.broadcast_to(np.asarray(point, dtype=float), (2,)))
        Wm = np.array([[model.fiber_scale(eps)]])
        a = model.curvature_at(eps)
        A = np.zeros((1, 2, 2))
        A[0, 0, 1] = -0.5 * a
        A[0, 1, 0] = 0.5 * a
        z = np.zeros((1, 1))
        return GeometryData(
            point=(x, y),
            W=Wm,
            dW=[z, z],
            calW=[z.copy(), z.copy()],
            T_form=[z.copy(), z.copy()],
            mean_curvature=np.zeros(2),
            tau=np.zeros((1, 1, 1)),
            fiber_christoffel=np.zeros((1, 1, 1)),
            A_coeffs=A,
            fiber_vol=fiber_volume(Wm),
            extra={"curvature_a": a, "chern_number": model.chern_number(eps)},
        )
    s = float(np.asarray(point, dtype=float).reshape(-1)[0])
    Wm, dW = _fiber_W(model, s, eps)
    _check_spd(Wm)
    calW = connection_form(Wm, dW)
    T = t_form(Wm, dW)
    k = Wm.shape[0]
    return GeometryData(
        point=(s,),
        W=Wm,
        dW=[dW],
        calW=[calW],
        T_form=[T],
        mean_curvature=np.array([-float(np.trace(T))]),
        tau=np.zeros((k, k, k)),
        fiber_christoffel=np.zeros((k, k, k)),
        A_coeffs=np.zeros((k, 1, 1)),
        fiber_vol=fiber_volume(Wm),
    )


def mean_curvature(model: BundleModel, point, epsilon: Optional[float] = None) -> np.ndarray:
    """Mean-curvature vector ``sum_a T(zeta_a, zeta_a)`` of the fibers.

    Computed as ``-grad ln vol`` from ``det W``; it is minus the trace of
    :attr:`GeometryData.T_form` in each base direction.
    """
    eps = model.epsilon if epsilon is None else float(epsilon)
    fam = model.family
    if fam in ("circle_bundle_T2",):
        return np.zeros(2)
    if fam == "heisenberg":
        return np.zeros(0)
    s = float(np.asarray(point, dtype=float).reshape(-1)[0])
    if fam in ("warped_torus", "forms_torus"):
        return np.array([-sum(float(w.log_derivative(s)) for w in model.warpings)])
    # d ln det W = tr(W^-1 W')
    Wm, dW = _fiber_W(model, s, eps)
    return np.array([-float(np.trace(np.linalg.solve(Wm, dW)))])


# --------------------------------------------------------------------------
# bound diagnostics
# --------------------------------------------------------------------------
@dataclass
class BoundsReport:
    model: str
    grid_n: int
    sup_calW: float
    sup_T: float
    sup_A: float
    sup_dcalW: float
    sup_dA: float
    checks: Dict[str, bool]
    skipped: Optional[str] = None

    @property
    def passed(self) -> bool:
        return all(self.checks.values())

    def as_dict(self) -> dict:
        return {
            "model": self.model,
            "grid_n": self.grid_n,
            "sup_calW": self.sup_calW,
            "sup_T": self.sup_T,
            "sup_A": self.sup_A,
            "sup_dcalW": self.sup_dcalW,
            "sup_dA": self.sup_dA,
            "checks": dict(self.checks),
            "skipped": self.skipped,
            "passed": self.passed,
        }


def _base_grid(model: BundleModel, n: int):
    s = np.linspace(0.0, TWO_PI, n, endpoint=False)
    if model.base_dim == 1:
        return [(v,) for v in s]
    return [(x, y) for x in s for y in s]


def _direction_norm(mats: Sequence[np.ndarray]) -> float:
    return math.sqrt(sum(float(np.sum(m * m)) for m in mats))


def verify_bounds(model: BundleModel, grid_n: Optional[int] = None) -> BoundsReport:
    """Grid sup-norms of the connection form, T and A, with the ``|W-form| <= 2|T|`` check.

    Norms are Frobenius over fiber indices and Euclidean over base directions.
    """
    n = int(grid_n or model.grid_n)
    if n < 64:
        raise ModelError("bound diagnostics need at least 64 grid points per circle", ["grid_n"])
    name = model.name or model.family
    if model.family == "heisenberg":
        return BoundsReport(name, n, 0.0, 0.0, 0.0, 0.0, 0.0, {}, skipped="point base")
    if model.base_dim == 2:
        pts = _base_grid(model, 8)  # the circle-bundle data is constant on the base
    else:
        pts = _base_grid(model, n)
    supW = supT = supA = supdW = 0.0
    ok_pointwise = True
    sym_ok = True
    h = 1e-5
    for p in pts:
        g = eval_geometry(model, p)
        nW = _direction_norm(g.calW)
        nT = _direction_norm(g.T_form)
        nA = math.sqrt(float(np.sum(g.A_coeffs ** 2)))
        supW, supT, supA = max(supW, nW), max(supT, nT), max(supA, nA)
        ok_pointwise &= nW <= 2.0 * nT + 1e-12
        for cw, tf in zip(g.calW, g.T_form):
            sym_ok &= np.abs(cw + cw.T).max() <= 1e-12 and np.abs(tf - tf.T).max() <= 1e-12
        if model.base_dim == 1:
            s0 = p[0]

            def cw_at(t):
                return eval_geometry(model, (t,)).calW[0]

            d = sum(c * (cw_at(s0 + j * h) - cw_at(s0 - j * h)) for j, c in ((3, 1 / 60), (2, -3 / 20), (1, 3 / 4))) / h
            supdW = max(supdW, float(np.sqrt(np.sum(d * d))))
    checks = {
        "calW_le_2T_sup": supW <= 2.0 * supT + 1e-12,
        "calW_le_2T_pointwise": bool(ok_pointwise),
        "skew_symmetric_split": bool(sym_ok),
    }
    # A coefficients are constant on the implemented base tori
    return BoundsReport(name, n, supW, supT, supA, supdW, 0.0, checks)
