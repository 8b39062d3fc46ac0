"""Finite matrices of the total Dirac operator, the limit operator and the forms operator.

Basis conventions
-----------------
Every operator is a direct sum of :class:`Block` objects; assembly never
couples different fiber modes (warped torus, circle bundle) or different
lattice orbits (mapping torus), so the blocks are exact invariant subspaces.

Inside a Fourier block the basis index is ``spinor * (2N + 1) + j``.  Fiber
constant sections are expanded in ``exp(i j s) / sqrt(2π vol(s))``, which is
orthonormal in ``L^2`` of the total space.  In this basis the identification
of fiber-constant spinors with sections over the base (multiplication by
``vol^(-1/2)``) is the identity on coefficient vectors, so the conjugation
reduces to removing the ``volume_weight`` and ``mean_curvature`` terms once
their cancellation is verified (see :func:`q_conjugate`).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import product
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
from scipy import integrate, optimize
from scipy.linalg import block_diag

from . import fourier
from .clifford import split_rep
from .geometry import (
    eval_geometry,
    frame_connection,
    equivariant_frame,
    holonomy_rotation,
    metric_path,
    sqrt_spd,
)
from .models import TWO_PI, BundleModel, ModelError, Warping

__all__ = [
    "AssemblyError",
    "Block",
    "OperatorMatrix",
    "assemble_total_dirac",
    "assemble_limit_operator",
    "invariant_projector",
    "q_conjugate",
    "assemble_forms_dirac",
    "lattice_orbits",
    "mapping_torus_holonomy_phase",
    "landau_levels",
]

HERMITIAN_TOL = 1e-12
CANCELLATION_TOL = 1e-12


class AssemblyError(ValueError):
    """Unsupported family/parameters or a violated structural invariant."""


@dataclass
class Block:
    """One exactly decoupled block; ``matrix`` is the sum of the named ``terms``."""

    label: str
    tag: str  # "invariant", "transverse" or "base"
    terms: Dict[str, np.ndarray]
    multiplicity: int = 1
    meta: Dict[str, object] = field(default_factory=dict)
    _matrix: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def matrix(self) -> np.ndarray:
        if self._matrix is None:
            names = list(self.terms)
            out = np.array(self.terms[names[0]], dtype=complex)
            for name in names[1:]:
                out = out + self.terms[name]
            self._matrix = out
        return self._matrix

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def hermiticity_defect(self) -> float:
        M = self.matrix
        return float(np.abs(M - M.conj().T).max()) if M.size else 0.0


@dataclass
class OperatorMatrix:
    """Direct sum of blocks plus basis metadata.

    ``matrix`` is the dense direct sum of the distinct blocks; block
    multiplicities (identical copies, e.g. Landau guiding centres) are kept
    as metadata and expanded only when spectra are reported.
    """

    family: str
    kind: str
    blocks: List[Block]
    basis: Dict[str, object]
    epsilon: Optional[float]
    coupling_norm: float = 0.0
    notes: List[str] = field(default_factory=list)

    @property
    def dim(self) -> int:
        return sum(b.dim for b in self.blocks)

    @property
    def matrix(self) -> np.ndarray:
        if not self.blocks:
            return np.zeros((0, 0), dtype=complex)
        return block_diag(*[b.matrix for b in self.blocks])

    @property
    def subspace_tags(self) -> List[str]:
        out: List[str] = []
        for b in self.blocks:
            out.extend([b.tag] * b.dim)
        return out

    def hermiticity_defect(self) -> float:
        return max((b.hermiticity_defect() for b in self.blocks), default=0.0)

    def blocks_tagged(self, tag: str) -> List[Block]:
        return [b for b in self.blocks if b.tag == tag]

    def to_json(self) -> dict:
        def enc(m):
            return [[[float(z.real), float(z.imag)] for z in row] for row in m]

        return {
            "family": self.family,
            "kind": self.kind,
            "epsilon": self.epsilon,
            "basis": _jsonable(self.basis),
            "dimension": self.dim,
            "blocks": [
                {
                    "label": b.label,
                    "tag": b.tag,
                    "multiplicity": b.multiplicity,
                    "dimension": b.dim,
                    "entries": enc(b.matrix),
                }
                for b in self.blocks
            ],
        }


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    return obj


def _check_block(block: Block) -> Block:
    d = block.hermiticity_defect()
    if d > HERMITIAN_TOL:
        raise AssemblyError(f"block {block.label} is not Hermitian (defect {d:.3e})")
    return block


def _grid(nmax: int) -> np.ndarray:
    return np.linspace(0.0, TWO_PI, fourier.grid_size(nmax), endpoint=False)


def _modes(N: int, offset: float) -> np.ndarray:
    return np.arange(-N, N + 1) + offset


def _check_truncation(N: int, M: Optional[int] = None) -> None:
    if int(N) < 1 or (M is not None and int(M) < 1):
        raise AssemblyError("truncations N and M must be at least 1")


def _check_epsilon(eps) -> float:
    if eps is None or not float(eps) > 0:
        raise AssemblyError("epsilon must be positive")
    return float(eps)


# --------------------------------------------------------------------------
# circle-base families: shared pieces
# --------------------------------------------------------------------------
def _circle_frame_samples(model: BundleModel, s: np.ndarray, eps: float):
    """Per-sample ``W``, ``trace T`` and the frame connection on the base circle."""
    W, trT, omega = [], [], []
    for v in s:
        g = eval_geometry(model, (v,), eps)
        W.append(g.W)
        trT.append(float(np.trace(g.T_form[0])))
        omega.append(frame_connection(g.W, g.dW[0]))
    return np.array(W), np.array(trT), np.array(omega)


def _log_volume_rate_coeffs(Ws: np.ndarray, eps: float, nmax: int) -> np.ndarray:
    """Coefficients of ``d/ds ln vol`` by spectral differentiation of sampled ``ln vol``.

    The constant ``k ln eps`` drops out of the derivative, so it is removed
    before sampling to keep the result independent of the scale.
    """
    k = Ws.shape[1]
    lv = np.array([math.log(np.linalg.det(w / eps)) for w in Ws])
    return fourier.derivative_coefficients(fourier.coefficients_from_samples(lv, nmax))


def _base_terms(gh: np.ndarray, N: int, offset: float, lvr: np.ndarray, trT_co: np.ndarray) -> Dict[str, np.ndarray]:
    """Horizontal derivative and the two volume terms for one circle block."""
    D = np.diag(1j * _modes(N, offset))
    return {
        "horizontal": np.kron(gh, D),
        # derivative of the normalisation vol^(-1/2) in the basis functions
        "volume_weight": np.kron(gh, -0.5 * fourier.toeplitz(lvr, N)),
        # -1/2 gamma(sum_a T(zeta_a, zeta_a)) with sum_a T(zeta_a, zeta_a) = -tr(T_form)
        "mean_curvature": np.kron(gh, 0.5 * fourier.toeplitz(trT_co, N)),
    }


def _spin_connection_terms(gh, gv, omega_co: Dict[Tuple[int, int], np.ndarray], N: int) -> np.ndarray:
    """``gamma_h * 1/4 sum_ab omega_ab gamma_a gamma_b`` with ``omega`` as Toeplitz blocks."""
    k = len(gv)
    out = None
    for a in range(k):
        for b in range(k):
            if a == b:
                continue
            term = np.kron(0.25 * gh @ gv[a] @ gv[b], fourier.toeplitz(omega_co[(a, b)], N))
            out = term if out is None else out + term
    return out


# --------------------------------------------------------------------------
# warped torus
# --------------------------------------------------------------------------
def _inverse_warping_coeffs(w: Warping, nmax: int) -> np.ndarray:
    co = w.fourier(nmax, power=-1)
    if co is None:
        co = fourier.coefficients(lambda s: 1.0 / w.value(s), nmax)
    return co


def _assemble_warped(model: BundleModel, eps: float, N: int, M: int) -> OperatorMatrix:
    k = model.k
    sp = split_rep(1, k)
    gh = np.asarray(sp.horizontal[0])
    gv = [np.asarray(g) for g in sp.vertical]
    nmax = 2 * N
    s = _grid(nmax)
    Ws, trT, omega = _circle_frame_samples(model, s, eps)
    lvr = _log_volume_rate_coeffs(Ws, eps, nmax)
    trT_co = fourier.coefficients_from_samples(trT, nmax)
    omega_co = {(a, b): fourier.coefficients_from_samples(omega[:, a, b], nmax) for a in range(k) for b in range(k)}
    base = _base_terms(gh, N, model.spin_offset("base"), lvr, trT_co)
    conn = _spin_connection_terms(gh, gv, omega_co, N) if k > 1 else None
    inv_c = [fourier.toeplitz(_inverse_warping_coeffs(w, nmax), N) for w in model.warpings]
    offs = [model.spin_offset(f"fiber{a + 1}") for a in range(k)]
    blocks: List[Block] = []
    for m in product(*[range(-M, M + 1) for _ in range(k)]):
        ms = [mi + o for mi, o in zip(m, offs)]
        invariant = all(v == 0 for v in ms)
        terms = dict(base)
        if conn is not None:
            terms["connection"] = conn
        if not invariant:
            vert = None
            for a in range(k):
                if ms[a] == 0:
                    continue
                t = np.kron(gv[a], (1j * ms[a] / eps) * inv_c[a])
                vert = t if vert is None else vert + t
            terms["vertical"] = vert
        label = "m=(" + ",".join(f"{v:g}" for v in ms) + ")"
        blocks.append(_check_block(Block(label, "invariant" if invariant else "transverse", terms, 1, {"m": tuple(ms)})))
    basis = {
        "base_modes": N,
        "base_offset": model.spin_offset("base"),
        "fiber_modes": M,
        "fiber_offsets": offs,
        "spinor_rank": sp.carrier_dim,
        "layout": "spinor-major, base Fourier minor",
    }
    notes = [] if any(b.tag == "invariant" for b in blocks) else ["invariant block empty for the chosen spin structure"]
    return OperatorMatrix(model.family, "total", blocks, basis, eps, 0.0, notes)


# --------------------------------------------------------------------------
# forms operator
# --------------------------------------------------------------------------
def assemble_forms_dirac(c, N: int) -> OperatorMatrix:
    """Matrix of ``(f, a ds) -> (-(c a)'/c, f')`` on 2π-periodic functions.

    The weighted inner product with density ``c`` is made Euclidean by the
    substitution ``F = sqrt(c) f``, ``A = sqrt(c) a``, which turns the
    operator into ``(F, A) -> (-A' - rho A / 2, F' - rho F / 2)`` with
    ``rho = c'/c``.  ``c`` is a :class:`Warping` or a :class:`BundleModel`
    of family ``forms_torus``.
    """
    _check_truncation(N)
    if isinstance(c, BundleModel):
        if c.family != "forms_torus":
            raise AssemblyError("forms operator needs a forms_torus model")
        c = c.warpings[0]
    if not isinstance(c, Warping):
        raise AssemblyError("warping expected")
    if c.minimum() <= 0:
        raise AssemblyError("warping must be positive")
    nmax = 2 * N
    s = _grid(nmax)
    rho = fourier.toeplitz(fourier.coefficients_from_samples(c.log_derivative(s), nmax), N)
    D = np.diag(1j * _modes(N, 0.0))
    Z = np.zeros_like(D)
    terms = {
        "derivative": np.block([[Z, -D], [D, Z]]),
        "warping": np.block([[Z, -0.5 * rho], [-0.5 * rho, Z]]),
    }
    block = _check_block(Block("forms", "base", terms, 1, {}))
    basis = {"base_modes": N, "components": ["f", "alpha"], "layout": "component-major"}
    return OperatorMatrix("forms_torus", "forms", [block], basis, None)


# --------------------------------------------------------------------------
# mapping torus
# --------------------------------------------------------------------------
def lattice_orbits(H, M: int) -> Dict[Tuple[int, int], List[Tuple[int, int]]]:
    """Group nonzero ``kappa`` with ``|kappa|_inf <= M`` into orbits of ``H^T``.

    Keys are canonical representatives: the orbit element of least
    Euclidean norm, ties broken lexicographically.  Fourier modes on the
    mapping torus only couple along these orbits.
    """
    Ht = np.round(np.asarray(H, dtype=float)).astype(np.int64).T
    Hti = np.round(np.linalg.inv(Ht)).astype(np.int64)
    if np.any(Ht @ Hti != np.eye(2, dtype=np.int64)):
        raise AssemblyError("holonomy must be unimodular")
    bound = 1000 * max(M, 1)
    key = lambda t: (t[0] ** 2 + t[1] ** 2, t)
    rep_of: Dict[Tuple[int, int], Tuple[int, int]] = {}
    for a in range(-M, M + 1):
        for b in range(-M, M + 1):
            kap = (a, b)
            if kap == (0, 0) or kap in rep_of:
                continue
            members = [kap]
            for step in (Ht, Hti):
                v = np.array(kap, dtype=np.int64)
                for _ in range(512):
                    v = step @ v
                    t = (int(v[0]), int(v[1]))
                    if t == kap or max(abs(t[0]), abs(t[1])) > bound:
                        break
                    members.append(t)
            best = min(members, key=key)
            for t in members:
                if max(abs(t[0]), abs(t[1])) <= M:
                    rep_of[t] = best
    out: Dict[Tuple[int, int], List[Tuple[int, int]]] = {}
    for t, rep in rep_of.items():
        out.setdefault(rep, []).append(t)
    return {rep: sorted(set(v)) for rep, v in sorted(out.items(), key=lambda kv: key(kv[0]))}


def _mapping_W(model: BundleModel, s: float):
    G, dG = metric_path(model, s)
    return sqrt_spd(G, dG)


def mapping_torus_holonomy_phase(model: BundleModel) -> Tuple[float, float]:
    """``(theta, Theta)``: symmetric-frame monodromy angle and the spin holonomy phase.

    ``Theta`` integrates the connection of the equivariant frame, which is
    periodic on the mapping torus.  The invariant spectrum is
    ``Z - Theta / (4π)`` (plus the base spin offset), each value twice.
    """
    theta = holonomy_rotation(model)

    def om(s):
        return frame_connection(*equivariant_frame(model, s))[0, 1]

    val, _ = integrate.quad(om, 0.0, TWO_PI, limit=200, epsabs=1e-14, epsrel=1e-14)
    return theta, val


def _mapping_invariant_block(model: BundleModel, eps: float, N: int, gh, gv) -> Block:
    nmax = 2 * N
    s = _grid(nmax)
    om12 = np.zeros(s.size)
    trT = np.zeros(s.size)
    lv = np.zeros(s.size)
    for i, v in enumerate(s):
        F, dF = equivariant_frame(model, v)
        om12[i] = frame_connection(F, dF)[0, 1]
        trT[i] = float(np.trace(np.linalg.solve(F, dF)))
        lv[i] = math.log(np.linalg.det(F))  # ln vol up to the constant k ln(2π eps)
    lvr = fourier.derivative_coefficients(fourier.coefficients_from_samples(lv, nmax))
    trT_co = fourier.coefficients_from_samples(trT, nmax)
    omega_co = {
        (0, 1): fourier.coefficients_from_samples(om12, nmax),
        (1, 0): fourier.coefficients_from_samples(-om12, nmax),
    }
    terms = _base_terms(gh, N, model.spin_offset("base"), lvr, trT_co)
    terms["connection"] = _spin_connection_terms(gh, gv, omega_co, N)
    return _check_block(Block("kappa=(0,0)", "invariant", terms, 1, {"kappa": (0, 0), "frame": "equivariant"}))


def _orbit_window(model: BundleModel, kap: Tuple[int, int], eps: float, N: int):
    """Collocation nodes on a window centred where ``|W^-1 kappa|`` is smallest."""
    kv = np.array(kap, dtype=float)

    def speed(s):
        # |W^-1 kappa|^2 = kappa^T G^-1 kappa
        return float(math.sqrt(kv @ np.linalg.solve(metric_path(model, s)[0], kv)))

    scan = np.linspace(-3 * TWO_PI, 4 * TWO_PI, 281)
    vals = [speed(v) for v in scan]
    i = int(np.argmin(vals))
    res = optimize.minimize_scalar(speed, bracket=(scan[max(i - 1, 0)], scan[i], scan[min(i + 1, len(scan) - 1)]))
    center = float(res.x) if res.success else float(scan[i])
    half = 2.5 * TWO_PI
    per_period = max(2 * N + 1, 17)
    K = int(round(per_period * 2 * half / TWO_PI))
    K += 1 - K % 2
    nodes = center - half + 2 * half * np.arange(K) / K
    return nodes, 2 * half, center


def _mapping_orbit_block(model: BundleModel, kap, eps: float, N: int, gh, gv) -> Block:
    nodes, length, center = _orbit_window(model, kap, eps, N)
    K = nodes.size
    D = fourier.collocation_derivative(K, length)
    kv = np.array(kap, dtype=float)
    vel = np.zeros((K, 2))
    om12 = np.zeros(K)
    trT = np.zeros(K)
    lv = np.zeros(K)
    for i, s in enumerate(nodes):
        W, dW = _mapping_W(model, s)
        vel[i] = np.linalg.solve(W, kv) / eps
        om12[i] = frame_connection(W, dW)[0, 1]
        Wi = np.linalg.inv(W)
        trT[i] = float(np.trace(0.5 * (Wi @ dW + dW @ Wi)))
        lv[i] = float(np.trace(Wi @ dW))  # d/ds ln det W
    terms = {
        "horizontal": np.kron(gh, D),
        "volume_weight": np.kron(gh, np.diag(-0.5 * lv)),
        "mean_curvature": np.kron(gh, np.diag(0.5 * trT)),
        "connection": np.kron(0.5 * gh @ gv[0] @ gv[1], np.diag(om12)),
        "vertical": np.kron(gv[0], np.diag(1j * vel[:, 0])) + np.kron(gv[1], np.diag(1j * vel[:, 1])),
    }
    meta = {"kappa": tuple(int(v) for v in kap), "window_center": center, "nodes": K}
    return _check_block(Block(f"kappa=({kap[0]},{kap[1]})", "transverse", terms, 1, meta))


def _assemble_mapping(model: BundleModel, eps: float, N: int, M: int) -> OperatorMatrix:
    sp = split_rep(1, 2)
    gh = np.asarray(sp.horizontal[0])
    gv = [np.asarray(g) for g in sp.vertical]
    holonomy_rotation(model)  # rejects orientation-reversing monodromy
    blocks: List[Block] = []
    notes: List[str] = []
    if model.spin("fiber1") == "antiperiodic" or model.spin("fiber2") == "antiperiodic":
        if not np.array_equal(np.round(model.H).astype(int) % 2, np.eye(2, dtype=int)):
            raise AssemblyError("the holonomy does not preserve an antiperiodic fiber spin structure")
        raise AssemblyError("antiperiodic fiber spin structures are not implemented for mapping_torus")
    blocks.append(_mapping_invariant_block(model, eps, N, gh, gv))
    orbits = lattice_orbits(model.H, M)
    for rep in orbits:
        blocks.append(_mapping_orbit_block(model, rep, eps, N, gh, gv))
    basis = {
        "base_modes": N,
        "base_offset": model.spin_offset("base"),
        "fiber_modes": M,
        "orbits": {f"{r[0]},{r[1]}": [list(t) for t in mem] for r, mem in orbits.items()},
        "spinor_rank": sp.carrier_dim,
        "layout": "invariant: spinor-major Fourier; orbits: spinor-major collocation on a window",
    }
    return OperatorMatrix(model.family, "total", blocks, basis, eps, 0.0, notes)


# --------------------------------------------------------------------------
# circle bundle over the 2-torus
# --------------------------------------------------------------------------
def _a_tensor_matrix(gh, gv, A: np.ndarray) -> np.ndarray:
    """``1/2 gamma(A)`` with ``gamma(A) = sum_{alpha<beta} gamma(A(xi_alpha, xi_beta)) gamma_alpha gamma_beta``."""
    n = len(gh)
    out = np.zeros_like(gh[0])
    for al in range(n):
        for be in range(al + 1, n):
            for a in range(len(gv)):
                out = out + A[a, al, be] * gv[a] @ gh[al] @ gh[be]
    return 0.5 * out


def _integer_chern(model: BundleModel, eps: float) -> int:
    p = model.chern_number(eps)
    pi = int(round(p))
    if abs(p - pi) > 1e-9:
        raise AssemblyError(f"curvature and fiber length give non-integral Chern number {p:.6g} at epsilon={eps:g}")
    return pi


def landau_levels(model: BundleModel, eps: float, m: float, count: int) -> np.ndarray:
    """Closed-form spectrum of the fiber mode ``m`` sector of the circle bundle (``a != 0``).

    Per guiding centre: ``sign(q) m / W`` and ``±sqrt(2|q| n + m^2 / W^2)``
    for ``n >= 1``, all shifted by ``a / 4``; ``q = a m / W``.
    """
    a = model.curvature_at(eps)
    W = model.fiber_scale(eps)
    q = a * m / W
    shift = 0.25 * a
    vals = [math.copysign(1.0, q) * m / W + shift]
    for n in range(1, count + 1):
        r = math.sqrt(2.0 * abs(q) * n + (m / W) ** 2)
        vals += [r + shift, -r + shift]
    return np.sort(np.array(vals))


def _assemble_circle(model: BundleModel, eps: float, N: int, M: int, transverse: bool = True) -> OperatorMatrix:
    sp = split_rep(2, 1)
    gh = [np.asarray(g) for g in sp.horizontal]
    gv = [np.asarray(g) for g in sp.vertical]
    geo = eval_geometry(model, (0.0, 0.0), eps)
    half_A = _a_tensor_matrix(gh, gv, geo.A_coeffs)
    W = float(geo.W[0, 0])
    a = model.curvature_at(eps)
    p = _integer_chern(model, eps) if a != 0 else 0
    dx, dy, dt = model.spin_offset("base_x"), model.spin_offset("base_y"), model.spin_offset("fiber1")
    blocks: List[Block] = []
    if dt == 0:
        for j in _modes(N, dx):
            for l in _modes(N, dy):
                terms = {"horizontal": 1j * j * gh[0] + 1j * l * gh[1], "a_tensor": half_A}
                blocks.append(_check_block(Block(f"j={j:g},l={l:g},m=0", "invariant", terms, 1, {"j": j, "l": l, "m": 0})))
    if transverse:
        for m in _modes(M, dt):
            if m == 0:
                continue
            if a == 0:
                for j in _modes(N, dx):
                    for l in _modes(N, dy):
                        terms = {
                            "horizontal": 1j * j * gh[0] + 1j * l * gh[1],
                            "vertical": (1j * m / W) * gv[0],
                            "a_tensor": half_A,
                        }
                        blocks.append(_check_block(Block(f"j={j:g},l={l:g},m={m:g}", "transverse", terms, 1, {"m": m})))
                continue
            blocks.append(_landau_block(m, a, W, p, N, gh, gv, half_A))
    basis = {
        "base_modes": N,
        "base_offsets": [dx, dy],
        "fiber_modes": M,
        "fiber_offset": dt,
        "spinor_rank": sp.carrier_dim,
        "chern_number": p,
        "layout": "invariant: one 2x2 block per (j,l); transverse: Hermite levels per fiber mode",
    }
    notes = [] if dt == 0 else ["invariant block empty for the chosen spin structure"]
    return OperatorMatrix(model.family, "total", blocks, basis, eps, 0.0, notes)


def _landau_block(m: float, a: float, W: float, p: int, N: int, gh, gv, half_A) -> Block:
    """Fiber mode ``m`` sector in Hermite functions centred on a guiding centre.

    With ``q = a m / W``, ``xi_2`` acts as ``-i q u``.  One spinor component
    carries ``K`` Hermite functions and the other ``K - 1``; both ladder
    blocks then map the retained space into itself, so the compression is an
    exact invariant subspace (no spurious edge states).
    """
    q = a * m / W
    mult = abs(p * m)
    if abs(mult - round(mult)) > 1e-9:
        raise AssemblyError("fiber spin offset incompatible with the Chern number")
    K = max(2 * N + 1, 5)
    lo = fourier.hermite_ladder(K)
    up = lo.T
    aq = abs(q)
    u = (lo + up) / math.sqrt(2.0 * aq)
    du = math.sqrt(aq / 2.0) * (lo - up)
    I = np.eye(K)
    terms = {
        "horizontal": np.kron(gh[0], du) + np.kron(gh[1], -1j * q * u),
        "vertical": np.kron(gv[0], (1j * m / W) * I),
        "a_tensor": np.kron(half_A, I),
    }
    # the top function of the component without the zero mode is dropped
    drop = (2 * K - 1) if q > 0 else (K - 1)
    keep = np.array([i for i in range(2 * K) if i != drop])
    terms = {k: v[np.ix_(keep, keep)] for k, v in terms.items()}
    meta = {"m": m, "q": q, "levels": K, "guiding_centres": int(round(mult))}
    return _check_block(Block(f"m={m:g}", "transverse", terms, int(round(mult)), meta))


# --------------------------------------------------------------------------
# public entry points
# --------------------------------------------------------------------------
def _warped_coupling_norm(model: BundleModel, N: int) -> float:
    """Largest fiber-frequency Fourier coefficient of the coefficient functions.

    The multiplication operators are sampled on a base x fiber grid and
    transformed in the fiber direction; any nonzero fiber frequency would
    couple different fiber modes.
    """
    s = np.linspace(0.0, TWO_PI, 64, endpoint=False)
    nt = 16
    worst = 0.0
    for w in model.warpings:
        for f in (1.0 / w.value(s), w.log_derivative(s)):
            grid = np.tile(f[:, None], (1, nt))
            co = np.fft.fft(grid, axis=1) / nt
            worst = max(worst, float(np.abs(co[:, 1:]).max()))
    return worst


def assemble_total_dirac(model: BundleModel, epsilon: Optional[float] = None, N: int = 8, M: int = 8) -> OperatorMatrix:
    """Full Dirac operator of the total space at scale ``epsilon``.

    Terms per block: ``horizontal`` (base derivative), ``connection``
    (induced vertical spin connection), ``vertical`` (fiber frequencies over
    the fiber scale), ``volume_weight`` and ``mean_curvature`` (cancel
    exactly in exact arithmetic), ``a_tensor``.
    """
    eps = _check_epsilon(model.epsilon if epsilon is None else epsilon)
    _check_truncation(N, M)
    fam = model.family
    if fam == "warped_torus":
        op = _assemble_warped(model, eps, int(N), int(M))
        op.coupling_norm = _warped_coupling_norm(model, int(N))
        return op
    if fam == "mapping_torus":
        return _assemble_mapping(model, eps, int(N), int(M))
    if fam == "circle_bundle_T2":
        return _assemble_circle(model, eps, int(N), int(M))
    raise AssemblyError(f"total Dirac operator not available for family {fam}")


def invariant_projector(op: OperatorMatrix) -> OperatorMatrix:
    """Compression to the fiber-constant (affine parallel) blocks."""
    if op.kind != "total":
        raise AssemblyError("invariant projection expects a total Dirac operator")
    if op.coupling_norm > 1e-12:
        raise AssemblyError(f"invariant and transverse blocks couple (norm {op.coupling_norm:.3e})")
    blocks = [b for b in op.blocks if b.tag == "invariant"]
    notes = list(op.notes)
    if not blocks and "invariant block empty for the chosen spin structure" not in notes:
        notes.append("invariant block empty for the chosen spin structure")
    return OperatorMatrix(op.family, "invariant", blocks, dict(op.basis), op.epsilon, op.coupling_norm, notes)


def q_conjugate(op: OperatorMatrix, model: Optional[BundleModel] = None) -> OperatorMatrix:
    """Invariant block expressed on sections over the base.

    The basis functions already carry the factor ``vol^(-1/2)``, so
    conjugation acts on coefficient vectors as the identity; what remains
    is the cancellation of the derivative of that factor against the
    mean-curvature term.  It is checked per block and both terms are dropped.
    """
    if op.kind not in ("invariant",):
        raise AssemblyError("q_conjugate expects the invariant block")
    if model is not None and model.family != op.family:
        raise AssemblyError("model does not match operator")
    out = []
    worst = 0.0
    for b in op.blocks:
        terms = dict(b.terms)
        vw = terms.pop("volume_weight", None)
        mc = terms.pop("mean_curvature", None)
        if (vw is None) != (mc is None):
            raise AssemblyError(f"block {b.label} has only one of the volume terms")
        if vw is not None:
            res = float(np.abs(vw + mc).max())
            worst = max(worst, res)
            if res > CANCELLATION_TOL:
                raise AssemblyError(f"mean-curvature term does not cancel in {b.label} (residual {res:.3e})")
        out.append(_check_block(Block(b.label, b.tag, terms, b.multiplicity, dict(b.meta, cancellation=res if vw is not None else 0.0))))
    res_op = OperatorMatrix(op.family, "q_conjugated", out, dict(op.basis), op.epsilon, op.coupling_norm, list(op.notes))
    res_op.basis["cancellation_residual"] = worst
    return res_op


def assemble_limit_operator(model: BundleModel, N: int = 8, epsilon: Optional[float] = None) -> OperatorMatrix:
    """Limit operator on the base: twisted horizontal Dirac plus ``1/2 gamma(Z)`` and ``1/2 gamma(A)``.

    ``epsilon=None`` uses the collapsed data; a value uses the data of the
    member at that scale (they coincide unless the curvature scales with it).
    """
    _check_truncation(N)
    N = int(N)
    fam = model.family
    if fam in ("heisenberg",):
        raise AssemblyError("unsupported base: point base")
    if fam not in ("warped_torus", "mapping_torus", "circle_bundle_T2"):
        raise AssemblyError(f"no limit operator for family {fam}")
    if fam == "circle_bundle_T2":
        if model.spin("fiber1") == "antiperiodic":
            return OperatorMatrix(fam, "limit", [], {"base_modes": N}, None, 0.0, ["invariant block empty for the chosen spin structure"])
        sp = split_rep(2, 1)
        gh = [np.asarray(g) for g in sp.horizontal]
        gv = [np.asarray(g) for g in sp.vertical]
        if epsilon is None:
            a = 0.0 if model.collapse == "shrink" else model.curvature_a
        else:
            a = model.curvature_at(epsilon)
        A = np.zeros((1, 2, 2))
        A[0, 0, 1], A[0, 1, 0] = -0.5 * a, 0.5 * a
        half_A = _a_tensor_matrix(gh, gv, A)
        blocks = []
        for j in _modes(N, model.spin_offset("base_x")):
            for l in _modes(N, model.spin_offset("base_y")):
                terms = {"horizontal": 1j * j * gh[0] + 1j * l * gh[1], "a_tensor": half_A}
                blocks.append(_check_block(Block(f"j={j:g},l={l:g}", "invariant", terms, 1, {"j": j, "l": l})))
        return OperatorMatrix(fam, "limit", blocks, {"base_modes": N, "spinor_rank": 2, "parallel_rank": 1}, None)
    k = model.k
    sp = split_rep(1, k)
    gh = np.asarray(sp.horizontal[0])
    gv = [np.asarray(g) for g in sp.vertical]
    if any(model.spin(f"fiber{a + 1}") == "antiperiodic" for a in range(k)):
        return OperatorMatrix(fam, "limit", [], {"base_modes": N}, None, 0.0, ["invariant block empty for the chosen spin structure"])
    nmax = 2 * N
    s = _grid(nmax)
    omega = np.zeros((s.size, k, k))
    for i, v in enumerate(s):
        if fam == "mapping_torus":
            # the frame must close up smoothly at the seam
            omega[i] = frame_connection(*equivariant_frame(model, v))
        else:
            g = eval_geometry(model, (v,), 1.0)
            omega[i] = frame_connection(g.W, g.dW[0])
    terms = {"horizontal": np.kron(gh, np.diag(1j * _modes(N, model.spin_offset("base"))))}
    if k > 1:
        co = {(a, b): fourier.coefficients_from_samples(omega[:, a, b], nmax) for a in range(k) for b in range(k)}
        terms["connection"] = _spin_connection_terms(gh, gv, co, N)
    # torus fibers: the Levi-Civita and affine connections agree, gamma(Z) = 0,
    # and a circle base carries no 2-form
    block = _check_block(Block("limit", "invariant", terms, 1, {}))
    basis = {"base_modes": N, "spinor_rank": sp.carrier_dim, "parallel_rank": sp.carrier_dim}
    return OperatorMatrix(fam, "limit", [block], basis, None)
