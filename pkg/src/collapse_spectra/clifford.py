"""Complex Clifford algebra representations and the tensor splitting.

Gamma matrices are skew-Hermitian with ``g_i g_j + g_j g_i = -2 delta_ij``.
They are built from Hermitian Euclidean gammas ``G_i`` (``G_i^2 = +1``)
produced by the usual Pauli doubling, via ``g_i = -i G_i``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List

import numpy as np

__all__ = [
    "CliffordError",
    "CliffordRep",
    "SplitRep",
    "make_clifford_rep",
    "complex_volume",
    "split_rep",
    "relation_defects",
]

_SX = np.array([[0, 1], [1, 0]], dtype=complex)
_SY = np.array([[0, -1j], [1j, 0]], dtype=complex)
_SZ = np.array([[1, 0], [0, -1]], dtype=complex)
_I2 = np.eye(2, dtype=complex)


class CliffordError(ValueError):
    """Raised for invalid dimensions or malformed representations."""


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=complex)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class CliffordRep:
    """Irreducible module of the complex Clifford algebra in dimension ``n``."""

    n: int
    gammas: List[np.ndarray]
    volume: np.ndarray
    # +1: odd-n volume element acts as +Id; -1: the negated representative.
    chirality_convention: int = 1

    @property
    def dim(self) -> int:
        return self.gammas[0].shape[0]

    def gamma(self, v) -> np.ndarray:
        """Clifford multiplication by the vector with components ``v``."""
        v = np.asarray(v, dtype=float)
        if v.shape != (self.n,):
            raise CliffordError(f"expected vector of length {self.n}")
        out = np.zeros((self.dim, self.dim), dtype=complex)
        for c, g in zip(v, self.gammas):
            out = out + c * g
        return out


@dataclass(frozen=True)
class SplitRep:
    """Representation of Cl(n+k) on a tensor product of base and fiber modules.

    ``assembled.gammas[:n]`` are the horizontal gammas and the remaining ``k``
    are the vertical ones.  ``omega_base`` and ``omega_fiber`` are the two
    volume elements as they act on the carrier.
    """

    n: int
    k: int
    base_rep: CliffordRep
    fiber_rep: CliffordRep
    assembled: CliffordRep
    parity_case: str
    doubling_flag: bool
    omega_base: np.ndarray = field(repr=False)
    omega_fiber: np.ndarray = field(repr=False)

    @property
    def horizontal(self) -> List[np.ndarray]:
        return self.assembled.gammas[: self.n]

    @property
    def vertical(self) -> List[np.ndarray]:
        return self.assembled.gammas[self.n :]

    @property
    def carrier_dim(self) -> int:
        return self.assembled.dim


def _euclidean_gammas(n: int) -> List[np.ndarray]:
    """Hermitian generators with G_i G_j + G_j G_i = 2 delta_ij."""
    if n == 1:
        return [np.eye(1, dtype=complex)]
    if n == 2:
        return [_SX.copy(), _SY.copy()]
    if n % 2 == 1:
        prev = _euclidean_gammas(n - 1)
        chi = (-1j) ** ((n - 1) // 2) * _prod(prev)
        return prev + [chi]
    prev = _euclidean_gammas(n - 2)
    out = [np.kron(_SX, g) for g in prev]
    d = prev[0].shape[0]
    out.append(np.kron(_SY, np.eye(d)))
    out.append(np.kron(_SZ, np.eye(d)))
    return out


def _prod(mats: List[np.ndarray]) -> np.ndarray:
    out = np.eye(mats[0].shape[0], dtype=complex)
    for m in mats:
        out = out @ m
    return out


def _volume_from_gammas(n: int, gammas: List[np.ndarray]) -> np.ndarray:
    return (1j ** ((n + 1) // 2)) * _prod(gammas)


def make_clifford_rep(n: int, chirality: int = 1) -> CliffordRep:
    """Build the gammas for dimension ``n``.

    For odd ``n`` the sign of the whole set is fixed so that the complex
    volume element equals ``chirality * Id``.
    """
    if not isinstance(n, (int, np.integer)) or isinstance(n, bool) or n < 1:
        raise CliffordError(f"invalid Clifford dimension: {n!r}")
    if chirality not in (1, -1):
        raise CliffordError("chirality must be +1 or -1")
    n = int(n)
    gammas = [-1j * g for g in _euclidean_gammas(n)]
    if n % 2 == 1:
        omega = _volume_from_gammas(n, gammas)
        sign = np.real(omega[0, 0])
        if abs(abs(sign) - 1.0) > 1e-12 or np.abs(omega - sign * np.eye(len(omega))).max() > 1e-12:
            raise CliffordError("odd volume element is not scalar")
        if sign * chirality < 0:
            gammas = [-g for g in gammas]
    gammas = [_frozen(np.round(g.real) + 1j * np.round(g.imag)) for g in gammas]
    volume = _frozen(_volume_from_gammas(n, gammas))
    return CliffordRep(n=n, gammas=gammas, volume=volume, chirality_convention=chirality)


def complex_volume(rep: CliffordRep) -> np.ndarray:
    """Return ``i^[(n+1)/2] g_1 ... g_n``."""
    if not rep.gammas or len(rep.gammas) != rep.n:
        raise CliffordError("malformed representation")
    return _volume_from_gammas(rep.n, list(rep.gammas))


def split_rep(n: int, k: int) -> SplitRep:
    """Assemble Cl(n+k) gammas on the tensor carrier of base and fiber modules.

    Cases:

    * ``n`` even: horizontal ``g(x) (x) 1`` and vertical ``w_n (x) g(v)``;
      the grading ``w_n`` plays the role of conjugation on the base factor.
    * ``k`` even, ``n`` odd: horizontal ``g(x) (x) w_k``, vertical ``1 (x) g(v)``.
    * both odd: carrier ``C^2 (x) S_n (x) S_k``.  Horizontal ``sz (x) g(x) (x) 1``,
      vertical ``sx (x) 1 (x) g(v)``.  The first factor splits into the
      two half-spinor bundles, positive block first.
    """
    base = make_clifford_rep(n)
    fiber = make_clifford_rep(k)
    db, df = base.dim, fiber.dim
    Ib, If = np.eye(db), np.eye(df)
    wb, wf = base.volume, fiber.volume
    if n % 2 == 0:
        case = "n_even"
        hor = [np.kron(g, If) for g in base.gammas]
        ver = [np.kron(wb, g) for g in fiber.gammas]
        om_b = np.kron(wb, If)
        om_f = np.kron(Ib, wf)
        doubled = False
    elif k % 2 == 0:
        case = "k_even"
        hor = [np.kron(g, wf) for g in base.gammas]
        ver = [np.kron(Ib, g) for g in fiber.gammas]
        om_b = np.kron(Ib, If)
        om_f = np.kron(Ib, wf)
        doubled = False
    else:
        case = "both_odd"
        hor = [np.kron(_SZ, np.kron(g, If)) for g in base.gammas]
        ver = [np.kron(_SX, np.kron(Ib, g)) for g in fiber.gammas]
        # scalar volume elements become the grading and the swap
        om_b = np.kron(_SZ, np.kron(Ib, If))
        om_f = np.kron(_SX, np.kron(Ib, If))
        doubled = True
    gammas = [_frozen(g) for g in hor + ver]
    total = CliffordRep(
        n=n + k,
        gammas=gammas,
        volume=_frozen(_volume_from_gammas(n + k, gammas)),
    )
    return SplitRep(
        n=n,
        k=k,
        base_rep=base,
        fiber_rep=fiber,
        assembled=total,
        parity_case=case,
        doubling_flag=doubled,
        omega_base=_frozen(om_b),
        omega_fiber=_frozen(om_f),
    )


def relation_defects(rep: CliffordRep) -> dict:
    """Max-norm defects of the algebra relations, keyed by check name."""
    d = rep.dim
    eye = np.eye(d)
    anti = 0.0
    skew = 0.0
    for i, gi in enumerate(rep.gammas):
        skew = max(skew, np.abs(gi.conj().T + gi).max())
        for j, gj in enumerate(rep.gammas):
            target = -2.0 * eye if i == j else 0.0 * eye
            anti = max(anti, np.abs(gi @ gj + gj @ gi - target).max())
    w = complex_volume(rep)
    return {
        "anticommutation": float(anti),
        "skew_hermitian": float(skew),
        "volume_square": float(np.abs(w @ w - eye).max()),
        "size": 0.0 if d == 2 ** (rep.n // 2) else 1.0,
    }


def gammas_to_json(rep: CliffordRep) -> dict:
    """Gamma matrices as nested lists of ``[re, im]`` pairs."""
    def enc(m):
        return [[[float(z.real), float(z.imag)] for z in row] for row in m]

    return {
        "n": rep.n,
        "gammas": [enc(g) for g in rep.gammas],
        "volume": enc(rep.volume),
    }
