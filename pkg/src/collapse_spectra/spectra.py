"""Spectra of assembled operators, truncation control and collapse sweeps."""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .eigen import DEFAULT_TOL, EigenReport, hermitian_eigenvalues
from .models import BundleModel
from .operators import (
    AssemblyError,
    Block,
    OperatorMatrix,
    assemble_limit_operator,
    assemble_total_dirac,
)

__all__ = [
    "ConvergenceError",
    "SpectrumResult",
    "thread_count",
    "spectrum",
    "first_by_abs",
    "converged_spectrum",
    "SweepRow",
    "SweepTable",
    "collapse_sweep",
    "fit_slope",
    "LABEL_MASS",
    "CONVERGENCE_TOL",
]

LABEL_MASS = 0.99
CONVERGENCE_TOL = 1e-8
MAX_TRUNCATION = 2 ** 12


class ConvergenceError(ArithmeticError):
    """Truncation doubling did not settle; ``report`` carries the history."""

    def __init__(self, message: str, report: EigenReport):
        super().__init__(message)
        self.report = report


def thread_count() -> int:
    """Worker cap from ``COLLAPSE_SPECTRA_THREADS`` (default: up to 4 cores)."""
    raw = os.environ.get("COLLAPSE_SPECTRA_THREADS")
    if raw:
        try:
            n = int(raw)
        except ValueError:
            n = 1
        return max(1, n)
    return max(1, min(4, os.cpu_count() or 1))


def _map(fn, items: Sequence, workers: Optional[int] = None) -> List:
    workers = thread_count() if workers is None else max(1, int(workers))
    if workers == 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


@dataclass
class SpectrumResult:
    """Ascending spectrum (multiplicities expanded) with a subspace label per value."""

    eigenvalues: np.ndarray
    labels: List[str]
    epsilon: Optional[float]
    truncation: Tuple[int, Optional[int]]
    converged: bool = True
    residual: float = 0.0
    block_labels: List[str] = field(default_factory=list)
    notes: List[str] = field(default_factory=list)

    def select(self, label: str) -> np.ndarray:
        mask = np.array([l == label for l in self.labels], dtype=bool)
        return self.eigenvalues[mask] if mask.size else np.zeros(0)


def _block_labels(block: Block, tags: Sequence[str], vectors: Optional[np.ndarray]) -> List[str]:
    """Label eigenvectors by dominant tag; a single-tag block labels trivially."""
    uniq = sorted(set(tags))
    if len(uniq) == 1:
        return [uniq[0]] * block.dim
    out = []
    tags_arr = np.array(tags)
    for i in range(vectors.shape[1]):
        w = np.abs(vectors[:, i]) ** 2
        w = w / w.sum()
        best = "transverse"
        for t in uniq:
            if w[tags_arr == t].sum() >= LABEL_MASS and t != "transverse":
                best = t
        out.append(best)
    return out


def spectrum(
    op: OperatorMatrix,
    tol: float = DEFAULT_TOL,
    method: str = "auto",
    workers: Optional[int] = None,
    truncation: Optional[Tuple[int, Optional[int]]] = None,
) -> SpectrumResult:
    """Solve every block independently and merge in a fixed order."""

    def solve(block: Block) -> EigenReport:
        if method == "auto":
            meth = "jacobi" if block.dim <= 8 else "ql"
        else:
            meth = method
        return hermitian_eigenvalues(block.matrix, tol=tol, method=meth)

    reports = _map(solve, op.blocks, workers)
    vals: List[float] = []
    labels: List[str] = []
    where: List[str] = []
    residual = 0.0
    for block, rep in zip(op.blocks, reports):
        lab = _block_labels(block, [block.tag] * block.dim, rep.vectors)
        residual = max(residual, rep.relative_residual)
        for _ in range(block.multiplicity):
            vals.extend(rep.eigenvalues.tolist())
            labels.extend(lab)
            where.extend([block.label] * block.dim)
    order = np.argsort(np.array(vals), kind="stable") if vals else np.zeros(0, dtype=int)
    if truncation is None:
        truncation = (int(op.basis.get("base_modes", 0)), op.basis.get("fiber_modes"))
    return SpectrumResult(
        eigenvalues=np.array(vals)[order] if vals else np.zeros(0),
        labels=[labels[i] for i in order],
        epsilon=op.epsilon,
        truncation=truncation,
        residual=residual,
        block_labels=[where[i] for i in order],
        notes=list(op.notes),
    )


def first_by_abs(values, count: int = 10) -> np.ndarray:
    """The ``count`` values of least modulus; equal moduli list the negative value first."""
    v = np.asarray(values, dtype=float)
    key = np.lexsort((v, np.round(np.abs(v), 12)))
    return v[key[:count]]


def converged_spectrum(
    assembler: Callable[[int], OperatorMatrix],
    start_N: int = 8,
    tol: float = CONVERGENCE_TOL,
    count: int = 10,
    subspace: Optional[str] = None,
    max_N: int = MAX_TRUNCATION,
    workers: Optional[int] = None,
) -> EigenReport:
    """Double ``N`` until the first ``count`` eigenvalues (by modulus) move less than ``tol``.

    ``subspace`` restricts the comparison to one label.  Raises
    :class:`ConvergenceError` past ``max_N``.
    """
    N = int(start_N)
    if N < 1:
        raise ValueError("start_N must be positive")
    history: List[Tuple[int, List[float]]] = []
    prev: Optional[np.ndarray] = None
    last: Optional[SpectrumResult] = None
    while True:
        res = spectrum(assembler(N), workers=workers)
        vals = res.eigenvalues if subspace is None else res.select(subspace)
        head = first_by_abs(vals, count)
        history.append((N, head.tolist()))
        if prev is not None and head.size == prev.size and np.max(np.abs(head - prev), initial=0.0) < tol:
            return EigenReport(
                eigenvalues=np.sort(vals),
                residual=res.residual,
                iterations=len(history),
                history=history,
                converged=True,
            )
        prev, last = head, res
        if 2 * N > max_N:
            rep = EigenReport(np.sort(vals), res.residual, len(history), history, converged=False)
            raise ConvergenceError(f"no convergence up to N={N}", rep)
        N *= 2


# --------------------------------------------------------------------------
# collapse sweeps
# --------------------------------------------------------------------------
@dataclass
class SweepRow:
    epsilon: float
    invariant: List[float]
    transverse: List[float]
    gap: Optional[float]
    distance: Optional[float]
    invariant_empty: bool = False


@dataclass
class SweepTable:
    model: str
    family: str
    N: int
    M: int
    rows: List[SweepRow]
    limit: List[float]
    slope: Optional[float]
    notes: List[str] = field(default_factory=list)

    def distances(self) -> List[Optional[float]]:
        return [r.distance for r in self.rows]

    def gaps(self) -> List[Optional[float]]:
        return [r.gap for r in self.rows]


def fit_slope(epsilons: Sequence[float], gaps: Sequence[float]) -> float:
    """Least-squares slope of ``log gap`` against ``log epsilon``."""
    x = np.log(np.asarray(epsilons, dtype=float))
    y = np.log(np.asarray(gaps, dtype=float))
    A = np.vstack([x, np.ones_like(x)]).T
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    return float(coef[0])


def collapse_sweep(
    model: BundleModel,
    epsilons: Sequence[float],
    N: int = 8,
    M: int = 4,
    count: int = 10,
    workers: Optional[int] = None,
) -> SweepTable:
    """Invariant and transverse spectra of the total operator across scales.

    ``distance`` is the largest deviation among the ``count`` smallest
    (by modulus) invariant eigenvalues from those of the limit operator
    at the same truncation; ``slope`` fits the transverse gap.
    """
    eps = [float(e) for e in epsilons]
    if any(not 0 < e <= 1 for e in eps):
        raise ValueError("epsilons must lie in (0, 1]")
    if any(b >= a for a, b in zip(eps, eps[1:])):
        raise ValueError("epsilons must be strictly descending")
    notes: List[str] = []
    try:
        lim_res = spectrum(assemble_limit_operator(model, N), workers=1)
        limit_head = first_by_abs(lim_res.eigenvalues, count)
    except AssemblyError as exc:
        notes.append(f"limit operator unavailable: {exc}")
        limit_head = np.zeros(0)

    def one(e: float) -> SweepRow:
        res = spectrum(assemble_total_dirac(model, e, N, M), workers=1)
        inv = first_by_abs(res.select("invariant"), count)
        tr = first_by_abs(res.select("transverse"), count)
        gap = float(np.min(np.abs(tr))) if tr.size else None
        dist = None
        if inv.size and limit_head.size:
            n = min(inv.size, limit_head.size)
            dist = float(np.max(np.abs(np.sort(inv[:n]) - np.sort(limit_head[:n]))))
        return SweepRow(e, inv.tolist(), tr.tolist(), gap, dist, invariant_empty=inv.size == 0)

    rows = _map(one, eps, workers)
    if any(r.invariant_empty for r in rows):
        notes.append("invariant block empty; sweep reports transverse data only")
    gaps = [r.gap for r in rows]
    slope = fit_slope(eps, gaps) if len(eps) >= 2 and all(g is not None and g > 0 for g in gaps) else None
    return SweepTable(model.name or model.family, model.family, int(N), int(M), rows, limit_head.tolist(), slope, notes)
