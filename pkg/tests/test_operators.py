import math

import numpy as np
import pytest
import scipy.linalg as sla

from collapse_spectra.geometry import equivariant_frame, frame_connection, metric_path
from collapse_spectra.models import TWO_PI, BundleModel, Warping, central_difference, zoo_model
from collapse_spectra.operators import (
    AssemblyError,
    assemble_forms_dirac,
    assemble_limit_operator,
    assemble_total_dirac,
    invariant_projector,
    landau_levels,
    lattice_orbits,
    mapping_torus_holonomy_phase,
    q_conjugate,
)
from collapse_spectra.spectra import spectrum


def _spec(op, tag=None):
    out = []
    for b in op.blocks:
        if tag is None or b.tag == tag:
            out += list(np.linalg.eigvalsh(b.matrix)) * b.multiplicity
    return np.sort(out)


def _warped(*warpings, **kw):
    return BundleModel(family="warped_torus", k=len(warpings), warpings=tuple(warpings), **kw)


@pytest.mark.parametrize("eps", [1.0, 0.5, 0.25])
def test_flat_torus_closed_form(eps):
    op = assemble_total_dirac(_warped(Warping()), eps, 8, 8)
    j, m = np.meshgrid(np.arange(-8, 9), np.arange(-8, 9))
    r = np.sqrt(j ** 2 + (m / eps) ** 2).ravel()
    assert np.abs(_spec(op) - np.sort(np.concatenate([r, -r]))).max() < 1e-9


@pytest.mark.parametrize(
    "c", [Warping(), Warping("exp_cos", {"A": 1.0, "phi": 0.0}), Warping("exp_cos", {"A": 0.4, "phi": 1.1})]
)
@pytest.mark.parametrize("eps", [1.0, 0.3])
def test_warped_invariant_block_is_integers(c, eps):
    m = _warped(c)
    q = q_conjugate(invariant_projector(assemble_total_dirac(m, eps, 16, 2)), m)
    ev = _spec(q)
    mid = ev[np.abs(ev) <= 10.5]
    assert np.abs(mid - np.repeat(np.arange(-10, 11), 2)).max() < 1e-8


def test_antiperiodic_base_shifts_by_half():
    m = _warped(Warping("exp_cos", {"A": 1.0, "phi": 0.0}), spin_flags={"base": "antiperiodic", "fiber1": "periodic"})
    ev = _spec(q_conjugate(invariant_projector(assemble_total_dirac(m, 0.5, 12, 2))))
    mid = ev[np.abs(ev) <= 5.0]
    assert np.abs(mid - np.repeat(np.arange(-4.5, 5.0, 1.0), 2)).max() < 1e-8


def test_antiperiodic_fiber_empties_invariant_block():
    m = _warped(Warping(), spin_flags={"base": "periodic", "fiber1": "antiperiodic"})
    op = assemble_total_dirac(m, 0.5, 4, 2)
    assert not op.blocks_tagged("invariant")
    assert "invariant block empty" in " ".join(invariant_projector(op).notes)


@pytest.mark.parametrize(
    "model",
    [
        _warped(Warping("exp_cos", {"A": 1.0, "phi": 0.0})),
        _warped(Warping("exp_cos", {"A": 0.5, "phi": 0.3}), Warping("exp_cos", {"A": 1.0, "phi": 0.0})),
        zoo_model("circle_bundle"),
    ],
    ids=["warped_k1", "warped_k2", "circle_bundle"],
)
def test_q_conjugation_equals_limit(model):
    for eps in (1.0, 0.5):
        op = assemble_total_dirac(model, eps, 10, 2)
        q = q_conjugate(invariant_projector(op), model)
        lim = assemble_limit_operator(model, 10, epsilon=eps)
        assert np.abs(q.matrix - lim.matrix).max() <= 1e-10
        assert q.basis["cancellation_residual"] < 1e-12


def test_total_operator_is_hermitian_and_block_diagonal():
    for model in (zoo_model("warped_torus"), zoo_model("mapping_torus"), zoo_model("circle_bundle")):
        op = assemble_total_dirac(model, 0.5, 6, 2)
        assert op.hermiticity_defect() < 1e-12
        assert op.coupling_norm == 0.0


def test_warped_spectral_symmetry():
    ev = _spec(assemble_total_dirac(zoo_model("warped_torus"), 0.5, 10, 3))
    assert np.abs(ev + ev[::-1]).max() < 1e-10


# --------------------------------------------------------------------------
# circle bundle
# --------------------------------------------------------------------------
@pytest.mark.parametrize("eps", [1.0, 0.5])
def test_flat_circle_bundle_closed_form(eps):
    m = BundleModel(family="circle_bundle_T2", k=1, curvature_a=0.0)
    op = assemble_total_dirac(m, eps, 4, 4)
    j, l, n = np.meshgrid(np.arange(-4, 5), np.arange(-4, 5), np.arange(-4, 5))
    r = np.sqrt(j ** 2 + l ** 2 + (n / eps) ** 2).ravel()
    assert np.abs(_spec(op) - np.sort(np.concatenate([r, -r]))).max() < 1e-10


def _landau_oracle(a, W, m, count):
    q = a * m / W
    vals = [math.copysign(1.0, q) * m / W] + [s * math.sqrt(2 * abs(q) * n + (m / W) ** 2) for n in range(1, count + 1) for s in (1, -1)]
    return np.sort(np.array(vals) + a / 4)


@pytest.mark.parametrize("eps", [1.0, 0.5, 0.25])
def test_landau_blocks(eps):
    model = zoo_model("circle_bundle")
    op = assemble_total_dirac(model, eps, 6, 3)
    a, W = model.curvature_at(eps), model.fiber_scale(eps)
    p = round(model.chern_number(eps))
    for b in op.blocks_tagged("transverse"):
        m, K = b.meta["m"], b.meta["levels"]
        ev = np.sort(np.linalg.eigvalsh(b.matrix))
        assert np.abs(ev - _landau_oracle(a, W, m, K - 1)).max() < 1e-10
        assert np.abs(ev - landau_levels(model, eps, m, K - 1)).max() < 1e-12
        assert b.multiplicity == abs(p * m)


def test_circle_bundle_gamma_a_term():
    from collapse_spectra.clifford import split_rep

    model = zoo_model("circle_bundle")
    sp = split_rep(2, 1)
    a = model.curvature_at()
    blk = invariant_projector(assemble_total_dirac(model, 1.0, 2, 1)).blocks[0]
    expected = -0.5 * a * sp.vertical[0] @ sp.horizontal[0] @ sp.horizontal[1]
    assert np.abs(2 * blk.terms["a_tensor"] - expected).max() < 1e-15
    assert np.allclose(blk.terms["a_tensor"], a / 4 * np.eye(2))


def test_non_integral_chern_number_rejected():
    m = BundleModel(family="circle_bundle_T2", k=1, curvature_a=0.1)
    with pytest.raises(AssemblyError):
        assemble_total_dirac(m, 1.0, 2, 2)


# --------------------------------------------------------------------------
# mapping torus
# --------------------------------------------------------------------------
def test_lattice_orbits_partition_the_box():
    H = np.array([[2, 1], [1, 1]])
    M = 5
    orbits = lattice_orbits(H, M)
    members = [t for mem in orbits.values() for t in mem]
    box = {(i, j) for i in range(-M, M + 1) for j in range(-M, M + 1)} - {(0, 0)}
    assert sorted(members) == sorted(box)
    where = {t: r for r, mem in orbits.items() for t in mem}
    for t, r in where.items():
        img = tuple(int(v) for v in H.T @ np.array(t))
        if img in where:
            assert where[img] == r
    # the representative is the least element of the whole orbit; it may sit just outside the box
    key = lambda v: (v[0] ** 2 + v[1] ** 2, v)
    for r, mem in orbits.items():
        assert key(r) <= min(key(v) for v in mem)
        v, seen = np.array(mem[0]), set()
        for _ in range(40):
            seen.add(tuple(int(x) for x in v))
            v = H.T @ v
        v = np.array(mem[0])
        for _ in range(40):
            seen.add(tuple(int(x) for x in v))
            v = np.round(np.linalg.inv(H.T) @ v).astype(int)
        assert r in seen


def _theta_oracle(model, n=256):
    """Periodic trapezoid rule for the equivariant-frame connection (spectrally accurate)."""
    s = np.linspace(0.0, TWO_PI, n, endpoint=False)
    return TWO_PI * np.mean([frame_connection(*equivariant_frame(model, v))[0, 1] for v in s])


@pytest.mark.parametrize("kind", ["equivariant", "geodesic_bump"])
def test_equivariant_frame_closes_smoothly(kind):
    model = BundleModel(family="mapping_torus", k=2, holonomy=((2, 1), (1, 1)), metric_path={"kind": kind, "mu": 0.3}, base_metric=((2.0, 0.3), (0.3, 1.0)))
    for s in (0.2, 2.9, 5.5):
        F, dF = equivariant_frame(model, s)
        F2, dF2 = equivariant_frame(model, s + TWO_PI)
        assert np.abs(F.T @ F - metric_path(model, s)[0]).max() < 1e-13
        assert np.abs(F2 - F @ model.H).max() < 1e-13
        assert np.abs(dF2 - dF @ model.H).max() < 1e-13
        fd = central_difference(lambda t: equivariant_frame(model, float(t))[0], s)
        assert np.abs(dF - fd).max() < 1e-8
        # a non-symmetric frame matrix still gives the Levi-Civita frame connection
        Fun = lambda t: equivariant_frame(model, t)[0]
        oracle = _frame_connection_oracle(Fun, s)
        assert np.abs(frame_connection(F, dF) - oracle).max() < 1e-7


def _frame_connection_oracle(Wfun, s, h=1e-5):
    W = Wfun(s)
    G = W.T @ W
    Gp, Gm = Wfun(s + h).T @ Wfun(s + h), Wfun(s - h).T @ Wfun(s - h)
    Z = np.linalg.inv(W)
    dZ = (np.linalg.inv(Wfun(s + h)) - np.linalg.inv(Wfun(s - h))) / (2 * h)
    nabla = dZ + 0.5 * np.linalg.solve(G, (Gp - Gm) / (2 * h)) @ Z
    return nabla.T @ G @ Z


@pytest.mark.parametrize("mu", [0.0, 0.2, 0.5])
def test_mapping_torus_invariant_spectrum(mu):
    model = BundleModel(family="mapping_torus", k=2, holonomy=((2, 1), (1, 1)), metric_path={"kind": "equivariant", "mu": mu})
    theta, Theta = mapping_torus_holonomy_phase(model)
    assert abs(Theta - _theta_oracle(model)) < 1e-12
    op = assemble_total_dirac(model, 0.5, 8, 1)
    ev = _spec(op, "invariant")
    shift = -Theta / (4 * math.pi)
    expected = np.repeat(np.arange(-6, 7) + shift, 2)
    got = ev[np.abs(ev - shift) <= 6.5]
    assert np.abs(np.sort(got) - np.sort(expected)).max() < 1e-8


def test_mapping_torus_transverse_gap_grows():
    model = zoo_model("mapping_torus")
    gaps = [np.abs(_spec(assemble_total_dirac(model, e, 6, 2), "transverse")).min() for e in (1.0, 0.5, 0.25)]
    assert gaps[0] < gaps[1] < gaps[2]
    assert gaps[2] / gaps[1] > 1.7


def test_mapping_torus_rejects_antiperiodic_fiber():
    model = BundleModel(
        family="mapping_torus",
        k=2,
        holonomy=((2, 1), (1, 1)),
        spin_flags={"base": "periodic", "fiber1": "antiperiodic", "fiber2": "periodic"},
    )
    with pytest.raises(AssemblyError):
        assemble_total_dirac(model, 0.5, 4, 2)


def test_heisenberg_limit_unsupported():
    with pytest.raises(AssemblyError, match="point base"):
        assemble_limit_operator(zoo_model("heisenberg"), 4)


# --------------------------------------------------------------------------
# forms operator
# --------------------------------------------------------------------------
def _sturm_liouville_fd(cf, n):
    """Periodic second-order finite differences for ``-(c f')' = mu c f``."""
    h = TWO_PI / n
    s = np.arange(n) * h
    cm = cf(s + h / 2)
    A = np.diag((cm + np.roll(cm, 1)) / h ** 2)
    i = np.arange(n)
    A[i, (i + 1) % n] -= cm / h ** 2
    A[i, (i - 1) % n] -= np.roll(cm, 1) / h ** 2
    return sla.eigh(A, np.diag(cf(s)), eigvals_only=True)


def test_forms_against_sturm_liouville_oracle():
    cf = lambda s: np.exp(np.cos(s))
    coarse, fine = _sturm_liouville_fd(cf, 800)[:9], _sturm_liouville_fd(cf, 1600)[:9]
    mu = (4 * fine - coarse) / 3
    ev = _spec(assemble_forms_dirac(Warping("exp_cos", {"A": 1.0, "phi": 0.0}), 32))
    pos = ev[ev > 1e-6][:8]
    assert np.abs(pos - np.sqrt(mu[1:9])).max() < 1e-6


def test_forms_constant_warping():
    ev = _spec(assemble_forms_dirac(Warping(), 8))
    expected = np.sort(np.concatenate([np.repeat(np.arange(-8, 9), 2)]))
    assert np.abs(ev - expected).max() < 1e-13


def test_forms_golden_values():
    ev = _spec(assemble_forms_dirac(Warping("exp_cos", {"A": 2.0, "phi": 0.0}), 48))
    nonneg = np.unique(np.round(ev[ev > -1e-9], 6))[:4]
    assert np.abs(nonneg - [0.0, 1.283497, 2.130866, 3.085057]).max() < 2e-6


def test_forms_spectral_symmetry_and_kernel():
    ev = _spec(assemble_forms_dirac(Warping("exp_cos", {"A": 1.0, "phi": 0.7}), 24))
    assert np.abs(ev + ev[::-1]).max() < 1e-10
    assert np.sum(np.abs(ev) < 1e-10) == 2


def test_forms_rejects_wrong_model():
    with pytest.raises(AssemblyError):
        assemble_forms_dirac(zoo_model("warped_torus"), 4)


def test_spectrum_labels():
    res = spectrum(assemble_total_dirac(zoo_model("warped_torus"), 0.5, 6, 2))
    assert set(res.labels) == {"invariant", "transverse"}
    assert res.select("invariant").size == 2 * 13
