import csv
import json

import numpy as np
import pytest

from collapse_spectra import cli, harness
from collapse_spectra.eigen import EigenReport
from collapse_spectra.spectra import ConvergenceError


def _run(capsys, *argv):
    code = cli.main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def test_spectrum_csv(tmp_path, capsys):
    out = tmp_path / "flat.csv"
    code, _, _ = _run(capsys, "spectrum", "--model", "flat_torus", "--epsilon", "0.5", "-N", "2", "-M", "2", "--out", str(out))
    assert code == 0
    rows = list(csv.DictReader(out.open()))
    assert list(rows[0]) == ["epsilon", "index", "eigenvalue", "subspace", "N", "M"]
    vals = np.array([float(r["eigenvalue"]) for r in rows])
    j, m = np.meshgrid(np.arange(-2, 3), np.arange(-2, 3))
    r = np.sqrt(j ** 2 + (2 * m) ** 2).ravel()
    assert np.abs(np.sort(vals) - np.sort(np.concatenate([r, -r]))).max() < 1e-12
    assert {r["subspace"] for r in rows} == {"invariant", "transverse"}
    # 17 significant digits round-trip exactly
    assert all(float(r["eigenvalue"]) == float(format(float(r["eigenvalue"]), ".17g")) for r in rows)


def test_sweep_outputs_are_byte_identical(tmp_path, capsys):
    paths = []
    for name in ("a", "b"):
        out = tmp_path / name / "sweep.csv"
        code, _, _ = _run(capsys, "sweep", "--model", "circle_bundle", "--epsilons", "1,0.5,0.25", "-N", "3", "-M", "2", "--out", str(out))
        assert code == 0
        paths.append(out)
    for suffix in ("sweep.csv", "sweep.summary.json", "sweep.gap.tsv"):
        assert (paths[0].parent / suffix).read_bytes() == (paths[1].parent / suffix).read_bytes()
    summary = json.loads((paths[0].parent / "sweep.summary.json").read_text())
    assert summary["epsilons"] == [1.0, 0.5, 0.25]
    assert len(summary["gap"]) == 3 and summary["gap_slope"] < 0
    tsv = (paths[0].parent / "sweep.gap.tsv").read_text().splitlines()
    assert tsv[0].startswith("#") and len(tsv) == 4


def test_json_format(tmp_path, capsys):
    out = tmp_path / "lim.json"
    code, _, _ = _run(capsys, "limit", "--model", "warped_torus", "-N", "3", "--format", "json", "--out", str(out))
    assert code == 0
    data = json.loads(out.read_text())
    assert data["columns"][2] == "eigenvalue"
    vals = sorted(r["eigenvalue"] for r in data["rows"])
    assert np.allclose(vals, np.repeat(np.arange(-3, 4), 2), atol=1e-12)


def test_verify_passes_on_zoo(capsys):
    for name in ("warped_torus", "heisenberg", "circle_bundle"):
        code, out, _ = _run(capsys, "verify", "--model", name, "-N", "4", "-M", "2")
        assert code == 0, out
        assert "FAIL" not in out
    assert "SKIP geometry.bounds (point base)" in _run(capsys, "verify", "--model", "heisenberg")[1]


def test_schema_errors_exit_2(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"family": "warped_torus", "k": 1, "warpings": [{"kind": "const"}], "colour": 3}))
    code, _, err = _run(capsys, "spectrum", "--model", str(bad))
    assert code == 2 and "colour" in err
    code, _, err = _run(capsys, "spectrum", "--model", str(tmp_path / "missing.json"))
    assert code == 2 and "field: model" in err
    code, _, err = _run(capsys, "sweep", "--model", "flat_torus", "--epsilons", "1,0.5")
    assert code == 2 and "epsilons" in err
    code, _, _ = _run(capsys, "spectrum", "--model", "flat_torus", "-N", "0")
    assert code == 2


def test_convergence_failure_exit_3(monkeypatch, capsys):
    def boom(*a, **k):
        raise ConvergenceError("no convergence up to N=4096", EigenReport(np.zeros(0), 0.0, 0, converged=False))

    monkeypatch.setattr(harness, "run_paper_example", boom)
    code, _, err = _run(capsys, "paper-example")
    assert code == 3 and "convergence" in err


def test_reference_example_exit_code_follows_report(capsys):
    rep = harness.run_paper_example()
    code, out, _ = _run(capsys, "paper-example")
    assert code == (0 if rep.passed else 4)
    assert out.count("lambda_") == 3


def test_reference_example_constant_warping(capsys):
    code, out, _ = _run(capsys, "paper-example", "--warping", '{"kind": "const", "params": {"value": 1.0}}')
    rep = harness.run_paper_example(harness.Warping("const", {"value": 1.0}))
    assert rep.values == pytest.approx([0.0, 1.0, 2.0], abs=1e-10)
    assert rep.multiplicities == [2, 2, 2]


def test_dump_gammas(capsys):
    code, out, _ = _run(capsys, "spectrum", "--model", "mapping_torus", "--dump-gammas")
    assert code == 0
    data = json.loads(out)
    assert data["parity_case"] and len(data["assembled"]["gammas"]) == 3


def test_invariant_violation_exit_4(monkeypatch, capsys):
    monkeypatch.setattr(harness, "_geometry_checks", lambda m: [harness.Check("forced", False)])
    code, out, _ = _run(capsys, "verify", "--model", "flat_torus", "-N", "2", "-M", "1")
    assert code == 4 and "FAIL forced" in out
