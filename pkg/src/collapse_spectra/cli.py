"""Command line entry point ``collapse-spectra``."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import List, Optional

import numpy as np

from . import harness
from .clifford import gammas_to_json, make_clifford_rep, split_rep
from .eigen import EigenError
from .models import ModelError, Warping, load_model, zoo_model, zoo_names
from .operators import AssemblyError
from .spectra import ConvergenceError


def _resolve_model(arg: Optional[str]) -> Optional[str]:
    """Accept a file path or the name of a bundled zoo model."""
    if arg is None or Path(arg).exists():
        return arg
    if arg in zoo_names():
        from importlib import resources

        return str(resources.files("collapse_spectra") / "zoo" / f"{arg}.json")
    return arg


def _float_list(text: str) -> List[float]:
    try:
        return [float(x) for x in text.replace(",", " ").split()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"not a list of numbers: {text!r}") from exc


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="collapse-spectra", description="Dirac spectra under collapse of nilmanifold bundles.")
    p.add_argument("command", choices=["spectrum", "limit", "sweep", "verify", "paper-example"])
    p.add_argument("--model", help="model JSON file or zoo name (" + ", ".join(zoo_names()) + ")")
    p.add_argument("--epsilon", type=float)
    p.add_argument("--epsilons", type=_float_list, help="descending scales, comma or space separated")
    p.add_argument("--modes", "-N", type=int, default=8, dest="N", help="base Fourier cutoff N")
    p.add_argument("--fiber-modes", "-M", type=int, default=4, dest="M", help="fiber lattice cutoff M")
    p.add_argument("--out", help="output file (stdout when omitted)")
    p.add_argument("--format", choices=["csv", "json"], default="csv")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--warping", help="paper-example override: JSON warping, e.g. '{\"kind\": \"const\", \"params\": {\"value\": 1}}'")
    p.add_argument("--dump-gammas", action="store_true", help="print the gamma matrices used and exit")
    return p


def _dump_gammas(cfg: harness.ExperimentConfig) -> int:
    model = cfg.load()
    if model.base_dim == 0:
        payload = {"fiber": gammas_to_json(make_clifford_rep(model.k))}
    else:
        sp = split_rep(model.base_dim, model.k)
        payload = {"parity_case": sp.parity_case, "assembled": gammas_to_json(sp.assembled)}
    print(json.dumps(payload, indent=2, sort_keys=True))
    return harness.EXIT_OK


def _parse_warping(text: Optional[str]) -> Optional[Warping]:
    if text is None:
        return None
    try:
        d = json.loads(text)
        return Warping(d["kind"], dict(d.get("params", {})))
    except (ValueError, KeyError, TypeError) as exc:
        raise ModelError(f"invalid warping override: {exc}", ["warping"]) from exc


def _paper_example(cfg: harness.ExperimentConfig) -> int:
    rep = harness.run_paper_example(cfg.warping)
    for line in rep.lines():
        print(line)
    if cfg.out_path:
        harness._write(
            cfg.out_path,
            harness._dump_json(
                {
                    "values": rep.values,
                    "multiplicities": rep.multiplicities,
                    "reference": list(rep.targets),
                    "deviations": rep.deviations,
                    "passed": rep.passed,
                    "truncation": rep.truncation,
                }
            ),
        )
    return harness.EXIT_OK if rep.passed else harness.EXIT_INVARIANT


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    cfg = harness.ExperimentConfig(
        command=args.command,
        model_path=_resolve_model(args.model),
        epsilon=args.epsilon,
        epsilons=args.epsilons,
        N=args.N,
        M=args.M,
        out_path=args.out,
        format=args.format,
        seed=args.seed,
    )
    try:
        cfg.warping = _parse_warping(args.warping)
        if args.dump_gammas:
            if not cfg.model_path:
                raise ModelError("--dump-gammas needs --model", ["model"])
            return _dump_gammas(cfg)
        cfg.validate()
        if cfg.command == "paper-example":
            return _paper_example(cfg)
        if cfg.command == "spectrum":
            return harness.run_spectrum(cfg)
        if cfg.command == "limit":
            return harness.run_limit(cfg)
        if cfg.command == "sweep":
            summary = harness.run_sweep(cfg)
            if cfg.out_path:
                print(json.dumps({"gap_slope": summary["gap_slope"], "distance": summary["distance"]}, sort_keys=True))
            return harness.EXIT_OK
        code, checks = harness.run_verify(cfg)
        for c in checks:
            print(c.line())
        return code
    except ModelError as exc:
        print(f"error: {exc}", file=sys.stderr)
        for f in getattr(exc, "fields", []) or []:
            print(f"  field: {f}", file=sys.stderr)
        return harness.EXIT_CONFIG
    except (ConvergenceError, EigenError) as exc:
        print(f"convergence failure: {exc}", file=sys.stderr)
        return harness.EXIT_CONVERGENCE
    except AssemblyError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return harness.EXIT_CONFIG


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
