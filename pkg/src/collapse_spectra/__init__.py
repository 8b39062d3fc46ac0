"""Dirac spectra of collapsing fiber bundles."""

from .clifford import CliffordRep, SplitRep, complex_volume, make_clifford_rep, split_rep
from .eigen import EigenReport, hermitian_eigenvalues
from .geometry import (
    GeometryData,
    connection_form,
    eval_geometry,
    fiber_christoffel,
    mean_curvature,
    scal_fiber,
    verify_bounds,
)
from .models import BundleModel, ModelError, Warping, load_model, model_from_dict, zoo_model, zoo_names
from .operators import (
    OperatorMatrix,
    assemble_forms_dirac,
    assemble_limit_operator,
    assemble_total_dirac,
    invariant_projector,
    q_conjugate,
)
from .spectra import SpectrumResult, collapse_sweep, converged_spectrum, spectrum

__version__ = "0.1.0"

__all__ = [
    "CliffordRep",
    "SplitRep",
    "make_clifford_rep",
    "complex_volume",
    "split_rep",
    "EigenReport",
    "hermitian_eigenvalues",
    "GeometryData",
    "connection_form",
    "eval_geometry",
    "fiber_christoffel",
    "mean_curvature",
    "scal_fiber",
    "verify_bounds",
    "BundleModel",
    "ModelError",
    "Warping",
    "load_model",
    "model_from_dict",
    "zoo_model",
    "zoo_names",
    "OperatorMatrix",
    "assemble_forms_dirac",
    "assemble_limit_operator",
    "assemble_total_dirac",
    "invariant_projector",
    "q_conjugate",
    "SpectrumResult",
    "collapse_sweep",
    "converged_spectrum",
    "spectrum",
]
