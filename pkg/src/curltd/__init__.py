"""Topology optimization of nonlinear 3D magnetostatics on edge elements.

Submodules
----------
mesh        tetrahedral meshes, edge numbering, ASCII mesh I/O
generators  structured mesh generators (box, toy motor, graded ball)
material    magnetic reluctivity laws and their Jacobians
fem         H(curl) assembly, Newton solver, curl evaluation, Helmholtz split
cell        exterior cell problems and topological-derivative evaluation
table       precomputed TD tables with spline lookup and rotation frames
optimizer   level-set design loop for the motor objective
validate    verification studies (rates, equivariance, linear oracle)
vtkio       legacy VTK export
config      run configuration files
cli         command-line entry point
"""

from __future__ import annotations

import importlib

__version__ = "0.1.0"

_SUBMODULES = (
    "mesh", "generators", "material", "kernels", "fem", "cell", "table",
    "optimizer", "validate", "vtkio", "config", "cli", "errors",
)

# Public names re-exported from submodules on first access.
_API = {
    "Mesh": "mesh", "build_edges": "mesh", "read_mesh": "mesh",
    "write_mesh": "mesh", "volume": "mesh",
    "GeometrySpec": "generators", "generate": "generators",
    "SaturationLaw": "material", "MaterialPair": "material",
    "check_assumptions": "material",
    "DofMap": "fem", "DiscreteField": "fem", "SolveSettings": "fem",
    "SparseSystem": "fem", "newton_solve": "fem", "curl_at": "fem",
    "helmholtz_split": "fem",
    "CellSolution": "cell", "TDVector": "cell", "solve_cell": "cell",
    "evaluate_td_vector": "cell", "epsilon_study": "cell",
    "TDTable": "table", "RotationFrame": "table", "rotation_to": "table",
    "precompute": "table", "eval_dJ": "table",
    "ObjectiveSpec": "optimizer", "DesignState": "optimizer",
    "eval_J": "optimizer", "solve_adjoint": "optimizer",
    "td_field": "optimizer", "levelset_update": "optimizer",
    "optimize": "optimizer",
    "StudyReport": "validate", "rate_study_inclusion": "validate",
    "rotation_equivariance_study": "validate", "linear_oracle_study": "validate",
    "RunConfig": "config", "load_config": "config",
    "CurlTDError": "errors", "NonconvergenceError": "errors",
    "TDRangeError": "errors",
}


def __getattr__(name):
    if name in _SUBMODULES:
        return importlib.import_module(f".{name}", __name__)
    modname = _API.get(name)
    if modname is not None:
        return getattr(importlib.import_module(f".{modname}", __name__), name)
    raise AttributeError(f"module {__name__!r} has no attribute {name!r}")


def __dir__():
    return sorted(set(globals()) | set(_SUBMODULES) | set(_API))
