"""Legacy-format VTK export of tet meshes with cell and point fields."""

import numpy as np

from .errors import ConfigError

_VTK_TET = 10


def _fmt(x):
    return format(float(x), ".17g")


def _write_array(fh, arr, per_line):
    arr = np.asarray(arr, dtype=float).reshape(-1, per_line)
    for row in arr:
        fh.write(" ".join(_fmt(v) for v in row))
        fh.write("\n")


def write_vtk(path, mesh, cell_data=None, point_data=None,
              title="curltd export"):
    """ASCII unstructured-grid file; fields are name -> array mappings
    with one scalar or one 3-vector per tet (cell_data) or per vertex
    (point_data)."""
    cell_data = dict(cell_data or {})
    point_data = dict(point_data or {})

    def check(name, arr, n, kind):
        arr = np.asarray(arr, dtype=float)
        if arr.shape not in ((n,), (n, 3)):
            raise ConfigError(
                f"{kind} field {name!r} must have shape ({n},) or ({n}, 3),"
                f" got {arr.shape}")
        return arr

    cell_data = {k: check(k, v, mesh.n_tets, "cell")
                 for k, v in cell_data.items()}
    point_data = {k: check(k, v, mesh.n_vertices, "point")
                  for k, v in point_data.items()}

    with open(path, "w") as fh:
        fh.write("# vtk DataFile Version 3.0\n")
        fh.write(title.replace("\n", " ")[:255] + "\n")
        fh.write("ASCII\nDATASET UNSTRUCTURED_GRID\n")

        fh.write(f"POINTS {mesh.n_vertices} double\n")
        _write_array(fh, mesh.vertices, 3)

        fh.write(f"CELLS {mesh.n_tets} {5 * mesh.n_tets}\n")
        for tet in mesh.tets:
            fh.write(f"4 {tet[0]} {tet[1]} {tet[2]} {tet[3]}\n")
        fh.write(f"CELL_TYPES {mesh.n_tets}\n")
        fh.write("\n".join([str(_VTK_TET)] * mesh.n_tets) + "\n")

        if cell_data:
            fh.write(f"CELL_DATA {mesh.n_tets}\n")
            _write_fields(fh, cell_data)
        if point_data:
            fh.write(f"POINT_DATA {mesh.n_vertices}\n")
            _write_fields(fh, point_data)


def _write_fields(fh, fields):
    for name, arr in fields.items():
        safe = name.replace(" ", "_")
        if arr.ndim == 1:
            fh.write(f"SCALARS {safe} double 1\nLOOKUP_TABLE default\n")
            _write_array(fh, arr, 1)
        else:
            fh.write(f"VECTORS {safe} double\n")
            _write_array(fh, arr, 3)
