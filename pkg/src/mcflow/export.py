"""Diagnostics CSV and VTK surface snapshots.

The CSV uses a fixed header and 17-significant-digit formatting, enough
for float64 round trips, so two identical runs produce byte-identical
files in every column except the wallclock.  VTK snapshots sample the
spline surface on a uniform parametric grid and write an unstructured
quad mesh with point data for curvature, normal and velocity; the
default is legacy ASCII, with an XML (.vtu) variant behind a flag.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

CSV_HEADER = "t,area,max_abs_kappa,constraint_residual,solver_residual,wallclock_s"


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def write_diagnostics_csv(diagnostics, path):
    """Write per-step diagnostics rows; returns the path."""
    path = Path(path)
    lines = [CSV_HEADER]
    for d in diagnostics:
        lines.append(
            ",".join(
                _fmt(v)
                for v in (
                    d.time,
                    d.area,
                    d.max_abs_kappa,
                    d.constraint_residual,
                    d.solver_residual,
                    d.wallclock,
                )
            )
        )
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join(lines) + "\n")
    return path


def read_diagnostics_csv(path):
    """Rows as a dict of numpy arrays keyed by column name."""
    text = Path(path).read_text().strip().splitlines()
    header = text[0].split(",")
    assert header == CSV_HEADER.split(","), f"unexpected CSV header {text[0]!r}"
    data = np.array([[float(v) for v in line.split(",")] for line in text[1:]])
    data = data.reshape(-1, len(header))
    return {name: data[:, i] for i, name in enumerate(header)}


def _sample_grid(problem, state, resolution: int):
    """Surface fields on a uniform (r*N+1)^2 parametric grid."""
    from .geometry import SplineField

    n = problem.cfg.elements_per_side * resolution + 1
    g = np.linspace(0.0, 1.0, n)
    U, V = np.meshgrid(g, g, indexing="ij")
    pts = np.column_stack([U.ravel(), V.ravel()])
    space = problem.space
    pos = SplineField(space, state.x).eval(pts)
    kap = SplineField(space, state.kappa).eval(pts)[:, 0]
    nu = SplineField(space, state.nu).eval(pts)
    vel = SplineField(space, state.v).eval(pts)

    quads = []
    for i in range(n - 1):
        for j in range(n - 1):
            a = i * n + j
            quads.append((a, a + n, a + n + 1, a + 1))
    return pos, kap, nu, vel, np.array(quads, dtype=int)


def export_vtk(problem, state, path, resolution: int = 2, xml: bool = False):
    """Write a VTK snapshot of the surface with its field data."""
    pos, kap, nu, vel, quads = _sample_grid(problem, state, resolution)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if xml:
        _write_vtu(path, pos, kap, nu, vel, quads)
    else:
        _write_legacy_vtk(path, pos, kap, nu, vel, quads)
    return path


def _write_legacy_vtk(path, pos, kap, nu, vel, quads):
    npts = len(pos)
    ncell = len(quads)
    out = [
        "# vtk DataFile Version 3.0",
        "mcflow surface snapshot",
        "ASCII",
        "DATASET UNSTRUCTURED_GRID",
        f"POINTS {npts} double",
    ]
    out += [" ".join(_fmt(c) for c in p) for p in pos]
    out.append(f"CELLS {ncell} {5 * ncell}")
    out += ["4 " + " ".join(str(i) for i in q) for q in quads]
    out.append(f"CELL_TYPES {ncell}")
    out += ["9"] * ncell
    out.append(f"POINT_DATA {npts}")
    out.append("SCALARS kappa double 1")
    out.append("LOOKUP_TABLE default")
    out += [_fmt(k) for k in kap]
    out.append("VECTORS nu double")
    out += [" ".join(_fmt(c) for c in p) for p in nu]
    out.append("VECTORS velocity double")
    out += [" ".join(_fmt(c) for c in p) for p in vel]
    Path(path).write_text("\n".join(out) + "\n")


def _write_vtu(path, pos, kap, nu, vel, quads):
    npts = len(pos)
    ncell = len(quads)

    def da(name, data, ncomp):
        flat = np.asarray(data).reshape(npts, -1)
        body = "\n".join(" ".join(_fmt(v) for v in row) for row in flat)
        return (
            f'<DataArray type="Float64" Name="{name}" '
            f'NumberOfComponents="{ncomp}" format="ascii">\n{body}\n</DataArray>'
        )

    conn = "\n".join(" ".join(str(i) for i in q) for q in quads)
    offs = " ".join(str(4 * (i + 1)) for i in range(ncell))
    types = " ".join("9" for _ in range(ncell))
    xml = f"""<?xml version="1.0"?>
<VTKFile type="UnstructuredGrid" version="0.1" byte_order="LittleEndian">
<UnstructuredGrid>
<Piece NumberOfPoints="{npts}" NumberOfCells="{ncell}">
<Points>
{da("points", pos, 3)}
</Points>
<Cells>
<DataArray type="Int64" Name="connectivity" format="ascii">
{conn}
</DataArray>
<DataArray type="Int64" Name="offsets" format="ascii">
{offs}
</DataArray>
<DataArray type="UInt8" Name="types" format="ascii">
{types}
</DataArray>
</Cells>
<PointData Scalars="kappa">
{da("kappa", kap, 1)}
{da("nu", nu, 3)}
{da("velocity", vel, 3)}
</PointData>
</Piece>
</UnstructuredGrid>
</VTKFile>
"""
    Path(path).write_text(xml)
