"""Galerkin assembly over the parametric mesh.

Interior forms are integrated element by element with a tensor Gauss
rule; all element loops are vectorized, with basis tabulations cached in
`MeshTables` so that repeated assembly on a moving surface only re-does
the coefficient-dependent contractions.  Matrices are returned in CSR
format; vector-valued systems stack coefficients component-major, i.e.
[all x | all y | all z], matching `scipy.sparse.block_diag`.

Boundary terms live on the four edges of the parametric square.  The
constraint matrix S has one row per distinct boundary control point and
columns for all 3 * dim vector coefficients; its entries integrate
(trace basis) * (trace basis) * (unit tangent component) against the
fixed initial boundary length element, so S w = 0 expresses discrete
L2-orthogonality of the trace of w to the boundary tangent.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from .geometry import DEGENERACY_EPS, DegenerateSurface, SplineField
from .splines import (
    EDGE_FIXED_COORD,
    BoundaryTraceSpace,
    TensorSplineSpace,
    boundary_trace_space,
    gauss_rule,
)


def stack_components(coeffs):
    """(dim, 3) coefficients -> component-major vector of length 3*dim."""
    return np.asarray(coeffs).T.ravel()


def unstack_components(vec, dim):
    """Inverse of stack_components."""
    return np.asarray(vec).reshape(3, dim).T


class MeshTables:
    """Cached basis tabulation on the N x N Gauss mesh of a space."""

    def __init__(self, space: TensorSplineSpace, n_quad: int):
        self.space = space
        self.n_quad = n_quad
        pu, wu, fu, tu = space.u.element_tables(n_quad, nderiv=1)
        pv, wv, fv, tv = space.v.element_tables(n_quad, nderiv=1)
        neu, nev = space.u.num_elements, space.v.num_elements
        du, dv = space.u.degree, space.v.degree
        self.num_elements = neu * nev
        self.nloc = (du + 1) * (dv + 1)
        nq2 = n_quad * n_quad

        # connectivity (Ne, nloc): flat indices of active basis functions
        au = fu[:, None] + np.arange(du + 1)[None, :]  # (neu, du+1)
        av = fv[:, None] + np.arange(dv + 1)[None, :]
        conn = (
            au[:, None, :, None] * space.v.dim + av[None, :, None, :]
        )  # (neu, nev, du+1, dv+1)
        self.conn = conn.reshape(self.num_elements, self.nloc)

        # quadrature points per element (Ne, nq2, 2)
        U = np.broadcast_to(pu[:, None, :, None], (neu, nev, n_quad, n_quad))
        V = np.broadcast_to(pv[None, :, None, :], (neu, nev, n_quad, n_quad))
        self.points = np.stack(
            [U.reshape(self.num_elements, nq2), V.reshape(self.num_elements, nq2)],
            axis=-1,
        )
        self.weights = np.outer(wu, wv).ravel()  # (nq2,), same on every element

        # basis values and parametric gradients (Ne, nq2, nloc[, 2])
        bu = tu[:, :, 0, :]  # (neu, nq, du+1)
        gu = tu[:, :, 1, :]
        bv = tv[:, :, 0, :]
        gv = tv[:, :, 1, :]
        B = np.einsum("eqa,frb->efqrab", bu, bv)
        self.basis = B.reshape(self.num_elements, nq2, self.nloc)
        dB = np.stack(
            [
                np.einsum("eqa,frb->efqrab", gu, bv),
                np.einsum("eqa,frb->efqrab", bu, gv),
            ],
            axis=-1,
        )
        self.basis_grad = dB.reshape(self.num_elements, nq2, self.nloc, 2)

    def field_values(self, coeffs):
        """Field values at all quadrature points, (Ne, nq2[, D])."""
        loc = coeffs[self.conn]
        if loc.ndim == 2:
            return np.einsum("eql,el->eq", self.basis, loc)
        return np.einsum("eql,eld->eqd", self.basis, loc)

    def field_jacobians(self, coeffs):
        """Parametric Jacobians at quadrature points, (Ne, nq2, D, 2)."""
        loc = coeffs[self.conn]
        if loc.ndim == 2:
            loc = loc[:, :, None]
        return np.einsum("eqla,eld->eqda", self.basis_grad, loc)


class ElementGeometry:
    """First-order geometry of a surface at the quadrature points."""

    def __init__(self, tables: MeshTables, x_coeffs):
        J = tables.field_jacobians(np.asarray(x_coeffs))
        G = np.einsum("eqda,eqdb->eqab", J, J)
        det = G[..., 0, 0] * G[..., 1, 1] - G[..., 0, 1] * G[..., 1, 0]
        if np.any(det <= DEGENERACY_EPS):
            raise DegenerateSurface(
                f"metric determinant {det.min():.3e} at quadrature point"
            )
        Ginv = np.empty_like(G)
        Ginv[..., 0, 0] = G[..., 1, 1]
        Ginv[..., 1, 1] = G[..., 0, 0]
        Ginv[..., 0, 1] = -G[..., 0, 1]
        Ginv[..., 1, 0] = -G[..., 1, 0]
        Ginv /= det[..., None, None]
        self.jacobian = J
        self.metric = G
        self.metric_inv = Ginv
        self.area_element = np.sqrt(det)  # (Ne, nq2)


def _scatter_matrix(tables, local, shape=None):
    """Accumulate per-element local matrices (Ne, nloc, nloc) into CSR."""
    conn = tables.conn
    rows = np.repeat(conn, tables.nloc, axis=1).ravel()
    cols = np.tile(conn, (1, tables.nloc)).ravel()
    dim = tables.space.dim
    M = sp.coo_matrix(
        (local.ravel(), (rows, cols)), shape=shape or (dim, dim)
    )
    return M.tocsr()


def _scatter_vector(tables, local):
    """Accumulate per-element local vectors (Ne, nloc[, D])."""
    dim = tables.space.dim
    if local.ndim == 2:
        out = np.zeros(dim)
        np.add.at(out, tables.conn, local)
    else:
        out = np.zeros((dim, local.shape[2]))
        np.add.at(out, tables.conn, local)
    return out


def assemble_mass_stiffness(tables: MeshTables, geom: ElementGeometry):
    """Surface mass and stiffness matrices on the given geometry.

    Returns (M, A) in CSR; restrict with `interior_block` for the
    zero-trace versions.
    """
    w = tables.weights
    q = geom.area_element
    B = tables.basis
    dB = tables.basis_grad
    Mloc = np.einsum("q,eq,eqi,eqj->eij", w, q, B, B, optimize=True)
    t = np.einsum("eqab,eqjb->eqja", geom.metric_inv, dB)
    Aloc = np.einsum("q,eq,eqia,eqja->eij", w, q, dB, t, optimize=True)
    return _scatter_matrix(tables, Mloc), _scatter_matrix(tables, Aloc)


def interior_block(matrix, space: TensorSplineSpace):
    """Restriction of a dim x dim matrix to interior basis indices."""
    idx = space.interior_indices
    return matrix[idx][:, idx].tocsr()


def assemble_curvature_load(tables, geom, kappa_coeffs, nu_coeffs):
    """Load |A|^2 kappa against the scalar basis (full-length vector)."""
    frob2 = weingarten_energy(tables, geom, nu_coeffs)
    kap = tables.field_values(np.asarray(kappa_coeffs))
    dens = tables.weights[None, :] * geom.area_element * frob2 * kap
    local = np.einsum("eq,eqi->ei", dens, tables.basis)
    return _scatter_vector(tables, local)


def assemble_normal_load(tables, geom, nu_coeffs):
    """Load |A|^2 nu against the vector basis, (dim, 3)."""
    frob2 = weingarten_energy(tables, geom, nu_coeffs)
    nu = tables.field_values(np.asarray(nu_coeffs))
    dens = tables.weights[None, :] * geom.area_element * frob2
    local = np.einsum("eq,eqd,eqi->eid", dens, nu, tables.basis)
    return _scatter_vector(tables, local)


def weingarten_energy(tables, geom, nu_coeffs):
    """|grad_Gamma nu|_F^2 at the quadrature points, (Ne, nq2)."""
    Jn = tables.field_jacobians(np.asarray(nu_coeffs))
    A = np.einsum(
        "eqda,eqab,eqcb->eqdc", Jn, geom.metric_inv, geom.jacobian, optimize=True
    )
    return np.einsum("eqdc,eqdc->eq", A, A)


# ---------------------------------------------------------------------------
# boundary assembly


class BoundaryTables:
    """Edge tabulations plus frozen boundary data of the initial surface.

    The boundary of the evolving surface is fixed in time, so the length
    element, the interpolated tangent (raw and unit) and the boundary
    curvature vector are all sampled once at the edge quadrature points
    of the initial surface and reused by every assembly call.
    """

    def __init__(self, space: TensorSplineSpace, n_quad: int):
        self.space = space
        self.n_quad = n_quad
        self.traces = boundary_trace_space(space)
        self.edge_tabs = []
        for edge in range(4):
            uspace = self.traces.edge_spaces[edge]
            pts, wts, first, vals = uspace.element_tables(n_quad, nderiv=1)
            self.edge_tabs.append(
                {
                    "points": pts,  # (Ne, nq)
                    "weights": wts,  # (nq,)
                    "first": first,  # (Ne,)
                    "values": vals[:, :, 0, :],  # (Ne, nq, p+1)
                    "derivs": vals[:, :, 1, :],
                    "degree": uspace.degree,
                }
            )
        self.frozen = None

    def edge_local_indices(self, edge):
        """Per-element trace DOF indices, (Ne, p+1)."""
        tab = self.edge_tabs[edge]
        return tab["first"][:, None] + np.arange(tab["degree"] + 1)[None, :]

    def edge_field_values(self, edge, edge_coeffs, deriv=False):
        """Trace values (Ne, nq[, D]) from per-edge univariate coefficients."""
        tab = self.edge_tabs[edge]
        loc = np.asarray(edge_coeffs)[self.edge_local_indices(edge)]
        key = "derivs" if deriv else "values"
        if loc.ndim == 2:
            return np.einsum("eqa,ea->eq", tab[key], loc)
        return np.einsum("eqa,ead->eqd", tab[key], loc)

    def trace_coeffs(self, edge, coeffs):
        """Edge univariate coefficients of a tensor-space field."""
        return np.asarray(coeffs)[self.traces.edge_flat_indices[edge]]

    def freeze(self, x0_field: SplineField, boundary_data):
        """Sample time-independent boundary quantities at the edge points.

        `boundary_data` carries the per-edge interpolated tangent and
        curvature-vector coefficients (see projections.BoundaryData).
        """
        frozen = []
        for edge in range(4):
            dx = self.edge_field_values(
                edge, self.trace_coeffs(edge, x0_field.coeffs), deriv=True
            )
            length = np.linalg.norm(dx, axis=2)  # (Ne, nq)
            tau = self.edge_field_values(edge, boundary_data.tangent[edge])
            tau_hat = tau / np.linalg.norm(tau, axis=2, keepdims=True)
            kap = self.edge_field_values(edge, boundary_data.curvature[edge])
            frozen.append(
                {"length": length, "tau": tau, "tau_hat": tau_hat, "kappa": kap}
            )
        self.frozen = frozen
        return self


def assemble_constraint(btables: BoundaryTables):
    """Tangential-trace constraint matrix S, (n_boundary, 3*dim) CSR.

    Requires frozen boundary data; rows follow the distinct boundary
    control point numbering of the trace space.
    """
    assert btables.frozen is not None, "freeze boundary data first"
    space = btables.space
    traces = btables.traces
    rows, cols, vals = [], [], []
    for edge in range(4):
        tab = btables.edge_tabs[edge]
        fr = btables.frozen[edge]
        loc = btables.edge_local_indices(edge)  # (Ne, p+1)
        flat = traces.edge_flat_indices[edge][loc]  # tensor flat indices
        brow = traces.row_of_flat(flat)  # boundary row numbers
        dens = tab["weights"][None, :] * fr["length"]  # (Ne, nq)
        p1 = loc.shape[1]
        r = np.repeat(brow, p1, axis=1).ravel()
        c0 = np.tile(flat, (1, p1)).ravel()
        for k in range(3):
            Sk = np.einsum(
                "eq,eqa,eqb->eab",
                dens * fr["tau_hat"][:, :, k],
                tab["values"],
                tab["values"],
            )
            rows.append(r)
            cols.append(c0 + k * space.dim)
            vals.append(Sk.ravel())
    S = sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(traces.num_rows, 3 * space.dim),
    )
    return S.tocsr()


def assemble_boundary_mass(btables: BoundaryTables):
    """Boundary mass matrix on the trace DOFs, (n_boundary, n_boundary)."""
    assert btables.frozen is not None
    traces = btables.traces
    rows, cols, vals = [], [], []
    for edge in range(4):
        tab = btables.edge_tabs[edge]
        fr = btables.frozen[edge]
        loc = btables.edge_local_indices(edge)
        brow = traces.row_of_flat(traces.edge_flat_indices[edge][loc])
        dens = tab["weights"][None, :] * fr["length"]
        base = np.einsum("eq,eqa,eqb->eab", dens, tab["values"], tab["values"])
        p1 = loc.shape[1]
        rows.append(np.repeat(brow, p1, axis=1).ravel())
        cols.append(np.tile(brow, (1, p1)).ravel())
        vals.append(base.ravel())
    M = sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(traces.num_rows, traces.num_rows),
    )
    return M.tocsr()


def assemble_boundary_load(btables: BoundaryTables, nu_coeffs):
    """Conormal boundary load for the normal equation, (dim, 3).

    Integrates (kappa_b . nu)(nu x tau) against the vector basis traces
    over the fixed initial boundary, with the interpolated tangent kept
    unnormalized.
    """
    assert btables.frozen is not None
    space = btables.space
    out = np.zeros((space.dim, 3))
    for edge in range(4):
        tab = btables.edge_tabs[edge]
        fr = btables.frozen[edge]
        nu = btables.edge_field_values(
            edge, btables.trace_coeffs(edge, nu_coeffs)
        )  # (Ne, nq, 3)
        alpha = np.einsum("eqd,eqd->eq", fr["kappa"], nu)
        mu = np.cross(nu, fr["tau"])
        dens = tab["weights"][None, :] * fr["length"] * alpha
        local = np.einsum("eq,eqd,eqa->ead", dens, mu, tab["values"])
        flat = btables.traces.edge_flat_indices[edge][
            btables.edge_local_indices(edge)
        ]
        np.add.at(out, flat, local)
    return out


def constraint_residual(S, nu_coeffs):
    """Max-norm of S applied to a stacked normal field."""
    return float(np.abs(S @ stack_components(nu_coeffs)).max())


def dump_matrix_market(path, name, matrix):
    """Write a sparse matrix in MatrixMarket coordinate format."""
    from pathlib import Path

    from scipy.io import mmwrite

    target = Path(path) / f"{name}.mtx"
    mmwrite(str(target), sp.coo_matrix(matrix))
    return target
