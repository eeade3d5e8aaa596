"""Galerkin assembly: interior forms, boundary terms, oracles."""

from __future__ import annotations

import numpy as np
import pytest
import scipy.sparse as sp

from mcflow.assembly import (
    BoundaryTables,
    ElementGeometry,
    MeshTables,
    assemble_boundary_load,
    assemble_boundary_mass,
    assemble_constraint,
    assemble_curvature_load,
    assemble_mass_stiffness,
    assemble_normal_load,
    constraint_residual,
    interior_block,
    stack_components,
    unstack_components,
    weingarten_energy,
)
from mcflow.config import ScenarioConfig
from mcflow.flow import initialize
from mcflow.geometry import DegenerateSurface, SplineField
from mcflow.scenarios import get_scenario
from mcflow.splines import (
    build_quasi_interpolant,
    build_space,
    edge_points,
    gauss_rule,
)


@pytest.fixture(scope="module")
def sphere_problem():
    """Initialized sphere patch at N=10 (frozen boundary data, Ritz normal)."""
    cfg = ScenarioConfig(
        scenario="sphere_patch",
        degree=2,
        smoothness=1,
        elements_per_side=10,
        dt=0.025,
        t_final=0.9,
        output_dir="",
    )
    return initialize(cfg)


@pytest.fixture(scope="module")
def flat_setup():
    space = build_space(2, 1, 5)
    quasi = build_quasi_interpolant(space)
    sc = get_scenario("perturbed_plane", amplitude=0.0)
    x = quasi(sc.position)
    tables = MeshTables(space, 3)
    geom = ElementGeometry(tables, x)
    return space, tables, geom, x


def test_stack_unstack_roundtrip(rng):
    c = rng.normal(size=(17, 3))
    assert np.array_equal(unstack_components(stack_components(c), 17), c)
    # component-major layout matches scipy block_diag stacking
    assert np.array_equal(stack_components(c)[:17], c[:, 0])


def test_mesh_tables_field_values(space_small, rng):
    tables = MeshTables(space_small, 3)
    coeffs = rng.normal(size=(space_small.dim, 3))
    fld = SplineField(space_small, coeffs)
    vals = tables.field_values(coeffs)
    jacs = tables.field_jacobians(coeffs)
    pts = tables.points.reshape(-1, 2)
    ref_v, ref_j = fld.eval(pts, 1)
    assert np.abs(vals.reshape(-1, 3) - ref_v).max() < 1e-13
    assert np.abs(jacs.reshape(-1, 3, 2) - ref_j).max() < 1e-12


def test_mass_stiffness_structure(flat_setup):
    space, tables, geom, _ = flat_setup
    M, A = assemble_mass_stiffness(tables, geom)
    assert (M - M.T).nnz == 0 or abs((M - M.T)).max() < 1e-14
    assert abs((A - A.T)).max() < 1e-13
    ones = np.ones(space.dim)
    # partition of unity: total mass is the area, constants are stiffness kernel
    assert abs(ones @ (M @ ones) - 4.0) < 1e-12
    assert np.abs(A @ ones).max() < 1e-12
    evals = np.linalg.eigvalsh(M.toarray())
    assert evals.min() > 0.0


def test_flat_mass_matches_dense_quadrature(flat_setup):
    """Independent oracle: 8-point Gauss tensor rule per element.

    On the flat square the integrand is piecewise polynomial of degree
    2p = 4, exact for both rules, so agreement is to roundoff.
    """
    space, tables, geom, x = flat_setup
    M, _ = assemble_mass_stiffness(tables, geom)
    N = space.u.num_elements
    h = 1.0 / N
    xg, wg = gauss_rule(8)
    dense = np.zeros((space.dim, space.dim))
    for eu in range(N):
        for ev in range(N):
            for a, wa in zip(xg, wg):
                for b, wb in zip(xg, wg):
                    pt = ((eu + a) * h, (ev + b) * h)
                    idx, vals = space.eval_basis(pt, 0)
                    w = wa * wb * h * h * 4.0  # area element of the flat map
                    dense[np.ix_(idx, idx)] += w * np.outer(vals, vals)
    assert np.abs(M.toarray() - dense).max() < 1e-13


def test_interior_block_shape(flat_setup):
    space, tables, geom, _ = flat_setup
    M, _ = assemble_mass_stiffness(tables, geom)
    Mi = interior_block(M, space)
    n = len(space.interior_indices)
    assert Mi.shape == (n, n)


def test_weingarten_energy_on_sphere(sphere_problem):
    """|A|^2 = 2 on the interpolated unit sphere patch."""
    prob, st = sphere_problem
    geom = ElementGeometry(prob.tables, st.x)
    frob2 = weingarten_energy(prob.tables, geom, st.nu)
    assert np.abs(frob2 - 2.0).max() < 0.08


def test_curvature_load_oracle():
    """On the sphere, |A|^2 kappa = -4, so f1 ~ M (-4) over interior DOFs.

    With plainly interpolated fields the agreement is exact: nu = -X on
    the unit sphere and the interpolant is linear, so the coefficients
    satisfy nu_h = -x_h and the discrete Weingarten map is minus the
    tangent projector, whose Frobenius norm squared is exactly 2.  The
    run initialization (Ritz normal, zero-trace curvature) perturbs both
    fields, leaving an O(h) discrepancy that stays below 5% at N=16.
    """
    cfg = ScenarioConfig(
        scenario="sphere_patch",
        degree=2,
        smoothness=1,
        elements_per_side=16,
        dt=0.025,
        t_final=0.9,
        output_dir="",
    )
    prob, st = initialize(cfg)
    geom = ElementGeometry(prob.tables, st.x)
    M, _ = assemble_mass_stiffness(prob.tables, geom)
    ref = M @ np.full(prob.space.dim, -4.0)
    idx = prob.space.interior_indices

    sc = prob.scenario
    kap_exact = prob.quasi(sc.mean_curvature)
    nu_exact = prob.quasi(sc.normal)
    f1 = assemble_curvature_load(prob.tables, geom, kap_exact, nu_exact)
    assert np.abs(f1 - ref).max() < 1e-13

    f1_init = assemble_curvature_load(prob.tables, geom, st.kappa, st.nu)
    rel = np.linalg.norm(f1_init[idx] - ref[idx]) / np.linalg.norm(ref[idx])
    assert rel < 0.05


def test_normal_load_consistent_with_curvature_load(sphere_problem):
    """f2 = |A|^2 nu: on the sphere nu ~ -x, and f1/kappa = f2 . (nu/|nu|^2)."""
    prob, st = sphere_problem
    geom = ElementGeometry(prob.tables, st.x)
    f2 = assemble_normal_load(prob.tables, geom, st.nu)
    # against a brute-force contraction at quadrature points
    frob2 = weingarten_energy(prob.tables, geom, st.nu)
    nu = prob.tables.field_values(st.nu)
    dens = prob.tables.weights[None, :] * geom.area_element * frob2
    ref = np.zeros((prob.space.dim, 3))
    np.add.at(
        ref,
        prob.tables.conn,
        np.einsum("eq,eqd,eqi->eid", dens, nu, prob.tables.basis),
    )
    assert np.abs(f2 - ref).max() < 1e-14


# -- boundary terms ----------------------------------------------------------


def test_boundary_load_dense_oracle(sphere_problem):
    """Brute-force dense quadrature of the conormal load, 24 points/element."""
    prob, st = sphere_problem
    space = prob.space
    fb = assemble_boundary_load(prob.btables, st.nu)

    NU = SplineField(space, st.nu)
    X = SplineField(space, st.x)
    bd = prob.boundary_data
    nq = 24
    xg, wg = gauss_rule(nq)
    dense = np.zeros((space.dim, 3))
    for edge in range(4):
        uspace = prob.btables.traces.edge_spaces[edge]
        h = uspace.mesh_size
        flat = prob.btables.traces.edge_flat_indices[edge]
        p1 = uspace.degree + 1
        tau_c = np.asarray(bd.tangent[edge])
        kap_c = np.asarray(bd.curvature[edge])
        for e in range(uspace.num_elements):
            s = e * h + xg * h
            first, ders = uspace.eval_basis(s, 0)
            idx = first[:, None] + np.arange(p1)[None, :]
            tau = np.einsum("nk,nkd->nd", ders[:, 0, :], tau_c[idx])
            kap = np.einsum("nk,nkd->nd", ders[:, 0, :], kap_c[idx])
            nuv = NU.eval(edge_points(edge, s))
            _, dxs = X.eval_edge(edge, s, 1)
            arc = np.linalg.norm(dxs, axis=1)
            alpha = np.einsum("nd,nd->n", kap, nuv)
            mu = np.cross(nuv, tau)
            vals = wg * h * arc * alpha
            for q in range(nq):
                rows = flat[first[q] + np.arange(p1)]
                dense[rows] += vals[q] * ders[q, 0][:, None] * mu[q][None, :]
    assert np.abs(fb - dense).max() < 1e-10


def test_boundary_load_vanishes_for_straight_edges():
    """Straight boundary: kappa_b = 0, so the conormal load vanishes.

    At the calibrated bump amplitude the only residue is sin(pi) != 0 in
    float arithmetic, cubed by the bump profile, hence the denormal-level
    tolerance; the unperturbed square is exactly zero.
    """
    for amplitude, tol in ((None, 1e-30), (0.0, 0.0)):
        cfg = ScenarioConfig(
            scenario="perturbed_plane",
            degree=2,
            smoothness=1,
            elements_per_side=6,
            dt=0.01,
            t_final=0.1,
            output_dir="",
        )
        if amplitude is not None:
            cfg.perturbation_amplitude = amplitude
        prob, st = initialize(cfg)
        fb = assemble_boundary_load(prob.btables, st.nu)
        assert np.abs(fb).max() <= tol


def test_constraint_matrix_structure(sphere_problem):
    prob, st = sphere_problem
    S = prob.S
    space = prob.space
    n_b = len(space.boundary_indices)
    assert S.shape == (n_b, 3 * space.dim)
    # columns touch boundary DOFs only
    cols = np.unique(S.tocoo().col % space.dim)
    assert np.all(np.isin(cols, space.boundary_indices))
    # the initialized normal satisfies the constraint
    assert constraint_residual(S, st.nu) < 1e-12


def test_constraint_reads_only_the_tangential_trace(sphere_problem, rng):
    """S w vanishes iff the boundary trace has no tangential component."""
    prob, _ = sphere_problem
    space = prob.space
    # zero boundary coefficients: S w = 0 exactly (column support)
    w = rng.normal(size=(space.dim, 3))
    w[space.boundary_indices] = 0.0
    assert np.abs(prob.S @ stack_components(w)).max() == 0.0
    # a trace along the interpolated tangent is maximally visible
    wt = np.zeros((space.dim, 3))
    for edge in range(4):
        flat = prob.btables.traces.edge_flat_indices[edge]
        wt[flat] = prob.boundary_data.tangent[edge]
    assert np.abs(prob.S @ stack_components(wt)).max() > 1e-2


def test_constraint_on_flat_square():
    """Flat square tangents live in the xy plane, so nu = e_z is constrained out."""
    cfg = ScenarioConfig(
        scenario="perturbed_plane",
        perturbation_amplitude=0.0,
        degree=2,
        smoothness=1,
        elements_per_side=5,
        dt=0.01,
        t_final=0.1,
        output_dir="",
    )
    prob, _ = initialize(cfg)
    ez = np.tile(np.array([0.0, 0.0, 1.0]), (prob.space.dim, 1))
    assert constraint_residual(prob.S, ez) < 1e-12


def test_boundary_mass_positive_definite(sphere_problem):
    prob, _ = sphere_problem
    Mb = assemble_boundary_mass(prob.btables)
    assert abs((Mb - Mb.T)).max() < 1e-14
    evals = np.linalg.eigvalsh(Mb.toarray())
    assert evals.min() > 0.0


def test_boundary_tables_require_freeze(space_small):
    bt = BoundaryTables(space_small, 6)
    with pytest.raises(AssertionError):
        assemble_constraint(bt)


def test_degenerate_geometry_raises(space_small):
    tables = MeshTables(space_small, 3)
    with pytest.raises(DegenerateSurface):
        ElementGeometry(tables, np.zeros((space_small.dim, 3)))
