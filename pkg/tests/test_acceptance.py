"""Acceptance gate: one test per shipped claim, at pinned tolerances.

Criterion 4 is expected to fail at the reference step size: the area
record of the shrinking spherical patch is not strictly decreasing after
the flow reaches the discrete minimal surface.  The failure is asserted
(not waived) so the gap stays visible; the test message carries the
measured evidence.  Everything else passes.
"""

from __future__ import annotations

import numpy as np
import pytest

from mcflow.assembly import assemble_boundary_load
from mcflow.config import ScenarioConfig
from mcflow.convergence import convergence_study
from mcflow.flow import FlowProblem, bdf_coefficients, initialize, run
from mcflow.geometry import SplineField
from mcflow.scenarios import get_scenario
from mcflow.splines import (
    ParametricMesh,
    build_quasi_interpolant,
    build_space,
    edge_points,
    gauss_rule,
)
from tests.conftest import interior_grid


@pytest.fixture(scope="module")
def example1():
    """Perturbed-plane relaxation: p=2, C^1, N=20, dt=0.0015625, T=0.8."""
    cfg = ScenarioConfig(
        scenario="perturbed_plane",
        degree=2,
        smoothness=1,
        elements_per_side=20,
        dt=0.0015625,
        t_final=0.8,
        snapshot_stride=1,
        output_dir="",
    )
    return FlowProblem(cfg).run(order=2)


@pytest.fixture(scope="module")
def example2():
    """Shrinking spherical patch: p=2, C^1, N=20, dt=0.025, T=0.9."""
    cfg = ScenarioConfig(
        scenario="sphere_patch",
        degree=2,
        smoothness=1,
        elements_per_side=20,
        dt=0.025,
        t_final=0.9,
        snapshot_stride=1,
        output_dir="",
    )
    return FlowProblem(cfg).run(order=2)


def test_criterion_1_space_dimension():
    """p=2, C^1, 20 elements per side: 400 elements and exactly 484 DOFs."""
    space = build_space(2, 1, 20)
    assert space.u.num_elements * space.v.num_elements == 400
    assert space.dim == 484


def test_criterion_2_sphere_curvature_initialization():
    """Discrete curvature of the sphere patch is -2 away from the boundary.

    Interior samples keep a parametric distance >= 0.1 from the edges,
    outside the support of the zeroed boundary coefficients.  The second
    check observes the curvature the surface actually carries (trace of
    the Weingarten map of the projected normal), which converges rather
    than sitting at roundoff.
    """
    pts = interior_grid(33, margin=0.1)
    sc = get_scenario("sphere_patch")
    field_err = {}
    for N in (20, 40):
        space = build_space(2, 1, N)
        quasi = build_quasi_interpolant(space)
        kap = SplineField(space, quasi(sc.mean_curvature, zero_boundary=True))
        field_err[N] = np.abs(kap.eval(pts)[:, 0] + 2.0).max()
    assert field_err[20] <= 0.05
    assert field_err[40] < field_err[20]

    def weingarten_trace_err(N):
        cfg = ScenarioConfig(
            scenario="sphere_patch",
            degree=2,
            smoothness=1,
            elements_per_side=N,
            dt=0.025,
            t_final=0.9,
            output_dir="",
        )
        prob, st = initialize(cfg)
        _, J = SplineField(prob.space, st.x).eval(pts, 1)
        _, Jn = SplineField(prob.space, st.nu).eval(pts, 1)
        G = np.einsum("nda,ndb->nab", J, J)
        B = np.einsum("nda,ndb->nab", Jn, J)
        tr = np.trace(np.linalg.solve(G, B), axis1=1, axis2=2)
        return np.abs(tr + 2.0).max()

    e20 = weingarten_trace_err(20)
    e40 = weingarten_trace_err(40)
    assert e20 <= 0.05
    assert e40 < e20


def test_criterion_3_plane_relaxation(example1):
    """Area decreases monotonically from 4.0442 and lands within 1e-3 of 4."""
    areas = np.array([d.area for d in example1.diagnostics])
    assert len(areas) == 513
    assert abs(areas[0] - 4.0442) < 5e-5
    assert np.all(np.diff(areas) <= 1e-8)
    assert abs(areas[-1] - 4.0) <= 1e-3


def test_criterion_4_sphere_patch_run(example2):
    """Sphere-patch run: starts at 5.859 +- 5e-3 and should strictly decrease.

    The strict-decrease clause fails at the reference step size and is
    asserted anyway: after the flow reaches the discrete minimal surface
    (step 21 of 36), the linearly implicit treatment of the reaction
    terms overshoots and the area rebounds by up to ~1.1e-3 per step.
    Halving the step size reduces the worst rebound to ~5e-5 and halving
    it twice removes every increase, so this is a time-discretization
    artifact of the pinned run parameters, not an assembly defect.
    """
    areas = np.array([d.area for d in example2.diagnostics])
    assert len(areas) == 37
    assert abs(areas[0] - 5.859) <= 5e-3
    # informational: closest approach to the minimal surface and final area
    print(
        f"area record: initial {areas[0]:.6f}, min {areas.min():.6f} "
        f"at step {int(areas.argmin())}, final {areas[-1]:.6f}"
    )
    inc = np.diff(areas)
    bad = np.nonzero(inc > 1e-8)[0]
    assert bad.size == 0, (
        f"area increases at {bad.size} of {inc.size} steps (first at step "
        f"{bad[0] + 1 if bad.size else '-'}, worst +{inc.max():.3e}); the "
        "rebound off the discrete minimal surface does not occur at dt/4"
    )


def test_criterion_5_self_convergence_orders():
    """H1 self-convergence orders >= 1.8 for position, curvature, normal."""
    base = ScenarioConfig(
        scenario="perturbed_plane",
        degree=2,
        smoothness=1,
        elements_per_side=4,
        dt=0.0125,
        t_final=0.05,
        output_dir="",
    )
    report = convergence_study(base, [4, 8, 16, 32], t_final=0.05)
    for var in ("position", "kappa", "nu"):
        assert report.eoc_h1[var] >= 1.8, (var, report.eoc_h1)


def test_criterion_6_constraint_and_boundary_invariants(example1, example2):
    """Every step of both runs: ||S nu||_inf <= 1e-10, boundary bits frozen."""
    for result in (example1, example2):
        for d in result.diagnostics:
            assert d.constraint_residual <= 1e-10
        bidx = result.problem.space.boundary_indices
        x0b = result.snapshots[0][1].x[bidx]
        for k, state in result.snapshots:
            assert np.array_equal(state.x[bidx], x0b), f"boundary moved at step {k}"


def test_criterion_7_flat_square_stationarity():
    """100 steps on the unperturbed square leave all coefficients at 1e-12."""
    cfg = ScenarioConfig(
        scenario="perturbed_plane",
        perturbation_amplitude=0.0,
        degree=2,
        smoothness=1,
        elements_per_side=8,
        dt=0.01,
        t_final=1.0,
        snapshot_stride=0,
        output_dir="",
    )
    prob = FlowProblem(cfg)
    st0 = prob.initialize()
    res = prob.run(order=2)
    assert len(res.diagnostics) == 101
    s = res.final_state
    for name in ("x", "kappa", "nu", "v"):
        drift = np.abs(getattr(s, name) - getattr(st0, name)).max()
        assert drift <= 1e-12, (name, drift)


def test_criterion_8_projector_and_oracle_suite(example2):
    # dual-basis identity
    space = build_space(2, 1, 6)
    quasi = build_quasi_interpolant(space)
    B = np.zeros((len(quasi.grid_points), space.dim))
    for i, pt in enumerate(quasi.grid_points):
        idx, vals = space.eval_basis(pt, 0)
        B[i, idx] = vals
    assert np.abs(quasi.apply_to_values(B) - np.eye(space.dim)).max() <= 1e-10

    # polynomial reproduction at degree p
    rng = np.random.default_rng(3)
    cu, cv = rng.normal(size=(2, 3))

    def poly(pts):
        return np.polyval(cu, pts[:, 0]) * np.polyval(cv, pts[:, 1])

    fld = SplineField(space, quasi(poly))
    probe = rng.uniform(size=(80, 2))
    assert np.abs(fld.eval(probe)[:, 0] - poly(probe)).max() <= 1e-11

    # L2 order of the quasi-interpolant on a smooth non-polynomial
    def smooth(pts):
        return np.sin(1.3 * np.pi * pts[:, 0]) * np.exp(0.7 * pts[:, 1])

    for p, l in ((2, 1), (3, 2)):
        errs = []
        for N in (4, 8, 16, 32):
            sp_n = build_space(p, l, N)
            q_n = build_quasi_interpolant(sp_n)
            f_n = SplineField(sp_n, q_n(smooth))
            mesh = ParametricMesh(N, p + 2)
            mpts = mesh.all_points()
            w = np.tile(mesh.weights_2d, mesh.num_elements_2d)
            d = f_n.eval(mpts)[:, 0] - smooth(mpts)
            errs.append(np.sqrt(np.sum(w * d * d)))
        eocs = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
        assert eocs.min() >= p + 0.8, (p, eocs)

    # constant normal on the flat patch in at most 2 fixed-point iterations
    flat = FlowProblem(
        ScenarioConfig(
            scenario="perturbed_plane",
            perturbation_amplitude=0.0,
            degree=2,
            smoothness=1,
            elements_per_side=8,
            dt=0.01,
            t_final=0.1,
            output_dir="",
        )
    )
    flat.initialize()
    assert flat.ritz_info["iterations"] <= 2

    # conormal boundary load against a dense brute-force quadrature
    prob = example2.problem
    st0 = example2.snapshots[0][1]
    fb = assemble_boundary_load(prob.btables, st0.nu)
    dense = _dense_boundary_load(prob, st0)
    assert np.abs(fb - dense).max() <= 1e-10


def _dense_boundary_load(prob, state, nq=24):
    """Edge integral of (kappa_b . nu)(nu x tau) b_i, 24 Gauss points/element."""
    space = prob.space
    NU = SplineField(space, state.nu)
    X = SplineField(space, state.x)
    bd = prob.boundary_data
    xg, wg = gauss_rule(nq)
    out = np.zeros((space.dim, 3))
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
                out[rows] += vals[q] * ders[q, 0][:, None] * mu[q][None, :]
    return out


def test_criterion_9_bdf_identities():
    """Exact coefficient identities and exactness on quadratic sequences."""
    from fractions import Fraction

    for order in (1, 2):
        delta, gamma = bdf_coefficients(order)
        assert sum(Fraction(d) for d in delta) == Fraction(0)
        assert sum(Fraction(g) for g in gamma) == Fraction(1)

    delta, _ = bdf_coefficients(2)
    rng = np.random.default_rng(9)
    a, b, c = rng.normal(size=(3, 11))
    dt, t = 0.05, 2.3

    def val(tt):
        return a + b * tt + c * tt * tt

    deriv = sum(d * val(t - j * dt) for j, d in enumerate(delta)) / dt
    assert np.abs(deriv - (b + 2 * c * t)).max() <= 1e-12
