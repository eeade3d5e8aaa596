"""BDF stepping: coefficients, invariants, determinism, failure paths."""

from __future__ import annotations

from fractions import Fraction

import numpy as np
import pytest

from mcflow.config import ScenarioConfig
from mcflow.export import read_diagnostics_csv, write_diagnostics_csv
from mcflow.flow import (
    BdfScheme,
    FlowProblem,
    SolverFailure,
    bdf_coefficients,
    run,
)


def small_cfg(**kw):
    base = dict(
        scenario="sphere_patch",
        degree=2,
        smoothness=1,
        elements_per_side=6,
        dt=0.01,
        t_final=0.05,
        snapshot_stride=0,
        output_dir="",
    )
    base.update(kw)
    return ScenarioConfig(**base)


# -- BDF coefficients ---------------------------------------------------------


def test_bdf_coefficient_values():
    d1, g1 = bdf_coefficients(1)
    assert np.array_equal(d1, [1.0, -1.0]) and np.array_equal(g1, [1.0])
    d2, g2 = bdf_coefficients(2)
    assert np.array_equal(d2, [1.5, -2.0, 0.5]) and np.array_equal(g2, [2.0, -1.0])


@pytest.mark.parametrize("order", [1, 2])
def test_bdf_identities_exact(order):
    """sum(delta) = 0 and sum(gamma) = 1 in exact rational arithmetic."""
    delta, gamma = bdf_coefficients(order)
    assert sum(Fraction(d) for d in delta) == 0
    assert sum(Fraction(g) for g in gamma) == 1


def test_bdf2_exact_on_quadratic_sequences(rng):
    """The BDF2 derivative recovers d/dt of t -> a + b t + c t^2 exactly."""
    delta, gamma = bdf_coefficients(2)
    a, b, c = rng.normal(size=(3, 7))
    dt = 0.03
    t = 1.7

    def val(tt):
        return a + b * tt + c * tt * tt

    newest_first = [val(t), val(t - dt), val(t - 2 * dt)]
    deriv = sum(d * y for d, y in zip(delta, newest_first)) / dt
    assert np.abs(deriv - (b + 2 * c * t)).max() < 1e-12
    # extrapolation is exact on linear sequences
    lin = [val(t - dt), val(t - 2 * dt)]
    ext = sum(g * y for g, y in zip(gamma, lin))
    assert np.abs(ext - (a + b * t)).max() < 1e-9 or c.any()


def test_bdf_order_validation():
    with pytest.raises(ValueError):
        bdf_coefficients(3)
    scheme = BdfScheme(2)
    with pytest.raises(ValueError):
        FlowProblem(small_cfg()).step(scheme, 0.01)


# -- invariants over short runs -------------------------------------------------


def test_single_step_invariants():
    """One step: area shrinks, boundary stays put, constraint holds."""
    prob = FlowProblem(small_cfg(dt=0.005, t_final=0.005))
    res = prob.run(order=2)
    assert len(res.diagnostics) == 2
    a0, a1 = (d.area for d in res.diagnostics)
    assert a1 < a0
    bidx = prob.space.boundary_indices
    st0 = prob.initialize()
    assert np.array_equal(res.final_state.x[bidx], st0.x[bidx])
    assert res.diagnostics[-1].constraint_residual < 1e-10
    assert np.all(res.final_state.v[bidx] == 0.0)
    assert np.all(res.final_state.kappa[bidx] == 0.0)


def test_area_monotone_on_short_sphere_run():
    res = run(small_cfg(t_final=0.1))
    areas = [d.area for d in res.diagnostics]
    assert np.all(np.diff(areas) < 0.0)
    assert max(d.solver_residual for d in res.diagnostics[1:]) < 1e-9


def test_snapshot_stride():
    res = run(small_cfg(snapshot_stride=2, t_final=0.05))
    assert [k for k, _ in res.snapshots] == [0, 2, 4, 5]
    res = run(small_cfg(snapshot_stride=0, t_final=0.03))
    assert res.snapshots == []


def test_zero_step_run():
    res = run(small_cfg(t_final=0.0, dt=0.0))
    assert len(res.diagnostics) == 1
    assert res.final_state.time == 0.0


def test_determinism_bit_identical_csv(tmp_path):
    """Everything but the wallclock column is reproduced byte for byte."""
    paths = []
    for i in range(2):
        res = run(small_cfg(t_final=0.05))
        p = tmp_path / f"diag_{i}.csv"
        write_diagnostics_csv(res.diagnostics, p)
        paths.append(p)

    def content(p):
        return [line.rsplit(",", 1)[0] for line in p.read_text().splitlines()]

    assert content(paths[0]) == content(paths[1])
    back = read_diagnostics_csv(paths[0])
    assert back["area"][0] == res.diagnostics[0].area


def test_bdf1_vs_bdf2_startup():
    """Order 2 runs bootstrap with one order-1 step, then differ from order 1."""
    r1 = run(small_cfg(t_final=0.05), order=1)
    r2 = run(small_cfg(t_final=0.05), order=2)
    x1 = r1.final_state.x
    x2 = r2.final_state.x
    assert not np.array_equal(x1, x2)
    # after exactly one step the histories agree
    s1 = run(small_cfg(t_final=0.01), order=1).final_state
    s2 = run(small_cfg(t_final=0.01), order=2).final_state
    assert np.array_equal(s1.x, s2.x)


def test_abort_serializes_diagnostics(tmp_path):
    cfg = small_cfg(
        t_final=0.05,
        solver_residual_tol=1e-30,
        output_dir=str(tmp_path / "aborted"),
    )
    with pytest.raises(SolverFailure):
        run(cfg)
    out = tmp_path / "aborted"
    assert (out / "diagnostics_abort.csv").exists()
    assert (out / "last_good_state.vtk").exists()
    rows = read_diagnostics_csv(out / "diagnostics_abort.csv")
    assert len(rows["t"]) >= 1


def test_second_order_consistency():
    """Halving dt quarters the final-state coefficient error (BDF2)."""

    def final_state(dt):
        cfg = ScenarioConfig(
            scenario="perturbed_plane",
            degree=2,
            smoothness=1,
            elements_per_side=8,
            dt=dt,
            t_final=0.2,
            snapshot_stride=0,
            output_dir="",
        )
        return run(cfg, order=2).final_state

    base_dt = 0.2 / 64
    ref = final_state(base_dt / 8)

    def err(st):
        return np.sqrt(
            np.linalg.norm(st.x - ref.x) ** 2
            + np.linalg.norm(st.kappa - ref.kappa) ** 2
            + np.linalg.norm(st.nu - ref.nu) ** 2
        )

    ratio = err(final_state(base_dt)) / err(final_state(base_dt / 2))
    assert 3.5 <= ratio <= 4.5
