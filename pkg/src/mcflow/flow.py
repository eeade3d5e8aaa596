"""Linearly implicit BDF time stepping for the constrained flow.

Each step extrapolates surface, normal and curvature from the history,
assembles mass/stiffness and the nonlinear loads on the extrapolated
surface, then solves two linear systems: a zero-trace parabolic step
for the curvature and a saddle system for the normal whose multiplier
enforces discrete tangential orthogonality of the boundary trace.  The
velocity is the quasi-interpolant of -kappa * nu with exactly zero
boundary coefficients, and the position update resets the boundary rows
to their initial values so the Dirichlet data is preserved bit for bit.

The BDF coefficients come from the generating polynomials

    delta(z) = sum_{l=1..q} (1/l) (1 - z)^l,    gamma(z) = (1 - (1-z)^q) / z,

evaluated exactly in rational arithmetic; orders 1 and 2 are supported,
and a q=2 run bootstraps with a single q=1 step.
"""

from __future__ import annotations

import time as _time
from dataclasses import dataclass, replace
from fractions import Fraction
from math import comb

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .assembly import (
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
    stack_components,
    unstack_components,
)
from .config import ScenarioConfig
from .geometry import SplineField, surface_area
from .projections import (
    AnalyticSource,
    RitzConfig,
    boundary_quasi_interp,
    nonlinear_ritz_normal,
    project_velocity,
)
from .scenarios import get_scenario
from .splines import ParametricMesh, build_quasi_interpolant, build_space


class SolverFailure(Exception):
    """Raised when a linear solve leaves too large a residual."""


def bdf_coefficients(order: int):
    """BDF derivative and extrapolation weights (delta, gamma).

    delta has length order + 1 (newest first), gamma length order.
    Exact rational values converted to float.
    """
    if order not in (1, 2):
        raise ValueError(f"BDF order must be 1 or 2, got {order}")
    q = order
    delta = [Fraction(0)] * (q + 1)
    for l in range(1, q + 1):
        for j in range(l + 1):
            delta[j] += Fraction(1, l) * Fraction((-1) ** j * comb(l, j))
    gamma = [Fraction(0)] * q
    for j in range(1, q + 1):
        gamma[j - 1] = -Fraction((-1) ** j * comb(q, j))
    return (
        np.array([float(d) for d in delta]),
        np.array([float(g) for g in gamma]),
    )


@dataclass
class FlowState:
    """Discrete state: coefficients of position, curvature, normal, velocity."""

    time: float
    x: np.ndarray  # (dim, 3)
    kappa: np.ndarray  # (dim,), zero boundary coefficients
    nu: np.ndarray  # (dim, 3)
    v: np.ndarray  # (dim, 3), zero boundary coefficients
    multiplier: np.ndarray  # (n_boundary,)

    def copy(self):
        return FlowState(
            self.time,
            self.x.copy(),
            self.kappa.copy(),
            self.nu.copy(),
            self.v.copy(),
            self.multiplier.copy(),
        )


@dataclass
class StepDiagnostics:
    time: float
    area: float
    max_abs_kappa: float
    constraint_residual: float
    solver_residuals: tuple
    wallclock: float

    @property
    def solver_residual(self):
        return max(self.solver_residuals) if self.solver_residuals else 0.0


class BdfScheme:
    """Coefficients plus the state history (newest first) for one order."""

    def __init__(self, order: int):
        self.order = order
        self.delta, self.gamma = bdf_coefficients(order)
        self.history: list[FlowState] = []

    def push(self, state: FlowState):
        self.history.insert(0, state)
        del self.history[self.order :]

    @property
    def ready(self):
        return len(self.history) >= self.order

    def extrapolate(self, attr: str):
        """gamma-weighted combination of history coefficients."""
        return sum(
            g * getattr(s, attr) for g, s in zip(self.gamma, self.history)
        )

    def derivative_tail(self, attr: str):
        """sum_{j>=1} delta_j * (history coefficients)."""
        return sum(
            d * getattr(s, attr) for d, s in zip(self.delta[1:], self.history)
        )


@dataclass
class RunResult:
    config: ScenarioConfig
    diagnostics: list
    final_state: FlowState
    snapshots: list  # (step index, FlowState)
    problem: "FlowProblem"


class FlowProblem:
    """Discretization context for one scenario run."""

    def __init__(self, cfg: ScenarioConfig):
        self.cfg = cfg
        self.scenario = get_scenario(cfg.scenario, **cfg.scenario_params())
        self.space = build_space(cfg.degree, cfg.smoothness, cfg.elements_per_side)
        self.quasi = build_quasi_interpolant(self.space)
        n_quad = cfg.degree + 1
        self.tables = MeshTables(self.space, n_quad)
        self.mesh = ParametricMesh(cfg.elements_per_side, n_quad)
        # The conormal load integrand stacks five spline factors, so the
        # boundary rule is sized for degree 5p rather than 2p.
        self.btables = BoundaryTables(self.space, 3 * cfg.degree)
        self.ritz_cfg = RitzConfig(
            lam=cfg.ritz_lambda,
            fp_tol=cfg.ritz_fp_tol,
            fp_max_iter=cfg.ritz_fp_max_iter,
            lambda_growth=cfg.ritz_lambda_growth,
        )
        # filled by initialize()
        self.S = None
        self.boundary_data = None
        self.x0_boundary = None
        self.ritz_info = None

    # -- initialization ------------------------------------------------

    def initialize(self) -> FlowState:
        """Discrete initial data: interpolated surface, curvature, normal.

        Position and curvature are quasi-interpolants (curvature with
        zero boundary coefficients); the normal solves the constrained
        nonlinear projection; the velocity interpolates -kappa * nu.
        """
        sc = self.scenario
        x = self.quasi(sc.position)
        x_field = SplineField(self.space, x)
        self.x0_boundary = x[self.space.boundary_indices].copy()

        self.boundary_data = boundary_quasi_interp(
            self.btables, sc.boundary_tangent, sc.boundary_curvature
        )
        self.btables.freeze(x_field, self.boundary_data)
        self.S = assemble_constraint(self.btables)
        self.boundary_mass = assemble_boundary_mass(self.btables)

        kappa = self.quasi(sc.mean_curvature, zero_boundary=True)
        nu_field, self.ritz_info = nonlinear_ritz_normal(
            x_field, AnalyticSource(sc), self.btables, self.S, self.ritz_cfg
        )
        kappa_field = SplineField(self.space, kappa)
        v = project_velocity(self.quasi, kappa_field, nu_field)
        return FlowState(
            time=0.0,
            x=x,
            kappa=kappa,
            nu=nu_field.coeffs,
            v=v,
            multiplier=np.zeros(self.S.shape[0]),
        )

    # -- single step -----------------------------------------------------

    def step(self, scheme: BdfScheme, dt: float):
        """One linearly implicit BDF step; returns (state, diagnostics)."""
        if not scheme.ready:
            raise ValueError("BDF history is not full")
        t0 = _time.perf_counter()
        cfg = self.cfg
        space = self.space
        delta = scheme.delta
        d0 = delta[0]

        x_ext = scheme.extrapolate("x")
        nu_ext = scheme.extrapolate("nu")
        kap_ext = scheme.extrapolate("kappa")

        geom = ElementGeometry(self.tables, x_ext)
        M, A = assemble_mass_stiffness(self.tables, geom)
        idx = space.interior_indices

        # curvature step (zero-trace space)
        f1 = assemble_curvature_load(self.tables, geom, kap_ext, nu_ext)
        tail_k = scheme.derivative_tail("kappa")
        rhs_k = f1[idx] - (M @ tail_k)[idx] / dt
        K0 = ((d0 / dt) * M + A)[idx][:, idx].tocsc()
        sol_k = spla.splu(K0).solve(rhs_k)
        res_k = _relative_residual(K0, sol_k, rhs_k)
        kappa = np.zeros(space.dim)
        kappa[idx] = sol_k

        # normal step (saddle system with tangential boundary constraint)
        f2 = assemble_normal_load(self.tables, geom, nu_ext)
        fb = assemble_boundary_load(self.btables, nu_ext)
        tail_n = scheme.derivative_tail("nu")
        rhs_n = stack_components(f2 + fb - (M @ tail_n) / dt)
        Kb = (d0 / dt) * M + A
        K3 = sp.block_diag([Kb, Kb, Kb])
        saddle = sp.bmat([[K3, self.S.T], [self.S, None]], format="csc")
        rhs_full = np.concatenate([rhs_n, np.zeros(self.S.shape[0])])
        sol_n = spla.splu(saddle).solve(rhs_full)
        res_n = _relative_residual(saddle, sol_n, rhs_full)
        nu = unstack_components(sol_n[: 3 * space.dim], space.dim)
        multiplier = sol_n[3 * space.dim :]

        for name, res in (("curvature", res_k), ("normal", res_n)):
            if not np.isfinite(res) or res > cfg.solver_residual_tol:
                raise SolverFailure(
                    f"{name} solve: relative residual {res:.3e} exceeds "
                    f"{cfg.solver_residual_tol:.1e}"
                )

        # velocity on the extrapolated surface, then position update
        v = project_velocity(
            self.quasi,
            SplineField(space, kappa),
            SplineField(space, nu),
        )
        tail_x = scheme.derivative_tail("x")
        x = (dt * v - tail_x) / d0
        x[space.boundary_indices] = self.x0_boundary

        state = FlowState(
            time=scheme.history[0].time + dt,
            x=x,
            kappa=kappa,
            nu=nu,
            v=v,
            multiplier=multiplier,
        )
        diag = StepDiagnostics(
            time=state.time,
            area=surface_area(SplineField(space, x), self.mesh),
            max_abs_kappa=float(np.abs(kappa).max()),
            constraint_residual=constraint_residual(self.S, nu),
            solver_residuals=(res_k, res_n),
            wallclock=_time.perf_counter() - t0,
        )
        return state, diag

    def initial_diagnostics(self, state: FlowState) -> StepDiagnostics:
        return StepDiagnostics(
            time=state.time,
            area=surface_area(SplineField(self.space, state.x), self.mesh),
            max_abs_kappa=float(np.abs(state.kappa).max()),
            constraint_residual=constraint_residual(self.S, state.nu),
            solver_residuals=(),
            wallclock=0.0,
        )

    # -- full run ---------------------------------------------------------

    def run(self, order: int = 2) -> RunResult:
        """March from t = 0 to t_final; emits per-step diagnostics.

        A failed step (solver residual or degenerate geometry) aborts the
        run after serializing the last good state when an output
        directory is configured.
        """
        cfg = self.cfg
        num_steps = int(round(cfg.t_final / cfg.dt)) if cfg.dt > 0 else 0
        state = self.initialize()
        diagnostics = [self.initial_diagnostics(state)]
        snapshots = []
        if cfg.snapshot_stride > 0:
            snapshots.append((0, state.copy()))

        if cfg.dump_matrices and cfg.output_dir:
            self._dump_matrices(state)

        scheme = BdfScheme(1)
        scheme.push(state)
        try:
            for k in range(1, num_steps + 1):
                state, diag = self.step(scheme, cfg.dt)
                diagnostics.append(diag)
                if cfg.snapshot_stride > 0 and (
                    k % cfg.snapshot_stride == 0 or k == num_steps
                ):
                    snapshots.append((k, state.copy()))
                if order == 2 and scheme.order == 1:
                    upgraded = BdfScheme(2)
                    upgraded.history = [state] + scheme.history
                    del upgraded.history[2:]
                    scheme = upgraded
                else:
                    scheme.push(state)
        except Exception:
            if cfg.output_dir:
                self._serialize_abort(state, diagnostics)
            raise
        return RunResult(cfg, diagnostics, state, snapshots, self)

    def _dump_matrices(self, state):
        from .assembly import dump_matrix_market

        geom = ElementGeometry(self.tables, state.x)
        M, A = assemble_mass_stiffness(self.tables, geom)
        for name, mat in (
            ("mass", M),
            ("stiffness", A),
            ("constraint", self.S),
            ("boundary_mass", self.boundary_mass),
        ):
            dump_matrix_market(cfg_dir(self.cfg), name, mat)

    def _serialize_abort(self, state, diagnostics):
        from .export import export_vtk, write_diagnostics_csv

        out = cfg_dir(self.cfg)
        write_diagnostics_csv(diagnostics, out / "diagnostics_abort.csv")
        export_vtk(self, state, out / "last_good_state.vtk")


def cfg_dir(cfg: ScenarioConfig):
    from pathlib import Path

    p = Path(cfg.output_dir)
    p.mkdir(parents=True, exist_ok=True)
    return p


def _relative_residual(A, x, b):
    b_norm = np.linalg.norm(b)
    r = np.linalg.norm(A @ x - b)
    return r / b_norm if b_norm > 0.0 else r


def initialize(cfg: ScenarioConfig):
    """Build the discretization and the initial state."""
    problem = FlowProblem(cfg)
    return problem, problem.initialize()


def run(cfg: ScenarioConfig, order: int = 2) -> RunResult:
    """Full flow run for a config; see FlowProblem.run."""
    return FlowProblem(cfg).run(order=order)
