"""Mean curvature flow of spline surfaces with fixed boundary.

A tensor-product B-spline surface evolves by mean curvature while its
boundary stays pinned; discrete curvature and normal fields evolve
alongside through constrained Galerkin equations, integrated in time
with linearly implicit BDF formulas.
"""

from .config import ConfigError, ScenarioConfig, load_config, parse_config, serialize_config
from .convergence import ConvergenceReport, convergence_study
from .flow import (
    BdfScheme,
    FlowProblem,
    FlowState,
    SolverFailure,
    StepDiagnostics,
    bdf_coefficients,
    initialize,
    run,
)
from .geometry import (
    BoundaryFrame,
    DegenerateSurface,
    GeometrySample,
    SplineField,
    boundary_frame,
    geometry_at,
    surface_area,
    surface_gradient,
    weingarten,
)
from .projections import (
    BoundaryData,
    NoContraction,
    RitzConfig,
    boundary_quasi_interp,
    linear_ritz_zero_trace,
    nonlinear_ritz_normal,
    project_velocity,
    surface_quasi_interp,
)
from .scenarios import (
    Scenario,
    calibrate_plane_amplitude,
    calibrate_sphere_extent,
    get_scenario,
    scenario_perturbed_plane,
    scenario_sphere_patch,
)
from .splines import (
    BoundaryTraceSpace,
    ParametricMesh,
    QuasiInterpolant,
    TensorSplineSpace,
    UnivariateSpline,
    apply_quasi_interpolant,
    boundary_trace_space,
    build_quasi_interpolant,
    build_space,
)

__version__ = "0.1.0"
