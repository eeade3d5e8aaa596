"""Self-convergence study across nested refinement levels.

Each level runs the flow to a short final time with a step size
proportional to the mesh size; errors of position, curvature and normal
are measured against the finest level in the parametric H1 norm on a
shared quadrature grid (the finest level's elements with a rule finer
than either space), and orders are the least-squares slope of log2
error against log2 mesh size.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, replace
from pathlib import Path

import numpy as np

from .config import ScenarioConfig
from .flow import FlowProblem
from .geometry import SplineField
from .splines import ParametricMesh

VARIABLES = ("position", "kappa", "nu")


@dataclass
class ConvergenceReport:
    scenario: str
    degree: int
    levels: list
    t_final: float
    errors_h1: dict  # variable -> per-level error vs finest
    errors_l2: dict
    eoc_h1: dict  # variable -> fitted slope
    eoc_l2: dict
    pairwise_h1: dict  # variable -> slopes between consecutive levels

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "ConvergenceReport":
        return cls(**json.loads(text))


def _h1_errors(field_a: SplineField, field_b: SplineField, pts, weights):
    va, ja = field_a.eval(pts, 1)
    vb, jb = field_b.eval(pts, 1)
    dv = va - vb
    dj = ja - jb
    l2 = np.sum(weights * np.sum(dv * dv, axis=1))
    h1 = l2 + np.sum(weights * np.sum(dj * dj, axis=(1, 2)))
    return float(np.sqrt(l2)), float(np.sqrt(h1))


def convergence_study(
    base: ScenarioConfig, levels, t_final: float = 0.05, order: int = 2
) -> ConvergenceReport:
    """Run the flow on each level and fit self-convergence orders.

    `base.dt` is the step size of the coarsest level; finer levels scale
    it by the mesh ratio.  Levels must be strictly increasing with each
    dividing the next so the spaces are nested.
    """
    levels = [int(n) for n in levels]
    if len(levels) < 3:
        raise ValueError("need at least 3 levels")
    for a, b in zip(levels, levels[1:]):
        if b <= a or b % a != 0:
            raise ValueError(f"levels must be nested and increasing, got {levels}")

    runs = []
    for n in levels:
        cfg = replace(
            base,
            elements_per_side=n,
            dt=base.dt * levels[0] / n,
            t_final=t_final,
            snapshot_stride=0,
            output_dir="",
            dump_matrices=False,
        )
        result = FlowProblem(cfg).run(order=order)
        runs.append(result)

    finest = runs[-1]
    n_fine = levels[-1]
    mesh = ParametricMesh(n_fine, base.degree + 3)
    pts = mesh.all_points()
    weights = np.tile(mesh.weights_2d, mesh.num_elements_2d)

    def fields(result):
        space = result.problem.space
        s = result.final_state
        return {
            "position": SplineField(space, s.x),
            "kappa": SplineField(space, s.kappa[:, None]),
            "nu": SplineField(space, s.nu),
        }

    ref = fields(finest)
    errors_l2 = {v: [] for v in VARIABLES}
    errors_h1 = {v: [] for v in VARIABLES}
    for result in runs[:-1]:
        cur = fields(result)
        for var in VARIABLES:
            l2, h1 = _h1_errors(cur[var], ref[var], pts, weights)
            errors_l2[var].append(l2)
            errors_h1[var].append(h1)

    hs = np.log2([1.0 / n for n in levels[:-1]])

    def fit(errs):
        e = np.log2(np.maximum(errs, 1e-300))
        if len(e) == 1:
            return float("nan")
        slope = np.polyfit(hs, e, 1)[0]
        return float(slope)

    def pairwise(errs):
        out = []
        for (e0, n0), (e1, n1) in zip(
            zip(errs, levels), zip(errs[1:], levels[1:])
        ):
            out.append(float(np.log2(e0 / e1) / np.log2(n1 / n0)))
        return out

    return ConvergenceReport(
        scenario=base.scenario,
        degree=base.degree,
        levels=levels,
        t_final=t_final,
        errors_h1=errors_h1,
        errors_l2=errors_l2,
        eoc_h1={v: fit(errors_h1[v]) for v in VARIABLES},
        eoc_l2={v: fit(errors_l2[v]) for v in VARIABLES},
        pairwise_h1={v: pairwise(errors_h1[v]) for v in VARIABLES},
    )


def save_report(report: ConvergenceReport, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(report.to_json() + "\n")
    return path
