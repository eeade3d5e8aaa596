"""Flat key-value run configuration.

The on-disk format is one `key = value` pair per line; blank lines and
`#` comments are ignored.  Unknown keys are an error.  `serialize`
produces a canonical form (fixed key order, shortest round-trip float
representation) so equal configs serialize identically.
"""

from __future__ import annotations

from dataclasses import dataclass, fields
from pathlib import Path

from .scenarios import PLANE_AMPLITUDE, SPHERE_CORNER_TEMPER, SPHERE_EXTENT


class ConfigError(Exception):
    """Raised for malformed config text or unknown keys."""


@dataclass
class ScenarioConfig:
    """Everything a flow run needs."""

    scenario: str = "perturbed_plane"
    degree: int = 2
    smoothness: int = 1
    elements_per_side: int = 20
    dt: float = 0.0015625
    t_final: float = 0.8
    snapshot_stride: int = 0
    output_dir: str = ""
    perturbation_amplitude: float = PLANE_AMPLITUDE
    patch_polar_extent: float = SPHERE_EXTENT
    patch_corner_temper: float = SPHERE_CORNER_TEMPER
    ritz_lambda: float = 10.0
    ritz_fp_tol: float = 1e-12
    ritz_fp_max_iter: int = 100
    ritz_lambda_growth: float = 4.0
    solver_residual_tol: float = 1e-9
    dump_matrices: bool = False

    def scenario_params(self):
        if self.scenario == "perturbed_plane":
            return {"amplitude": self.perturbation_amplitude}
        if self.scenario == "sphere_patch":
            return {
                "extent": self.patch_polar_extent,
                "temper": self.patch_corner_temper,
            }
        raise ConfigError(f"unknown scenario {self.scenario!r}")


_FIELDS = {f.name: f.type for f in fields(ScenarioConfig)}


def _parse_value(key: str, text: str):
    kind = _FIELDS[key]
    text = text.strip()
    try:
        if kind == "int":
            return int(text)
        if kind == "float":
            return float(text)
        if kind == "bool":
            if text.lower() in ("true", "1", "yes"):
                return True
            if text.lower() in ("false", "0", "no"):
                return False
            raise ValueError(text)
        return text
    except ValueError as exc:
        raise ConfigError(f"bad value for {key!r}: {text!r}") from exc


def parse_config(text: str) -> ScenarioConfig:
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, _, val = line.partition("=")
        key = key.strip()
        if key not in _FIELDS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        values[key] = _parse_value(key, val)
    return ScenarioConfig(**values)


def load_config(path) -> ScenarioConfig:
    return parse_config(Path(path).read_text())


def serialize_config(cfg: ScenarioConfig) -> str:
    lines = []
    for f in fields(ScenarioConfig):
        value = getattr(cfg, f.name)
        if f.type == "bool":
            value = "true" if value else "false"
        elif f.type == "float":
            value = repr(float(value))
        lines.append(f"{f.name} = {value}")
    return "\n".join(lines) + "\n"


def save_config(cfg: ScenarioConfig, path):
    Path(path).write_text(serialize_config(cfg))
