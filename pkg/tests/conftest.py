"""Shared fixtures: small spaces and cheap scenario discretizations."""

from __future__ import annotations

import numpy as np
import pytest

from mcflow.splines import build_quasi_interpolant, build_space


@pytest.fixture(scope="session")
def space_small():
    """p=2, C^1, 6 elements per side; 64 DOFs."""
    return build_space(2, 1, 6)


@pytest.fixture(scope="session")
def quasi_small(space_small):
    return build_quasi_interpolant(space_small)


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(20260814)


def interior_grid(n: int = 33, margin: float = 0.1):
    """Uniform sample grid at parametric distance >= margin from the boundary."""
    g = np.linspace(margin, 1.0 - margin, n)
    U, V = np.meshgrid(g, g, indexing="ij")
    return np.column_stack([U.ravel(), V.ravel()])
