"""Shared fixtures: seeded generators, small grids and random films."""

from __future__ import annotations

import numpy as np
import pytest

from filmlab.diagnostics.corpus import (
    oscillation_constrained_field,
    random_positive_field,
    random_test_function,
)
from filmlab.mesh import Field, Grid
from filmlab.noise import NoiseSpec
from filmlab.physics import ModelParams


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240611)


@pytest.fixture
def grid4() -> Grid:
    return Grid(L=1.0, L_h=4)


@pytest.fixture
def alternating(grid4) -> Field:
    """(1, 2, 1, 2) on four nodes, h = 0.25."""
    return Field(grid4, np.array([1.0, 2.0, 1.0, 2.0]))


@pytest.fixture
def params() -> ModelParams:
    return ModelParams(n=2.5, p=4.0, c_F=0.05, L=1.0, kappa=1.0, S=0.05)


@pytest.fixture
def spec() -> NoiseSpec:
    return NoiseSpec(lambdas=[(0, 0.02), (1, 0.02)], seed=7)


@pytest.fixture
def positive_field(rng):
    def make(L_h: int = 16, low: float = 0.5, high: float = 1.5) -> Field:
        return random_positive_field(Grid(1.0, L_h), rng, low, high)
    return make


@pytest.fixture
def constrained_field(rng):
    def make(L_h: int, ratio_bound: float) -> Field:
        return oscillation_constrained_field(Grid(1.0, L_h), rng, ratio_bound)
    return make


@pytest.fixture
def test_function(rng):
    def make(grid: Grid) -> Field:
        return random_test_function(grid, rng)
    return make
