"""
FILMLAB Mesh — Periodic Linear Finite Elements

The space X_h of periodic piecewise-linear functions on a uniform mesh of
[0, L] with L_h nodes. A Field stores the nodal values a_1..a_{L_h} at
x_i = i*h; index arithmetic is cyclic, so a_0 is a_{L_h} (the last stored
value) and a_{L_h+1} is a_1 (the first stored value).

All operations are pure functions of immutable inputs.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from loguru import logger

from filmlab.governance import DimensionError


# ---------------------------------------------------------------------------
# Types
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Grid:
    """Uniform periodic mesh of [0, L] with L_h nodes."""
    L: float
    L_h: int

    def __post_init__(self) -> None:
        if not self.L > 0.0:
            raise DimensionError(f"domain length must be positive, got L={self.L!r}")
        if int(self.L_h) != self.L_h or self.L_h < 3:
            raise DimensionError(f"need an integer L_h >= 3, got L_h={self.L_h!r}")
        object.__setattr__(self, "L", float(self.L))
        object.__setattr__(self, "L_h", int(self.L_h))

    @property
    def h(self) -> float:
        return self.L / self.L_h

    @property
    def nodes(self) -> np.ndarray:
        """Node positions h, 2h, ..., L (the last node is identified with 0)."""
        return (np.arange(self.L_h) + 1.0) * self.h

    @classmethod
    def from_h(cls, L: float, h: float) -> Grid:
        L_h = int(round(L / h))
        if abs(L_h * h - L) > 1e-12 * L:
            raise DimensionError(f"h={h!r} does not divide L={L!r}")
        return cls(L=L, L_h=L_h)


@dataclass(frozen=True)
class Field:
    """Nodal values of an element of X_h. The stored array is read-only."""
    grid: Grid
    values: np.ndarray = field(repr=False)

    def __post_init__(self) -> None:
        values = np.array(self.values, dtype=np.float64)
        if values.ndim != 1 or values.shape[0] != self.grid.L_h:
            raise DimensionError(
                f"expected {self.grid.L_h} nodal values, got shape {values.shape}"
            )
        values.flags.writeable = False
        object.__setattr__(self, "values", values)

    def __getitem__(self, i: int) -> float:
        """Value at documentation index i (1-based, periodic)."""
        return float(self.values[(i - 1) % self.grid.L_h])

    def __len__(self) -> int:
        return self.grid.L_h

    def with_values(self, values: np.ndarray) -> Field:
        return Field(self.grid, values)


def constant(grid: Grid, c: float) -> Field:
    return Field(grid, np.full(grid.L_h, float(c)))


def cyclic_shift(f: Field, k: int) -> Field:
    """Relabel nodes i -> i + k."""
    return Field(f.grid, np.roll(f.values, k))


def check_same_grid(f: Field, g: Field) -> None:
    if f.grid != g.grid:
        raise DimensionError(f"grid mismatch: {f.grid} vs {g.grid}")


# ---------------------------------------------------------------------------
# Products and difference operators
# ---------------------------------------------------------------------------

def lumped_inner(f: Field, g: Field) -> float:
    """(f, g)_h = h * sum_i f_i g_i."""
    check_same_grid(f, g)
    return float(f.grid.h * np.sum(f.values * g.values))


def forward_diff(f: Field) -> np.ndarray:
    """(f_{i+1} - f_i)/h, one entry per element I_i = [x_i, x_{i+1}]."""
    return (np.roll(f.values, -1) - f.values) / f.grid.h


def backward_diff(f: Field) -> np.ndarray:
    """(f_i - f_{i-1})/h; the backward quotient at node i is the forward one at i-1."""
    return (f.values - np.roll(f.values, 1)) / f.grid.h


def discrete_laplacian(f: Field) -> Field:
    h = f.grid.h
    u = f.values
    return Field(f.grid, (np.roll(u, -1) - 2.0 * u + np.roll(u, 1)) / (h * h))


def stiffness(f: Field, g: Field) -> float:
    """The exact integral of f_x g_x over one period (slopes are elementwise constant)."""
    check_same_grid(f, g)
    return float(f.grid.h * np.sum(forward_diff(f) * forward_diff(g)))


def interpolate(psi: Callable[[np.ndarray], np.ndarray | float], grid: Grid) -> Field:
    """Nodal interpolant I_h[psi]; psi is evaluated on the node array."""
    ends = np.asarray(psi(np.array([0.0, grid.L])), dtype=np.float64)
    if ends.ndim == 1 and ends.shape[0] == 2 and not np.isclose(ends[0], ends[1], rtol=1e-10, atol=1e-12):
        logger.warning(f"[MESH] interpolating a non-periodic function: psi(0)={ends[0]}, psi(L)={ends[1]}")
    values = np.broadcast_to(np.asarray(psi(grid.nodes), dtype=np.float64), (grid.L_h,))
    return Field(grid, values)


# ---------------------------------------------------------------------------
# Reductions
# ---------------------------------------------------------------------------

def mean(f: Field) -> float:
    return float(f.grid.h * np.sum(f.values) / f.grid.L)


def integral(f: Field) -> float:
    """Exact integral of the piecewise-linear function (equal to the lumped mass)."""
    return float(f.grid.h * np.sum(f.values))


def h1_seminorm_sq(f: Field) -> float:
    d = forward_diff(f)
    return float(f.grid.h * np.sum(d * d))


def lumped_norm_sq(f: Field) -> float:
    return float(f.grid.h * np.sum(f.values * f.values))


def min_value(f: Field) -> float:
    return float(np.min(f.values))


def max_value(f: Field) -> float:
    return float(np.max(f.values))


def max_neighbour_ratio(f: Field) -> float:
    """max_i max(u_i/u_{i+1}, u_{i+1}/u_i) for a positive field; +inf otherwise."""
    u = f.values
    if np.any(u <= 0.0):
        return float("inf")
    r = u / np.roll(u, -1)
    return float(np.max(np.maximum(r, 1.0 / r)))
