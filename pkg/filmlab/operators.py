"""
FILMLAB Operators — Pressure, Flux, Stratonovich Correction

The drift of the scheme at node i splits into the conservative flux part
L_i/h (mobility-weighted pressure gradients) and the correction part
script-L_i/h built from the bilinear forms A_Delta and B_Delta.

Bilinear forms are evaluated through nodal summands: A(u, v) = h sum_i a_i v_i,
so testing with the hat function e_i reads off a_i directly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from filmlab.governance import PositivityError
from filmlab.mesh import Field, check_same_grid, discrete_laplacian, forward_diff
from filmlab.physics import ModelParams, element_mobilities, potential_d1


# ---------------------------------------------------------------------------
# Types
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DriftParts:
    """Deterministic drift at one state, split by origin."""
    flux_part: Field
    correction_part: Field
    pressure: Field

    @property
    def total(self) -> Field:
        return self.flux_part.with_values(self.flux_part.values + self.correction_part.values)

    def flux_mass_residual(self) -> float:
        return float(self.flux_part.grid.h * np.sum(self.flux_part.values))


def require_positive(u: Field) -> None:
    if np.any(~(u.values > 0.0)):
        i = int(np.argmin(u.values))
        raise PositivityError(f"node {i + 1} has nonpositive value {u.values[i]!r}")


def power_difference_quotient(a, b, q: float):
    """(b^q - a^q)/(b - a) for positive a, b, with the limit q a^(q-1) at a = b."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    diff = b - a
    same = diff == 0.0
    safe = np.where(same, 1.0, diff)
    quotient = a ** q * np.expm1(q * np.log(b / a)) / safe
    return np.where(same, q * a ** (q - 1.0), quotient)


# ---------------------------------------------------------------------------
# Pressure and flux
# ---------------------------------------------------------------------------

def pressure(u: Field, params: ModelParams) -> Field:
    """p = -Delta_h u + F'(u), the lumped solution of the pressure equation."""
    require_positive(u)
    return Field(u.grid, -discrete_laplacian(u).values + potential_d1(u.values, params))


def element_fluxes(u: Field, p: Field, params: ModelParams) -> np.ndarray:
    """M_h p_x on every element."""
    check_same_grid(u, p)
    sigma = params.sigma(u.grid.h)
    return element_mobilities(u, sigma, params.n) * forward_diff(p)


def flux_divergence(u: Field, p: Field, params: ModelParams) -> Field:
    """L_i/h = (1/h)[M_{i+1/2} (p_{i+1}-p_i)/h - M_{i-1/2} (p_i-p_{i-1})/h]."""
    flux = element_fluxes(u, p, params)
    return Field(u.grid, (flux - np.roll(flux, 1)) / u.grid.h)


def mobility_pairing(u: Field, p: Field, w: Field, params: ModelParams) -> float:
    """int M_h p_x w_x, elementwise constant slopes."""
    return float(u.grid.h * np.sum(element_fluxes(u, p, params) * forward_diff(w)))


# ---------------------------------------------------------------------------
# Correction operators
# ---------------------------------------------------------------------------

def _stencil(u: Field, n: float):
    h = u.grid.h
    c = u.values
    a = np.roll(c, 1)
    d = np.roll(c, -1)
    q = c ** (n - 3.0)
    return h, a, c, d, np.roll(q, 1), q, np.roll(q, -1)


def a_delta_nodal(u: Field, n: float) -> np.ndarray:
    require_positive(u)
    h, a, c, d, P, Q, R = _stencil(u, n)
    dp = (d - c) / h
    dm = (c - a) / h
    central = (d - a) / (2.0 * h)
    first = Q * (dm * dm + dp * dp)
    second = ((Q + R) * dp + (P + Q) * dm) * central
    return -(n - 2.0) / 6.0 * (first + second)


def a_nabla_nodal(u: Field, n: float) -> np.ndarray:
    require_positive(u)
    h, a, c, d, P, Q, R = _stencil(u, n)
    dp2 = ((d - c) / h) ** 2
    dm2 = ((c - a) / h) ** 2
    wide2 = ((d - a) / h) ** 2
    out = -(n - 2.0) / 12.0 * ((Q + R) * dp2 + (Q + P) * dm2)
    out -= (n - 2.0) / 24.0 * (R + 2.0 * Q + P) * wide2
    out -= (n - 2.0) / 24.0 * (2.0 * Q - R - P) * (dp2 + dm2)
    return out


def b_delta_nodal(u: Field, n: float) -> np.ndarray:
    require_positive(u)
    return -(u.values ** (n - 2.0)) * discrete_laplacian(u).values


def _pair(u: Field, nodal: np.ndarray, v: Field) -> float:
    check_same_grid(u, v)
    return float(u.grid.h * np.sum(nodal * v.values))


def a_delta(u: Field, v: Field, n: float) -> float:
    return _pair(u, a_delta_nodal(u, n), v)


def a_nabla(u: Field, v: Field, n: float) -> float:
    return _pair(u, a_nabla_nodal(u, n), v)


def b_delta(u: Field, v: Field, n: float) -> float:
    """-h sum_i u_i^(n-2) (Delta_h u)_i v_i."""
    return _pair(u, b_delta_nodal(u, n), v)


def correction_drift(u: Field, params: ModelParams, c_strat: float) -> Field:
    """Node i carries -(C_Strat + S)/h [A_Delta(u, e_i) + B_Delta(u, e_i)]."""
    weight = c_strat + params.S
    if weight == 0.0:
        require_positive(u)
        return Field(u.grid, np.zeros(u.grid.L_h))
    return Field(u.grid, -weight * (a_delta_nodal(u, params.n) + b_delta_nodal(u, params.n)))


def drift_parts(u: Field, params: ModelParams, c_strat: float) -> DriftParts:
    p = pressure(u, params)
    return DriftParts(
        flux_part=flux_divergence(u, p, params),
        correction_part=correction_drift(u, params, c_strat),
        pressure=p,
    )


# ---------------------------------------------------------------------------
# Endpoint forms
# ---------------------------------------------------------------------------

def gradient_laplacian_form(u: Field, n: float) -> float:
    """
    A_Delta(u, -Delta_h u) after summation by parts:
    (n-2)/12 h sum dp_i (u_i^(n-3) - u_{i+1}^(n-3))/h (dm_i^2 + 2 dp_i^2 + dp_{i+1}^2).
    """
    require_positive(u)
    h, a, c, d, _, Q, R = _stencil(u, n)
    dp = (d - c) / h
    dm = (c - a) / h
    dp_next = np.roll(dp, -1)
    terms = dp * (Q - R) / h * (dm * dm + 2.0 * dp * dp + dp_next * dp_next)
    return float((n - 2.0) / 12.0 * h * np.sum(terms))


def b_delta_power_form(u: Field, alpha: float, s: float, n: float) -> float:
    """B_Delta(u, alpha I_h[u^s]) = alpha h sum DQ_i |dp_i|^2, DQ_i the quotient of u^(s+n-2)."""
    require_positive(u)
    c = u.values
    d = np.roll(c, -1)
    dp = (d - c) / u.grid.h
    dq = power_difference_quotient(c, d, s + n - 2.0)
    return float(alpha * u.grid.h * np.sum(dq * dp * dp))


def mass_decomposition(u: Field, n: float) -> float:
    """A_Delta(u, 1) + B_Delta(u, 1) from its three-term A part and the quotient form of B."""
    require_positive(u)
    h, a, c, d, P, Q, R = _stencil(u, n)
    dm = (c - a) / h
    lap = (d - 2.0 * c + a) / (h * h)
    a_part = 5.0 * np.sum((Q + P) * dm * dm)
    a_part += np.sum((R + Q) * dm * dm)
    a_part += np.sum((R + 2.0 * Q + P) * lap * (c - a))
    b_part = np.sum(power_difference_quotient(a, c, n - 2.0) * dm * dm)
    return float(-(n - 2.0) / 12.0 * h * a_part + h * b_part)
