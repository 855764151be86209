"""
FILMLAB Physics — Potential, Mobilities, Entropy, Functionals

Power-law interface potential F(u) = c_F u^-p, the cutoff mobility
m_sigma(u) = max(sigma, u)^n, the entropy-consistent element mobility and
the discrete entropy pair (G_h, g_h). Every integral of 1/m_sigma is taken
in closed form, split at sigma.
"""

from __future__ import annotations

import math

import numpy as np
from pydantic import BaseModel, ConfigDict, Field as PydanticField

from filmlab.governance import DomainError
from filmlab.mesh import Field, h1_seminorm_sq


# ---------------------------------------------------------------------------
# Parameters
# ---------------------------------------------------------------------------

class ModelParams(BaseModel):
    """
    Physical parameters of one run.

    The schema accepts the wider ranges the closed forms are defined on
    (n = 2, c_F = 0 are useful reference cases); `check_hypotheses` enforces
    the ranges a simulation needs.
    """
    model_config = ConfigDict(frozen=True)

    n: float = PydanticField(gt=0.0)
    p: float = PydanticField(gt=0.0)
    c_F: float = PydanticField(ge=0.0)
    L: float = PydanticField(default=1.0, gt=0.0)
    kappa: float = PydanticField(ge=0.0)
    S: float = PydanticField(default=0.0, ge=0.0)

    @property
    def c_osc(self) -> float:
        return c_osc(self.c_F)

    def sigma(self, h: float) -> float:
        return cutoff_sigma(h, self.p)

    def check_hypotheses(self) -> None:
        if not 2.0 < self.n < 3.0:
            raise DomainError(f"mobility exponent must satisfy 2 < n < 3, got n={self.n!r}")
        if not self.p > self.n:
            raise DomainError(f"potential exponent must exceed n, got p={self.p!r}, n={self.n!r}")
        if not self.c_F > 0.0:
            raise DomainError(f"potential strength must be positive, got c_F={self.c_F!r}")


def c_osc(c_F: float) -> float:
    """Bound on neighbouring nodal ratios below the energy threshold."""
    return 1.0 + math.sqrt(2.0 * c_F)


def positivity_floor(h: float, p: float) -> float:
    """h^(2/(p+2)): the film thickness floor below the energy threshold."""
    return h ** (2.0 / (p + 2.0))


def oscillation_threshold(h: float, c_F: float, p: float) -> float:
    """c_F h^(-(p-2)/(p+2)); below this energy the floor and ratio bounds hold."""
    return c_F * h ** (-(p - 2.0) / (p + 2.0))


# ---------------------------------------------------------------------------
# Potential
# ---------------------------------------------------------------------------

def potential(u, params: ModelParams):
    """F(u) = c_F u^-p, and +inf for u <= 0."""
    u = np.asarray(u, dtype=np.float64)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        out = np.where(u > 0.0, params.c_F * np.abs(u) ** (-params.p), np.inf)
    return out if out.ndim else float(out)


def _require_positive(u: np.ndarray, what: str) -> None:
    if np.any(~(u > 0.0)):
        raise DomainError(f"{what} is undefined for nonpositive arguments (min={np.min(u)!r})")


def potential_d1(u, params: ModelParams):
    u = np.asarray(u, dtype=np.float64)
    _require_positive(u, "F'")
    out = -params.p * params.c_F * u ** (-params.p - 1.0)
    return out if out.ndim else float(out)


def potential_d2(u, params: ModelParams):
    u = np.asarray(u, dtype=np.float64)
    _require_positive(u, "F''")
    out = params.p * (params.p + 1.0) * params.c_F * u ** (-params.p - 2.0)
    return out if out.ndim else float(out)


# ---------------------------------------------------------------------------
# Mobilities
# ---------------------------------------------------------------------------

def cutoff_sigma(h: float, p: float) -> float:
    if not 0.0 < h <= 1.0:
        raise DomainError(f"cutoff needs h in (0, 1], got h={h!r}")
    if not p > 0.0:
        raise DomainError(f"cutoff needs p > 0, got p={p!r}")
    return 0.5 * h ** (2.0 / (p + 2.0))


def shifted_mobility(s, sigma: float, n: float):
    out = np.maximum(sigma, np.asarray(s, dtype=np.float64)) ** n
    return out if out.ndim else float(out)


def power_integral(a, b, q: float):
    """Oriented integral of tau^-q from a to b, for a, b > 0."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    log_ratio = np.log(b / a)
    if q == 1.0:
        return log_ratio
    e = 1.0 - q
    return a ** e * np.expm1(e * log_ratio) / e


def inverse_mobility_moments(a, b, sigma: float, n: float) -> tuple[np.ndarray, np.ndarray]:
    """
    Oriented integrals of w and tau*w from a to b, w(tau) = 1/m_sigma(tau).

    The constant branch below sigma and the power branch above it are
    integrated separately; either part may be empty.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    lo = np.minimum(a, b)
    hi = np.maximum(a, b)
    sign = np.where(b >= a, 1.0, -1.0)

    w_low = sigma ** (-n)
    lo_c = np.minimum(lo, sigma)
    hi_c = np.minimum(hi, sigma)
    j0 = w_low * (hi_c - lo_c)
    j1 = w_low * (hi_c - lo_c) * (hi_c + lo_c) / 2.0

    lo_u = np.maximum(lo, sigma)
    hi_u = np.maximum(hi, sigma)
    j0 = j0 + power_integral(lo_u, hi_u, n)
    j1 = j1 + power_integral(lo_u, hi_u, n - 1.0)
    return sign * j0, sign * j1


def mobility_element(a, b, sigma: float, n: float):
    """(average of 1/m_sigma over [a, b])^-1, or m_sigma(a) when a = b."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    diff = b - a
    j0, _ = inverse_mobility_moments(a, b, sigma, n)
    same = (diff == 0.0) | (j0 == 0.0)
    out = np.where(same, np.maximum(sigma, a) ** n, diff / np.where(same, 1.0, j0))
    return out if out.ndim else float(out)


def element_mobilities(u: Field, sigma: float, n: float) -> np.ndarray:
    """M_h on every element I_i = [x_i, x_{i+1}]."""
    return np.asarray(mobility_element(u.values, np.roll(u.values, -1), sigma, n))


def mobility_root_field(u: Field, n: float) -> Field:
    return Field(u.grid, np.abs(u.values) ** (n / 2.0))


# ---------------------------------------------------------------------------
# Entropy pair
# ---------------------------------------------------------------------------

def entropy_density(s, sigma: float, n: float):
    """G_h(s) = int_1^s (s - tau) / m_sigma(tau) dtau, the double integral written once."""
    s = np.asarray(s, dtype=np.float64)
    j0, j1 = inverse_mobility_moments(1.0, s, sigma, n)
    out = np.maximum(s * j0 - j1, 0.0)
    return out if out.ndim else float(out)


def entropy_density_d1(s, sigma: float, n: float):
    """g_h(s) = int_1^s 1/m_sigma."""
    j0, _ = inverse_mobility_moments(1.0, s, sigma, n)
    out = np.asarray(j0)
    return out if out.ndim else float(out)


# ---------------------------------------------------------------------------
# Functionals
# ---------------------------------------------------------------------------

def energy(u: Field, params: ModelParams) -> float:
    """E_h = 1/2 int |u_x|^2 + h sum F(u_i); +inf if any node is nonpositive."""
    if np.any(u.values <= 0.0):
        return float("inf")
    return 0.5 * h1_seminorm_sq(u) + float(u.grid.h * np.sum(potential(u.values, params)))


def entropy_functional(u: Field, sigma: float, n: float) -> float:
    return float(u.grid.h * np.sum(entropy_density(u.values, sigma, n)))


def combined_quantity(u: Field, params: ModelParams) -> float:
    """R = E_h + kappa S_h."""
    e = energy(u, params)
    if params.kappa == 0.0:
        return e
    sigma = params.sigma(u.grid.h)
    return e + params.kappa * entropy_functional(u, sigma, params.n)
