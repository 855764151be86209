"""
FILMLAB Diagnostics — Integral Quantities Along a Path

Every integrand of the moment estimates, evaluated by literal summation on
the nodal values. All quantities are invariant under cyclic relabeling.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np

from filmlab.governance import ConfigurationError
from filmlab.mesh import (
    Field,
    backward_diff,
    discrete_laplacian,
    forward_diff,
    h1_seminorm_sq,
    lumped_norm_sq,
    max_neighbour_ratio,
    mean,
    min_value,
)
from filmlab.noise import NoiseSpec, coefficient_matrix, spectral_basis
from filmlab.operators import (
    a_delta_nodal,
    b_delta_nodal,
    mobility_pairing,
    require_positive,
)
from filmlab.physics import (
    ModelParams,
    combined_quantity,
    energy,
    entropy_density_d1,
    entropy_functional,
    oscillation_threshold,
    positivity_floor,
    potential_d1,
    potential_d2,
    power_integral,
    shifted_mobility,
)

_RATIO_SLACK = 1e-12


# ---------------------------------------------------------------------------
# Record
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DiagnosticsRecord:
    time: float
    energy: float
    entropy: float
    combined_R: float
    osc_ratio: float
    min_u: float
    mean_u: float
    q_pressure: float
    q_laplacian: float
    q_quartic: float
    q_weighted_lap: float
    q_singular: float
    q_log: float
    q_entropy_diss: float
    q_pressure_h1: float
    ito_energy: float

    def as_row(self) -> dict[str, float]:
        return asdict(self)


QUANTITY_NAMES = (
    "q_pressure", "q_laplacian", "q_quartic", "q_weighted_lap",
    "q_singular", "q_log", "q_entropy_diss", "q_pressure_h1", "ito_energy",
)


def averaged_inverse_power(a, b, q: float):
    """Average of tau^-q over [a, b] for positive endpoints; a^-q when a = b."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    diff = b - a
    same = diff == 0.0
    integral = power_integral(a, np.where(same, a + 1.0, b), q)
    out = np.where(same, a ** (-q), integral / np.where(same, 1.0, diff))
    return out if out.ndim else float(out)


def record(
    u: Field,
    p: Field,
    params: ModelParams,
    spec: NoiseSpec | None = None,
    time: float = 0.0,
) -> DiagnosticsRecord:
    require_positive(u)
    c = u.values
    n = params.n
    h = u.grid.h
    dp = forward_diff(u)
    dm = backward_diff(u)
    lap = discrete_laplacian(u).values
    sigma = params.sigma(h)

    return DiagnosticsRecord(
        time=time,
        energy=energy(u, params),
        entropy=entropy_functional(u, sigma, n),
        combined_R=combined_quantity(u, params),
        osc_ratio=max_neighbour_ratio(u),
        min_u=min_value(u),
        mean_u=mean(u),
        q_pressure=mobility_pairing(u, p, p, params),
        q_laplacian=float(h * np.sum(lap * lap)),
        q_quartic=float(h * np.sum(c ** (n - 4.0) * dp ** 4)),
        q_weighted_lap=float(h * np.sum(c ** (n - 2.0) * lap * lap)),
        q_singular=float(h * np.sum(c ** (n - params.p - 4.0) * dp * dp)),
        q_log=float(h * np.sum(c ** -2.0 * dp * dp)),
        q_entropy_diss=float(
            h * np.sum(averaged_inverse_power(np.roll(c, 1), c, params.p + 2.0) * dm * dm)
        ),
        q_pressure_h1=h1_seminorm_sq(p) + lumped_norm_sq(p),
        ito_energy=ito_energy_term(u, spec, n) if spec is not None else 0.0,
    )


# ---------------------------------------------------------------------------
# Time regularity
# ---------------------------------------------------------------------------

def holder_quotient(
    times: Sequence[float],
    fields: Sequence[Field],
    max_pairs: int = 10_000,
) -> float:
    """max over sampled pairs of ||u(t1) - u(t2)||_h^2 / |t1 - t2|^(1/2)."""
    if len(times) != len(fields):
        raise ConfigurationError("holder_quotient needs one time per field")
    if len(fields) < 2:
        raise ConfigurationError("holder_quotient needs at least 2 samples")

    first, second = np.triu_indices(len(fields), k=1)
    if first.shape[0] > max_pairs:
        pick = np.unique(np.linspace(0, first.shape[0] - 1, max_pairs).astype(np.int64))
        first, second = first[pick], second[pick]

    best = 0.0
    for i, j in zip(first, second):
        gap = abs(times[j] - times[i])
        if gap == 0.0:
            continue
        diff = fields[i].with_values(fields[i].values - fields[j].values)
        best = max(best, lumped_norm_sq(diff) / gap ** 0.5)
    return best


# ---------------------------------------------------------------------------
# Ito terms
# ---------------------------------------------------------------------------

def _second_difference_energy(z: np.ndarray, h: float) -> float:
    """1/2 h sum_i |(z_{i+1} - z_i)/h|^2 summed over rows (real or complex)."""
    dz = (np.roll(z, -1, axis=-1) - z) / h
    return float(0.5 * h * np.sum(np.abs(dz) ** 2))


def ito_energy_term(u: Field, spec: NoiseSpec, n: float, one_sided: bool = False) -> float:
    """
    Ito contribution of the noise to the surface energy per unit time.

    With `one_sided`, modes l >= 1 are evaluated through the complex mode
    sqrt(2/L) e^{ikx} carrying lambda_l, which for a balanced spec equals
    the sine/cosine pair.
    """
    require_positive(u)
    h = u.grid.h
    if not one_sided:
        _, z = coefficient_matrix(u, spec, n)
        return _second_difference_energy(z, h)

    root = u.values ** (n / 2.0)
    total = 0.0
    for ell, lam in spec.active_modes(u.grid):
        if ell < 0:
            continue
        if ell == 0:
            z = spectral_basis(u.grid, (0,)).coefficients(root, np.array([lam]))
            total += _second_difference_energy(z, h)
            continue
        left, right = spectral_basis(u.grid, (ell,)).complex_integrals(ell)
        e = left * root + right * np.roll(root, -1)
        z = lam / (h * h) * (e - np.roll(e, 1))
        total += _second_difference_energy(z, h)
    return total


@dataclass(frozen=True)
class ItoDriftTerms:
    """dt-coefficients in the Ito expansion of E_h and kappa S_h at one state."""
    entropy_dissipation: float
    entropy_correction: float
    entropy_ito: float
    potential_dissipation: float
    surface_dissipation: float
    pressure_dissipation: float
    potential_ito: float
    surface_ito: float
    potential_correction: float
    surface_correction: float

    @property
    def energy_total(self) -> float:
        return (
            self.potential_dissipation + self.surface_dissipation + self.potential_ito
            + self.surface_ito + self.potential_correction + self.surface_correction
        )

    @property
    def entropy_total(self) -> float:
        return self.entropy_dissipation + self.entropy_correction + self.entropy_ito


def ito_drift_terms(u: Field, params: ModelParams, spec: NoiseSpec, c_strat: float) -> ItoDriftTerms:
    require_positive(u)
    n = params.n
    h = u.grid.h
    sigma = params.sigma(h)
    weight = c_strat + params.S
    kappa = params.kappa

    lap = discrete_laplacian(u)
    p = Field(u.grid, -lap.values + potential_d1(u.values, params))
    g = Field(u.grid, entropy_density_d1(u.values, sigma, n))
    fp = Field(u.grid, potential_d1(u.values, params))
    neg_lap = Field(u.grid, -lap.values)

    correction = a_delta_nodal(u, n) + b_delta_nodal(u, n)
    _, z = coefficient_matrix(u, spec, n)
    z2 = np.sum(z * z, axis=0)

    return ItoDriftTerms(
        entropy_dissipation=-kappa * mobility_pairing(u, p, g, params),
        entropy_correction=-kappa * weight * float(h * np.sum(correction * g.values)),
        entropy_ito=0.5 * kappa * float(h * np.sum(z2 / shifted_mobility(u.values, sigma, n))),
        potential_dissipation=-mobility_pairing(u, p, fp, params),
        surface_dissipation=-mobility_pairing(u, p, neg_lap, params),
        pressure_dissipation=-mobility_pairing(u, p, p, params),
        potential_ito=0.5 * float(h * np.sum(potential_d2(u.values, params) * z2)),
        surface_ito=_second_difference_energy(z, h),
        potential_correction=-weight * float(h * np.sum(correction * fp.values)),
        surface_correction=weight * float(h * np.sum(correction * lap.values)),
    )


# ---------------------------------------------------------------------------
# Oscillation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class OscillationCheck:
    applies: bool
    min_ok: bool
    mean_ok: bool
    ratio_ok: bool

    @property
    def violated(self) -> bool:
        return self.applies and not (self.min_ok and self.mean_ok and self.ratio_ok)


def oscillation_check(u: Field, params: ModelParams) -> OscillationCheck:
    """Below c_F h^(-(p-2)/(p+2)) the film keeps the thickness floor and the ratio bound."""
    h = u.grid.h
    e = energy(u, params)
    applies = e <= oscillation_threshold(h, params.c_F, params.p)
    floor = positivity_floor(h, params.p) * (1.0 - _RATIO_SLACK)
    return OscillationCheck(
        applies=bool(applies),
        min_ok=min_value(u) >= floor,
        mean_ok=mean(u) >= floor,
        ratio_ok=max_neighbour_ratio(u) <= params.c_osc * (1.0 + _RATIO_SLACK),
    )
