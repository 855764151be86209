"""
FILMLAB Checks — Identity and Inequality Suite

Each check evaluates both sides of a discrete identity or inequality on one
field and returns a CheckResult:

  identity    — |lhs - rhs| relative to the termwise magnitude; fails above rtol
  inequality  — lhs - rhs must be >= 0 (up to sign_atol); a field outside the
                oscillation hypothesis is counted, never failed
  margin      — an empirical constant or margin, reported only

Results fold into a SuiteReport; folding is associative so a corpus can be
split across workers and merged in any grouping.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field as PydanticField

from filmlab.mesh import (
    Field,
    backward_diff,
    discrete_laplacian,
    forward_diff,
    h1_seminorm_sq,
    integral,
    lumped_inner,
    max_neighbour_ratio,
    stiffness,
)
from filmlab.noise import NoiseSpec, basis_eval, spectral_basis
from filmlab.operators import (
    a_delta,
    a_nabla,
    b_delta,
    b_delta_power_form,
    element_fluxes,
    flux_divergence,
    gradient_laplacian_form,
    mass_decomposition,
    mobility_pairing,
    pressure,
    require_positive,
)
from filmlab.physics import (
    ModelParams,
    entropy_density_d1,
    potential_d1,
    shifted_mobility,
)
from filmlab.diagnostics.quantities import ito_energy_term

Kind = Literal["identity", "inequality", "margin"]

_GAUSS_POINTS = 8

# Gauss-Legendre on [0, 1]
_GAUSS_NODES, _GAUSS_WEIGHTS = np.polynomial.legendre.leggauss(_GAUSS_POINTS)
_GAUSS_NODES = 0.5 * (_GAUSS_NODES + 1.0)
_GAUSS_WEIGHTS = 0.5 * _GAUSS_WEIGHTS


class SuiteTolerances(BaseModel):
    """Tolerances and the free parameters of the parametrized estimates."""
    model_config = ConfigDict(frozen=True)

    identity_rtol: float = PydanticField(default=1e-12, gt=0.0)
    sign_atol: float = PydanticField(default=1e-12, ge=0.0)
    epsilon: float = PydanticField(default=0.5, gt=0.0)
    eta: float = PydanticField(default=0.1, gt=0.0)
    delta: float = PydanticField(default=0.1, gt=0.0)
    alpha: float = 1.0
    exponent: float = 0.5


# ---------------------------------------------------------------------------
# Results
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CheckResult:
    name: str
    kind: Kind
    residual: float
    margin: float | None
    hypothesis_ok: bool = True
    passed: bool = True
    details: dict[str, float] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "kind": self.kind,
            "residual": self.residual,
            "margin": self.margin,
            "hypothesis_ok": self.hypothesis_ok,
        }


@dataclass
class CheckSummary:
    """Fold of every CheckResult with the same name."""
    name: str
    kind: Kind
    evaluated: int = 0
    failures: int = 0
    out_of_hypothesis: int = 0
    max_residual: float = 0.0
    min_margin: float | None = None
    max_margin: float | None = None

    def add(self, result: CheckResult) -> None:
        self.evaluated += 1
        self.failures += 0 if result.passed else 1
        self.out_of_hypothesis += 0 if result.hypothesis_ok else 1
        self.max_residual = max(self.max_residual, result.residual)
        if result.margin is not None and result.hypothesis_ok:
            self.min_margin = _fold(min, self.min_margin, result.margin)
            self.max_margin = _fold(max, self.max_margin, result.margin)

    def merge(self, other: CheckSummary) -> CheckSummary:
        return CheckSummary(
            name=self.name,
            kind=self.kind,
            evaluated=self.evaluated + other.evaluated,
            failures=self.failures + other.failures,
            out_of_hypothesis=self.out_of_hypothesis + other.out_of_hypothesis,
            max_residual=max(self.max_residual, other.max_residual),
            min_margin=_fold(min, self.min_margin, other.min_margin),
            max_margin=_fold(max, self.max_margin, other.max_margin),
        )

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "kind": self.kind,
            "evaluated": self.evaluated,
            "failures": self.failures,
            "out_of_hypothesis": self.out_of_hypothesis,
            "max_residual": self.max_residual,
            "min_margin": self.min_margin,
            "max_margin": self.max_margin,
        }


def _fold(op, a: float | None, b: float | None) -> float | None:
    if a is None:
        return b
    if b is None:
        return a
    return op(a, b)


@dataclass
class SuiteReport:
    fields: int = 0
    checks: dict[str, CheckSummary] = field(default_factory=dict)

    def add(self, results: list[CheckResult]) -> None:
        self.fields += 1
        for r in results:
            self.checks.setdefault(r.name, CheckSummary(r.name, r.kind)).add(r)

    def merge(self, other: SuiteReport) -> SuiteReport:
        merged = SuiteReport(fields=self.fields + other.fields)
        for name in sorted(set(self.checks) | set(other.checks)):
            mine, theirs = self.checks.get(name), other.checks.get(name)
            if mine is None or theirs is None:
                only = mine or theirs
                merged.checks[name] = only.merge(CheckSummary(only.name, only.kind))
            else:
                merged.checks[name] = mine.merge(theirs)
        return merged

    @property
    def identity_failures(self) -> int:
        return sum(c.failures for c in self.checks.values() if c.kind == "identity")

    @property
    def sign_failures(self) -> int:
        return sum(c.failures for c in self.checks.values() if c.kind == "inequality")

    @property
    def ok(self) -> bool:
        return self.identity_failures == 0 and self.sign_failures == 0

    def summary(self) -> dict:
        return {
            "fields": self.fields,
            "identity_failures": self.identity_failures,
            "sign_failures": self.sign_failures,
            "checks": [self.checks[name].to_dict() for name in sorted(self.checks)],
        }


# ---------------------------------------------------------------------------
# Check constructors
# ---------------------------------------------------------------------------

def _identity(name: str, lhs: float, rhs: float, scale: float, tol: SuiteTolerances) -> CheckResult:
    scale = max(scale, abs(lhs), abs(rhs))
    residual = abs(lhs - rhs) / scale if scale > 0.0 else abs(lhs - rhs)
    return CheckResult(name, "identity", residual, None, passed=residual <= tol.identity_rtol)


def _inequality(
    name: str, lhs: float, rhs: float, scale: float, hypothesis_ok: bool, tol: SuiteTolerances,
    details: dict[str, float] | None = None,
) -> CheckResult:
    scale = max(scale, abs(lhs), abs(rhs))
    margin = lhs - rhs
    residual = max(0.0, -margin) / scale if scale > 0.0 else max(0.0, -margin)
    holds = margin >= -tol.sign_atol * max(scale, 1.0)
    return CheckResult(
        name, "inequality", residual, margin,
        hypothesis_ok=hypothesis_ok,
        passed=holds or not hypothesis_ok,
        details=details or {},
    )


def _margin(name: str, value: float | None, hypothesis_ok: bool = True,
            details: dict[str, float] | None = None) -> CheckResult:
    if value is not None and not math.isfinite(value):
        value = None
    return CheckResult(name, "margin", 0.0, value, hypothesis_ok=hypothesis_ok, details=details or {})


def _ratio(num: float, den: float) -> float | None:
    return num / den if den > 0.0 else None


# ---------------------------------------------------------------------------
# Stencil magnitudes
# ---------------------------------------------------------------------------

def _a_form_scale(u: Field, v: np.ndarray, n: float) -> float:
    """Bound on the termwise magnitude of the A-form summands tested with v."""
    c = u.values
    q = c ** (n - 3.0)
    weights = np.roll(q, 1) + 2.0 * q + np.roll(q, -1)
    dp = forward_diff(u)
    dm = backward_diff(u)
    return float(abs(n - 2.0) * u.grid.h * np.sum(np.abs(v) * weights * (dp * dp + dm * dm)))


def _b_form_scale(u: Field, v: np.ndarray, n: float) -> float:
    lap = discrete_laplacian(u).values
    return float(u.grid.h * np.sum(np.abs(u.values ** (n - 2.0) * lap * v)))


# ---------------------------------------------------------------------------
# Noise-coefficient estimate
# ---------------------------------------------------------------------------

def noise_coefficient_sides(u: Field, ell: int, params: ModelParams) -> tuple[float, float]:
    """
    Both sides of the weighted noise-coefficient estimate for one mode with
    unit amplitude: h sum Z_i^2 / m_sigma(u_i) against the two element
    integrals of the shifted difference quotients (Gauss-Legendre).
    """
    require_positive(u)
    grid = u.grid
    h = grid.h
    n = params.n
    sigma = params.sigma(h)
    root = u.values ** (n / 2.0)
    weight = 1.0 / shifted_mobility(u.values, sigma, n)

    z = spectral_basis(grid, (ell,)).coefficients(root, np.ones(1))
    lhs = float(h * np.sum(z[0] ** 2 * weight))

    t, w = _GAUSS_NODES, _GAUSS_WEIGHTS
    # element ending at node k: x = k h + t h in 0-based storage
    start = np.arange(grid.L_h)[:, None] * h
    x = start + t[None, :] * h
    prev_root = np.roll(root, 1)[:, None]
    next_root = np.roll(root, -1)[:, None]
    m_here = prev_root + t[None, :] * (root[:, None] - prev_root)
    m_shift = root[:, None] + t[None, :] * (next_root - root[:, None])
    g_here = basis_eval(ell, x, grid.L)
    g_shift = basis_eval(ell, x + h, grid.L)

    first = ((m_shift - m_here) / h) ** 2 * g_here ** 2
    second = m_shift ** 2 * ((g_shift - g_here) / h) ** 2
    per_element = h * ((first + second) @ w)
    rhs = float(2.0 * np.sum(weight * per_element))
    return lhs, rhs


# ---------------------------------------------------------------------------
# Suite
# ---------------------------------------------------------------------------

def lemma_suite(
    u: Field,
    params: ModelParams,
    tolerances: SuiteTolerances | None = None,
    spec: NoiseSpec | None = None,
    c_strat: float | None = None,
    v: Field | None = None,
) -> list[CheckResult]:
    """Evaluate every identity, inequality and margin on one positive field."""
    require_positive(u)
    tol = tolerances or SuiteTolerances()
    n = params.n
    grid = u.grid
    h = grid.h
    c = u.values
    sigma = params.sigma(h)
    if v is None:
        v = Field(grid, np.cos(2.0 * np.pi * grid.nodes / grid.L) + 0.5)

    hyp = max_neighbour_ratio(u) <= params.c_osc * (1.0 + 1e-12)
    dp = forward_diff(u)
    dm = backward_diff(u)
    lap = discrete_laplacian(u)
    neg_lap = Field(grid, -lap.values)
    quartic = float(h * np.sum(c ** (n - 4.0) * dp ** 4))
    results: list[CheckResult] = []

    # -- porous-medium operator identities ---------------------------------
    results.append(_identity(
        "a_delta_equals_a_nabla", a_delta(u, v, n), a_nabla(u, v, n),
        _a_form_scale(u, v.values, n), tol,
    ))
    grad_lap = a_delta(u, neg_lap, n)
    results.append(_identity(
        "gradient_laplacian_endpoint", grad_lap, gradient_laplacian_form(u, n),
        _a_form_scale(u, neg_lap.values, n), tol,
    ))
    weighted_lap = float(h * np.sum(c ** (n - 2.0) * lap.values ** 2))
    results.append(_identity(
        "laplacian_weighted_identity", b_delta(u, neg_lap, n), weighted_lap, weighted_lap, tol,
    ))
    power = Field(grid, tol.alpha * c ** tol.exponent)
    results.append(_identity(
        "power_test_function_identity",
        b_delta(u, power, n), b_delta_power_form(u, tol.alpha, tol.exponent, n),
        _b_form_scale(u, power.values, n), tol,
    ))
    ones = np.ones(grid.L_h)
    one = Field(grid, ones)
    results.append(_identity(
        "mass_decomposition",
        a_delta(u, one, n) + b_delta(u, one, n), mass_decomposition(u, n),
        _a_form_scale(u, ones, n) + _b_form_scale(u, ones, n), tol,
    ))

    # -- flux and pressure identities --------------------------------------
    p = pressure(u, params)
    g = Field(grid, entropy_density_d1(c, sigma, n))
    flux = element_fluxes(u, p, params)
    gv = np.abs(g.values)
    flux_scale = float(np.sum(np.abs(flux) * (gv + np.roll(gv, -1))))
    results.append(_identity(
        "entropy_consistency", mobility_pairing(u, p, g, params), stiffness(p, u), flux_scale, tol,
    ))
    pairing = mobility_pairing(u, p, v, params)
    results.append(_identity(
        "flux_pairing", lumped_inner(flux_divergence(u, p, params), v), -pairing,
        float(np.sum(np.abs(flux) * (np.abs(v.values) + np.abs(np.roll(v.values, -1))))), tol,
    ))
    results.append(_identity(
        "laplacian_variational", lumped_inner(lap, v), -stiffness(u, v),
        float(np.sum((np.abs(np.roll(c, -1)) + 2.0 * np.abs(c) + np.abs(np.roll(c, 1)))
                     * np.abs(v.values)) / h), tol,
    ))
    fp = Field(grid, potential_d1(c, params))
    split = mobility_pairing(u, p, fp, params) + mobility_pairing(u, p, neg_lap, params)
    results.append(_identity(
        "pressure_dissipation_split", split, mobility_pairing(u, p, p, params),
        abs(mobility_pairing(u, p, fp, params)) + abs(mobility_pairing(u, p, neg_lap, params)), tol,
    ))

    # -- inequalities under the oscillation hypothesis ---------------------
    coupling = float(h * np.sum(c ** (n - 4.0) * (dp * dp * dm * dm + dp ** 4)))
    lower = abs((n - 2.0) * (n - 3.0)) / 3.0 * (1.0 + params.c_osc) ** (n - 4.0) / 2.0 * coupling
    results.append(_inequality(
        "gradient_laplacian_lower_bound", grad_lap, lower,
        _a_form_scale(u, neg_lap.values, n), hyp, tol,
    ))
    singular_test = Field(grid, -(c ** (-params.p - 1.0)))
    singular = a_delta(u, singular_test, n)
    results.append(_inequality(
        "singular_potential_nonnegative", singular, 0.0,
        _a_form_scale(u, singular_test.values, n), hyp, tol,
    ))
    singular_ref = (n - 2.0) * float(h * np.sum(c ** (n - params.p - 4.0) * dp * dp))
    results.append(_margin("singular_potential_ratio", _ratio(singular, singular_ref), hyp))

    # -- entropy dissipation ------------------------------------------------
    q_log = float(h * np.sum(c ** -2.0 * dp * dp))
    bracket = (
        q_log - tol.epsilon * quartic - h * h * quartic
        - h * h * float(np.sum(c ** (n - 4.0) * dp * dp))
    )
    entropy_lhs = a_delta(u, g, n)
    results.append(_margin(
        "entropy_dissipation_ratio", _ratio(entropy_lhs, bracket), hyp,
        details={"lhs": entropy_lhs, "bracket": bracket, "q_log": q_log},
    ))

    # -- empirical constants -------------------------------------------------
    m_here = shifted_mobility(c, sigma, n)
    m_prev = np.roll(m_here, 1)
    c_prev = np.roll(c, 1)
    root_lhs = float(h * np.sum((1.0 / m_here + 1.0 / m_prev)
                                * ((c ** (n / 2.0) - c_prev ** (n / 2.0)) / h) ** 2))
    root_rhs = float(h * np.sum((c ** (n - 2.0) / m_here + c_prev ** (n - 2.0) / m_prev) * dm * dm))
    results.append(_margin("root_mobility_ratio", _ratio(root_lhs, root_rhs), hyp))

    remainder = float(np.max(np.maximum(c ** (n - 2.0) / m_here - tol.delta * c ** (-params.p - 2.0), 0.0)))
    results.append(_margin("mobility_remainder", remainder, hyp))

    mass = integral(u)
    gronwall = mass ** ((n + 2.0) / (4.0 - n)) + mass ** n
    slope_sq = h1_seminorm_sq(u)
    porous = max(0.0, float(h * np.sum(c ** n)) - tol.delta * slope_sq)
    results.append(_margin("porous_medium_constant", _ratio(porous, gronwall), hyp))
    weighted_grad = float(h * np.sum(c ** (n - 2.0) * dp * dp))
    excess = max(0.0, weighted_grad - tol.delta * quartic - tol.delta * slope_sq)
    results.append(_margin("weighted_gradient_constant", _ratio(excess, gronwall), hyp))

    # -- noise terms ---------------------------------------------------------
    if spec is not None:
        for ell, _ in spec.active_modes(grid):
            lhs, rhs = noise_coefficient_sides(u, ell, params)
            results.append(_inequality(f"noise_coefficient_estimate[{ell}]", rhs, lhs, rhs, True, tol))

        if c_strat is not None:
            ito = ito_energy_term(u, spec, n)
            four = float(h * np.sum(c ** (n - 4.0) * (dp ** 4 + 2.0 * dp * dp * dm * dm + dm ** 4)))
            bound = (1.0 + tol.eta) * c_strat * (
                (1.0 + tol.epsilon * (n - 2.0) / 2.0) * params.c_osc ** (n - 2.0) * weighted_lap
                + ((n - 2.0) ** 2 / 4.0 + (n - 2.0) / (2.0 * tol.epsilon))
                * params.c_osc ** (4.0 - n) * four
            )
            results.append(_margin(
                "ito_energy_bound", bound - ito, hyp,
                details={"ito": ito, "bound": bound, "weighted_gradient": weighted_grad,
                         "power_n": float(h * np.sum(c ** n))},
            ))
    return results
