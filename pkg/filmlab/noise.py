"""
FILMLAB Noise — Spectral Q-Wiener Forcing

Trigonometric eigenbasis g_l, amplitudes lambda_l, the stochastic
coefficients Z_i(lambda_l g_l) and one Euler-Maruyama noise increment.

Element integrals of (hat function) x (sin/cos) are exact: on an element
[x0, x0 + h] with t = (x - x0)/h,

    int t e^{ikx} dx = h e^{ik x0} int_0^1 t e^{i theta t} dt,   theta = kh,

and sin/cos take the imaginary/real parts. Small theta uses the power series.

Every (path, mode) pair owns its own counter-based Philox stream derived
from the master seed, so the order in which paths run never changes a draw.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property, lru_cache

import numpy as np
from loguru import logger
from pydantic import BaseModel, ConfigDict, Field as PydanticField, model_validator

from filmlab.governance import ConfigurationError, DomainError, NoiseStreamError
from filmlab.mesh import Field, Grid
from filmlab.operators import require_positive
from filmlab.physics import c_osc


# ---------------------------------------------------------------------------
# Spec
# ---------------------------------------------------------------------------

class NoiseSpec(BaseModel):
    """
    Noise amplitudes and seed policy.

    `lambdas` accepts a mapping or a list of [l, lambda] pairs. With
    `balanced` set, entries given only for l >= 0 are mirrored to -l.
    """
    model_config = ConfigDict(frozen=True)

    lambdas: dict[int, float] = PydanticField(default_factory=dict)
    cutoff: int | None = PydanticField(default=None, ge=0)
    L: float = PydanticField(default=1.0, gt=0.0)
    seed: int = PydanticField(default=0, ge=0, lt=2 ** 64)
    balanced: bool = True

    @model_validator(mode="before")
    @classmethod
    def _normalize_lambdas(cls, data):
        if not isinstance(data, dict):
            return data
        raw = data.get("lambdas", {})
        pairs = raw.items() if isinstance(raw, dict) else raw
        lambdas: dict[int, float] = {}
        for entry in pairs:
            try:
                ell, lam = entry
                ell_i = int(ell)
                if ell_i != float(ell):
                    raise ValueError
            except (TypeError, ValueError):
                raise ValueError(f"noise.lambdas entries must be [integer l, lambda], got {entry!r}")
            if ell_i in lambdas and lambdas[ell_i] != float(lam):
                raise ValueError(f"noise.lambdas lists mode {ell_i} twice")
            lambdas[ell_i] = float(lam)

        if data.get("balanced", True):
            for ell, lam in list(lambdas.items()):
                mirror = lambdas.get(-ell)
                if mirror is None:
                    lambdas[-ell] = lam
                elif mirror != lam:
                    raise ValueError(
                        f"balanced noise needs lambda_l = lambda_-l, got l={ell}: {lam} vs {mirror}"
                    )
        return {**data, "lambdas": lambdas}

    @model_validator(mode="after")
    def _check_amplitudes(self) -> NoiseSpec:
        for ell, lam in self.lambdas.items():
            if lam < 0.0 or not math.isfinite(lam):
                raise ValueError(f"noise amplitude for l={ell} must be finite and >= 0, got {lam}")
            if self.cutoff is not None and abs(ell) > self.cutoff:
                raise ValueError(f"mode l={ell} exceeds the cutoff N_h={self.cutoff}")
        return self

    def resolved_cutoff(self, grid: Grid) -> int:
        return self.cutoff if self.cutoff is not None else grid.L_h // 2

    def active_modes(self, grid: Grid) -> list[tuple[int, float]]:
        """Nonzero modes within the cutoff, in the fixed draw order (ascending l)."""
        n_h = self.resolved_cutoff(grid)
        return sorted((ell, lam) for ell, lam in self.lambdas.items() if lam > 0.0 and abs(ell) <= n_h)

    def is_balanced(self) -> bool:
        return all(self.lambdas.get(-ell, 0.0) == lam for ell, lam in self.lambdas.items())

    @property
    def h4_sum(self) -> float:
        """sum l^4 lambda_l^2, the coloring of the noise."""
        return float(sum(ell ** 4 * lam ** 2 for ell, lam in self.lambdas.items()))

    def scaled(self, factor: float) -> NoiseSpec:
        return self.model_copy(update={"lambdas": {k: v * factor for k, v in self.lambdas.items()}})


# ---------------------------------------------------------------------------
# Basis
# ---------------------------------------------------------------------------

def basis_eval(ell: int, x, L: float):
    x = np.asarray(x, dtype=np.float64)
    if ell == 0:
        out = np.full_like(x, 1.0 / math.sqrt(L))
    elif ell > 0:
        out = math.sqrt(2.0 / L) * np.sin(2.0 * math.pi * ell * x / L)
    else:
        out = math.sqrt(2.0 / L) * np.cos(2.0 * math.pi * ell * x / L)
    return out if out.ndim else float(out)


def basis_derivative(ell: int, x, L: float):
    x = np.asarray(x, dtype=np.float64)
    k = 2.0 * math.pi * ell / L
    if ell == 0:
        out = np.zeros_like(x)
    elif ell > 0:
        out = math.sqrt(2.0 / L) * k * np.cos(k * x)
    else:
        out = -math.sqrt(2.0 / L) * k * np.sin(k * x)
    return out if out.ndim else float(out)


_SERIES_THRESHOLD = 0.05
_SERIES_TERMS = 12


def hat_moments(theta: float) -> tuple[complex, complex]:
    """(int_0^1 e^{i theta t} dt, int_0^1 t e^{i theta t} dt)."""
    if abs(theta) < _SERIES_THRESHOLD:
        m0 = 0j
        m1 = 0j
        term = 1 + 0j
        for m in range(_SERIES_TERMS):
            if m:
                term *= 1j * theta / m
            m0 += term / (m + 1)
            m1 += term / (m + 2)
        return m0, m1
    e = complex(math.cos(theta), math.sin(theta))
    m0 = (e - 1.0) / (1j * theta)
    m1 = (e * (1.0 - 1j * theta) - 1.0) / (theta * theta)
    return m0, m1


@dataclass
class SpectralBasis:
    """
    Exact element integrals of hat pieces against every active mode.

    left[k, j]  = int_{I_j} (1 - t) g_l(x) dx
    right[k, j] = int_{I_j} t g_l(x) dx
    for element I_j spanning nodes j -> j+1 (0-based storage).
    """
    grid: Grid
    modes: list[int]
    left: np.ndarray = field(init=False, repr=False)
    right: np.ndarray = field(init=False, repr=False)

    def __post_init__(self) -> None:
        self.left, self.right = self._real_integrals(self.modes)

    @cached_property
    def _element_starts(self) -> np.ndarray:
        return (np.arange(self.grid.L_h) + 1.0) * self.grid.h

    def complex_integrals(self, frequency: int) -> tuple[np.ndarray, np.ndarray]:
        """Left/right integrals against sqrt(2/L) e^{ikx}, k = 2 pi frequency / L."""
        L, h = self.grid.L, self.grid.h
        k = 2.0 * math.pi * frequency / L
        m0, m1 = hat_moments(k * h)
        phase = np.exp(1j * k * self._element_starts) * (h * math.sqrt(2.0 / L))
        right = phase * m1
        return phase * (m0 - m1), right

    def _real_integrals(self, modes: list[int]) -> tuple[np.ndarray, np.ndarray]:
        n_el = self.grid.L_h
        left = np.zeros((len(modes), n_el))
        right = np.zeros((len(modes), n_el))
        for row, ell in enumerate(modes):
            if ell == 0:
                half = self.grid.h / (2.0 * math.sqrt(self.grid.L))
                left[row] = half
                right[row] = half
                continue
            cl, cr = self.complex_integrals(abs(ell))
            part = np.imag if ell > 0 else np.real
            left[row] = part(cl)
            right[row] = part(cr)
        return left, right

    def element_integrals(self, m: np.ndarray) -> np.ndarray:
        """E[k, j] = int_{I_j} M g_l for the piecewise-linear M with nodal values m."""
        return self.left * m + self.right * np.roll(m, -1)

    def coefficients(self, root_mobility: np.ndarray, amplitudes: np.ndarray) -> np.ndarray:
        """Z[k, i] = (lambda_k / h^2)(E_i - E_{i-1}) = -(lambda_k / h) int M g_k (e_i)_x."""
        e = self.element_integrals(root_mobility)
        h = self.grid.h
        return amplitudes[:, None] / (h * h) * (e - np.roll(e, 1, axis=1))


@lru_cache(maxsize=128)
def spectral_basis(grid: Grid, modes: tuple[int, ...]) -> SpectralBasis:
    return SpectralBasis(grid, list(modes))


# ---------------------------------------------------------------------------
# Coefficients
# ---------------------------------------------------------------------------

def _root_mobility(u: Field, n: float) -> np.ndarray:
    require_positive(u)
    return np.abs(u.values) ** (n / 2.0)


def stochastic_coeff(u: Field, ell: int, spec: NoiseSpec, n: float) -> Field:
    """Z_i(lambda_l g_l) at every node."""
    lam = spec.lambdas.get(ell, 0.0)
    basis = spectral_basis(u.grid, (ell,))
    z = basis.coefficients(_root_mobility(u, n), np.array([lam]))
    return Field(u.grid, z[0])


def coefficient_matrix(u: Field, spec: NoiseSpec, n: float) -> tuple[list[int], np.ndarray]:
    """All active modes at once: (modes, Z) with Z of shape (modes, L_h)."""
    active = spec.active_modes(u.grid)
    modes = [ell for ell, _ in active]
    if not modes:
        return [], np.zeros((0, u.grid.L_h))
    basis = spectral_basis(u.grid, tuple(modes))
    amplitudes = np.array([lam for _, lam in active])
    return modes, basis.coefficients(_root_mobility(u, n), amplitudes)


# ---------------------------------------------------------------------------
# Streams
# ---------------------------------------------------------------------------

def _mode_key(ell: int) -> int:
    return 2 * abs(ell) + (1 if ell < 0 else 0)


class NoiseStream:
    """
    Standard normals for one path, one Philox stream per mode.

    A stream is owned by exactly one path worker; after `close()` every
    draw raises NoiseStreamError.
    """

    def __init__(self, spec: NoiseSpec, path_index: int, n: float):
        if path_index < 0:
            raise NoiseStreamError(f"path index must be >= 0, got {path_index}")
        self.spec = spec
        self.path_index = path_index
        self.n = n
        self._generators: dict[int, np.random.Generator] = {}
        self._closed = False
        self.draws = 0

    def _generator(self, ell: int) -> np.random.Generator:
        gen = self._generators.get(ell)
        if gen is None:
            seq = np.random.SeedSequence(self.spec.seed, spawn_key=(self.path_index, _mode_key(ell)))
            gen = np.random.Generator(np.random.Philox(seq))
            self._generators[ell] = gen
        return gen

    def standard_normals(self, modes: list[int]) -> np.ndarray:
        if self._closed:
            raise NoiseStreamError(f"stream for path {self.path_index} is closed")
        for ell in modes:
            if ell not in self.spec.lambdas:
                raise NoiseStreamError(f"mode l={ell} is not part of the noise spec")
        self.draws += 1
        return np.array([self._generator(ell).standard_normal() for ell in modes])

    def close(self) -> None:
        self._closed = True
        self._generators.clear()

    @property
    def closed(self) -> bool:
        return self._closed


def noise_increment(u: Field, dt: float, stream: NoiseStream) -> Field:
    """sum_l Z(u, l) xi_l sqrt(dt), xi_l drawn in ascending-l order."""
    if not dt > 0.0:
        raise DomainError(f"time step must be positive, got dt={dt!r}")
    modes, z = coefficient_matrix(u, stream.spec, stream.n)
    if not modes:
        if stream.closed:
            raise NoiseStreamError(f"stream for path {stream.path_index} is closed")
        return Field(u.grid, np.zeros(u.grid.L_h))
    xi = stream.standard_normals(modes)
    return Field(u.grid, math.sqrt(dt) * (xi @ z))


# ---------------------------------------------------------------------------
# Constants
# ---------------------------------------------------------------------------

def c_strat(spec: NoiseSpec, n: float, L: float) -> float:
    """
    C_Strat = 1/2 (n^2/4)(lambda_0^2/L + sum_{l>=1} 2 lambda_l^2 / L).

    This is the continuum constant: every listed mode counts, including
    modes above a grid's cutoff that `active_modes` drops. It depends on
    no grid, so neither do `s_min`, `s_opt` or the correction drift weight.
    """
    if not spec.is_balanced():
        raise ConfigurationError("C_Strat needs a frequency-balanced noise spec")
    total = spec.lambdas.get(0, 0.0) ** 2 / L
    total += sum(2.0 * lam ** 2 / L for ell, lam in spec.lambdas.items() if ell >= 1)
    return 0.5 * (n * n / 4.0) * total


def _require_thin_film_range(n: float) -> None:
    if not 2.0 < n < 3.0:
        raise DomainError(f"regularization bounds need 2 < n < 3, got n={n!r}")


def s_min(spec: NoiseSpec, n: float, c_F: float, L: float) -> float:
    _require_thin_film_range(n)
    c = c_osc(c_F)
    first = 3.0 * c ** (4.0 - n) / (1.0 + c) ** (n - 4.0) * (n - 2.0) / (3.0 - n)
    second = c ** (n - 2.0) - 1.0
    return c_strat(spec, n, L) * (first + second)


def s_opt(spec: NoiseSpec, n: float, L: float) -> float:
    _require_thin_film_range(n)
    return c_strat(spec, n, L) * 2.25 * (n - 2.0) ** 2 / ((3.0 - n) * (2.0 * n - 3.0))


def log_noise_summary(spec: NoiseSpec, grid: Grid) -> None:
    active = spec.active_modes(grid)
    logger.debug(
        f"[NOISE] {len(active)} active modes, N_h={spec.resolved_cutoff(grid)}, "
        f"sum l^4 lambda^2={spec.h4_sum:.6g}"
    )
