import math

import numpy as np
import pytest
from pydantic import ValidationError

from filmlab.governance import ConfigurationError, DomainError, NoiseStreamError, PositivityError
from filmlab.mesh import Field, Grid, constant, interpolate
from filmlab.noise import (
    NoiseSpec,
    NoiseStream,
    basis_derivative,
    basis_eval,
    c_strat,
    coefficient_matrix,
    noise_increment,
    s_min,
    s_opt,
    stochastic_coeff,
)
from filmlab.physics import c_osc

GAUSS_X, GAUSS_W = np.polynomial.legendre.leggauss(12)


def _element_quadrature(fn, grid: Grid):
    """Gauss-Legendre on every element [x_j, x_j + h], x_j = (j+1) h."""
    h = grid.h
    starts = grid.nodes
    x = starts[:, None] + 0.5 * h * (GAUSS_X[None, :] + 1.0)
    t = (x - starts[:, None]) / h
    return np.sum(fn(x, t) * GAUSS_W[None, :], axis=1) * 0.5 * h


# ---------------------------------------------------------------------------
# Spec
# ---------------------------------------------------------------------------

def test_balanced_spec_mirrors_modes():
    spec = NoiseSpec(lambdas=[(0, 0.1), (2, 0.3)])
    assert spec.lambdas == {0: 0.1, 2: 0.3, -2: 0.3}
    assert spec.is_balanced()
    assert spec.h4_sum == pytest.approx(2 * 16 * 0.09)


def test_conflicting_mirror_rejected():
    with pytest.raises(ValidationError):
        NoiseSpec(lambdas=[(1, 0.1), (-1, 0.2)])


def test_mode_beyond_cutoff_rejected():
    with pytest.raises(ValidationError):
        NoiseSpec(lambdas=[(5, 0.1)], cutoff=3)


def test_default_cutoff_is_half_the_nodes():
    spec = NoiseSpec(lambdas=[(1, 0.1), (9, 0.1)])
    assert [ell for ell, _ in spec.active_modes(Grid(1.0, 16))] == [-1, 1]


# ---------------------------------------------------------------------------
# Basis
# ---------------------------------------------------------------------------

def test_basis_hand_values():
    np.testing.assert_allclose(basis_eval(0, np.linspace(0, 4, 5), 4.0), 0.5)
    assert basis_eval(1, 0.25, 1.0) == pytest.approx(math.sqrt(2.0))
    assert basis_eval(-1, 0.0, 2.0) == pytest.approx(1.0)


def test_basis_orthonormal():
    grid = Grid(1.0, 64)
    modes = [-2, -1, 0, 1, 2]
    gram = np.array([
        [np.sum(_element_quadrature(lambda x, t: basis_eval(a, x, 1.0) * basis_eval(b, x, 1.0), grid))
         for b in modes]
        for a in modes
    ])
    np.testing.assert_allclose(gram, np.eye(len(modes)), atol=1e-10)


def test_basis_derivative_matches_difference():
    x = np.linspace(0.0, 1.0, 7)
    eps = 1e-6
    for ell in (-3, 2):
        fd = (basis_eval(ell, x + eps, 1.0) - basis_eval(ell, x - eps, 1.0)) / (2 * eps)
        np.testing.assert_allclose(basis_derivative(ell, x, 1.0), fd, rtol=1e-6, atol=1e-6)


# ---------------------------------------------------------------------------
# Coefficients
# ---------------------------------------------------------------------------

def test_constant_film_mode_zero_vanishes():
    spec = NoiseSpec(lambdas=[(0, 0.5)])
    z = stochastic_coeff(constant(Grid(1.0, 8), 1.7), 0, spec, 2.5)
    np.testing.assert_allclose(z.values, 0.0, atol=1e-15)


def test_constant_film_sine_mode_closed_form():
    grid = Grid(1.0, 8)
    c, n, lam = 1.3, 2.5, 0.2
    spec = NoiseSpec(lambdas=[(1, lam)])
    z = stochastic_coeff(constant(grid, c), 1, spec, n)

    h = grid.h
    starts = grid.nodes
    ends = starts + h
    k = 2.0 * math.pi
    element = math.sqrt(2.0) * (np.cos(k * starts) - np.cos(k * ends)) / k
    expected = -(lam * c ** (n / 2.0) / h) * (np.roll(element, 1) / h - element / h)
    np.testing.assert_allclose(z.values, expected, rtol=1e-11, atol=1e-12)


@pytest.mark.parametrize("ell", [-2, 0, 1, 3])
def test_coefficient_pairing(ell, positive_field, test_function):
    u = positive_field(16)
    w = test_function(u.grid)
    n, lam = 2.5, 0.3
    spec = NoiseSpec(lambdas=[(ell, lam)])
    z = stochastic_coeff(u, ell, spec, n)

    # h sum Z_i w_i = -lam int M_2 g_l w_x, elementwise quadrature of the continuous integrand
    root = u.values ** (n / 2.0)
    slope = (np.roll(w.values, -1) - w.values) / u.grid.h
    nxt = np.roll(root, -1)
    pieces = _element_quadrature(
        lambda x, t: ((1.0 - t) * root[:, None] + t * nxt[:, None]) * basis_eval(ell, x, 1.0),
        u.grid,
    )
    expected = -lam * np.sum(pieces * slope)
    scale = lam * np.sum(np.abs(pieces * slope))
    assert u.grid.h * np.sum(z.values * w.values) == pytest.approx(expected, rel=1e-10, abs=1e-12 * scale)


def test_coefficients_require_positive_film(grid4):
    spec = NoiseSpec(lambdas=[(0, 0.1)])
    with pytest.raises(PositivityError):
        coefficient_matrix(Field(grid4, np.array([1.0, -1.0, 1.0, 1.0])), spec, 2.5)


# ---------------------------------------------------------------------------
# Increments and streams
# ---------------------------------------------------------------------------

def test_zero_amplitudes_give_zero_increment(positive_field):
    stream = NoiseStream(NoiseSpec(lambdas=[(1, 0.0)]), 0, 2.5)
    np.testing.assert_array_equal(noise_increment(positive_field(8), 1e-3, stream).values, 0.0)


def test_increment_is_mass_neutral(positive_field, spec):
    u = positive_field(32)
    stream = NoiseStream(spec, 3, 2.5)
    inc = noise_increment(u, 1e-3, stream).values
    assert abs(u.grid.h * np.sum(inc)) <= 1e-12 * max(1.0, u.grid.h * np.sum(np.abs(inc)))


def test_increment_rejects_nonpositive_dt(positive_field, spec):
    with pytest.raises(DomainError):
        noise_increment(positive_field(8), 0.0, NoiseStream(spec, 0, 2.5))


def test_increment_std_scales_with_root_dt(spec):
    u = interpolate(lambda x: 1.0 + 0.2 * np.cos(2 * math.pi * x), Grid(1.0, 8))
    small = NoiseStream(spec, 0, 2.5)
    large = NoiseStream(spec, 1, 2.5)
    a = np.array([noise_increment(u, 1e-4, small).values[2] for _ in range(10_000)])
    b = np.array([noise_increment(u, 4e-4, large).values[2] for _ in range(10_000)])
    assert np.std(b) / np.std(a) == pytest.approx(2.0, rel=0.05)


def test_streams_are_reproducible(spec):
    first = NoiseStream(spec, 5, 2.5)
    second = NoiseStream(spec, 5, 2.5)
    other = NoiseStream(spec, 6, 2.5)
    modes = [-1, 0, 1]
    a = np.concatenate([first.standard_normals(modes) for _ in range(4)])
    b = np.concatenate([second.standard_normals(modes) for _ in range(4)])
    c = np.concatenate([other.standard_normals(modes) for _ in range(4)])
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, c)


def test_stream_errors(spec):
    with pytest.raises(NoiseStreamError):
        NoiseStream(spec, -1, 2.5)
    stream = NoiseStream(spec, 0, 2.5)
    with pytest.raises(NoiseStreamError):
        stream.standard_normals([7])
    stream.close()
    assert stream.closed
    with pytest.raises(NoiseStreamError):
        stream.standard_normals([0])


# ---------------------------------------------------------------------------
# Constants
# ---------------------------------------------------------------------------

def test_c_strat_hand_value():
    assert c_strat(NoiseSpec(lambdas=[(0, 1.0)]), 2.5, 1.0) == pytest.approx(0.78125)
    assert c_strat(NoiseSpec(lambdas={}), 2.5, 1.0) == 0.0


def test_c_strat_quadratic_in_amplitudes(spec):
    assert c_strat(spec.scaled(2.0), 2.5, 1.0) == pytest.approx(4.0 * c_strat(spec, 2.5, 1.0))


def test_c_strat_counts_modes_above_the_grid_cutoff():
    spec = NoiseSpec(lambdas=[(1, 0.1), (5, 0.1)])
    assert [ell for ell, _ in spec.active_modes(Grid(1.0, 4))] == [-1, 1]
    low = c_strat(NoiseSpec(lambdas=[(1, 0.1)]), 2.5, 1.0)
    assert c_strat(spec, 2.5, 1.0) == pytest.approx(2.0 * low)
    assert c_strat(spec, 2.5, 1.0) == pytest.approx(0.5 * (2.5**2 / 4.0) * 4.0 * 0.01)


def test_c_strat_rejects_unbalanced():
    spec = NoiseSpec(lambdas=[(1, 0.1)], balanced=False)
    with pytest.raises(ConfigurationError):
        c_strat(spec, 2.5, 1.0)


def test_s_min_hand_transcription():
    spec = NoiseSpec(lambdas=[(0, 1.0)])
    c = 1.2
    expected = 0.78125 * (3.0 * c ** 1.5 * (1.0 + c) ** 1.5 * 1.0 + (c ** 0.5 - 1.0))
    assert c_osc(0.02) == pytest.approx(c)
    assert s_min(spec, 2.5, 0.02, 1.0) == pytest.approx(expected, rel=1e-12)


def test_s_opt_hand_value():
    spec = NoiseSpec(lambdas=[(0, 1.0)])
    assert s_opt(spec, 2.5, 1.0) == pytest.approx(0.78125 * 2.25 * 0.25 / (0.5 * 2.0), rel=1e-12)


def test_s_min_limits():
    spec = NoiseSpec(lambdas=[(0, 1.0)])
    n = 2.5
    strat = c_strat(spec, n, 1.0)
    first_only = lambda c: strat * 3.0 * c ** (4 - n) / (1 + c) ** (n - 4) * (n - 2) / (3 - n)  # noqa: E731
    gaps = [s_min(spec, n, c_F, 1.0) - first_only(c_osc(c_F)) for c_F in (1e-2, 1e-4, 1e-8)]
    assert gaps[0] > gaps[1] > gaps[2] > 0.0
    assert gaps[2] < 1e-4
    assert s_min(spec, 2.0 + 1e-9, 0.1, 1.0) < 1e-7


def test_s_bounds_need_thin_film_range():
    spec = NoiseSpec(lambdas=[(0, 1.0)])
    with pytest.raises(DomainError):
        s_min(spec, 3.0, 0.1, 1.0)
    with pytest.raises(DomainError):
        s_opt(spec, 2.0, 1.0)
