import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kfrsplit.energy import (
    CATALOG,
    EnergySpec,
    boltzmann_energy,
    check_hypotheses,
    convolve,
    custom_energy,
    energy,
    first_variation,
    gaussian_kernel,
    internal_energy_by_name,
    kernel_from_function,
    power_energy,
    pressure,
    pressure_derivative,
    psi_preset,
    quadratic_energy,
    zero_energy,
)
from kfrsplit.errors import BadParameter, GridMismatch
from kfrsplit.grid import DiscreteMeasure, Grid, zero_measure

from conftest import uniform

CATALOG_ENERGIES = [
    power_energy(2.0),
    power_energy(3.0),
    power_energy(1.5),
    quadratic_energy(),
    zero_energy(),
    boltzmann_energy(),
]


def test_energy_examples():
    g = Grid(0, 1, 16)
    assert energy(uniform(g), EnergySpec(quadratic_energy())) == pytest.approx(1.0)
    assert energy(zero_measure(g), EnergySpec(quadratic_energy())) == 0.0
    spec = EnergySpec(zero_energy(), psi=psi_preset("linear", g))
    assert energy(uniform(g), spec) == pytest.approx(0.5, abs=1e-14)


def test_first_variation_examples():
    g = Grid(0, 1, 16)
    np.testing.assert_allclose(first_variation(uniform(g), EnergySpec(quadratic_energy())), 2.0)
    np.testing.assert_allclose(
        first_variation(uniform(g), EnergySpec(zero_energy(), psi=psi_preset("linear", g))), g.centers
    )
    ones = np.ones(2 * g.n_cells - 1)
    np.testing.assert_allclose(
        first_variation(uniform(g), EnergySpec(quadratic_energy(), kernel=ones)), 3.0
    )


def test_pressure_examples():
    assert pressure(quadratic_energy(), 1.0) == pytest.approx(1.0)
    assert pressure(power_energy(3.0), 2.0) == pytest.approx(8.0)
    for U in CATALOG_ENERGIES:
        assert pressure(U, 0.0) == 0.0


@pytest.mark.parametrize("U", CATALOG_ENERGIES, ids=lambda u: u.label())
def test_pressure_identities(U):
    rho = np.linspace(0.05, 3.0, 40)
    np.testing.assert_allclose(pressure(U, rho), rho * U.dU(rho) - U.U(rho), atol=1e-14)
    eps = 1e-6
    fd = (pressure(U, rho + eps) - pressure(U, rho - eps)) / (2 * eps)
    np.testing.assert_allclose(fd, pressure_derivative(U, rho), rtol=1e-6, atol=1e-9)


def test_hypotheses_examples():
    rep = check_hypotheses(EnergySpec(power_energy(2.0)), 5.0, d=1)
    assert rep.satisfies_H and rep.mk_displacement_convex
    assert not check_hypotheses(EnergySpec(boltzmann_energy()), 5.0).satisfies_H
    zero = check_hypotheses(EnergySpec(zero_energy()), 1.0)
    assert zero.satisfies_H and zero.mk_displacement_convex and zero.fr_convexity_lambda == 0.0


def test_hypotheses_flag_concave_custom_energy():
    U = custom_energy(lambda r: -np.square(r), lambda r: -2 * r, lambda r: -2 + 0 * r)
    rep = check_hypotheses(EnergySpec(U), 1.0)
    assert not rep.satisfies_H
    assert "U''" in rep.notes


def test_sub_quadratic_power_satisfies_h():
    # U'' blows up at vacuum for m < 2, yet rho U'' = 1.5 rho^0.5 stays bounded
    rep = check_hypotheses(EnergySpec(power_energy(1.5)), 1.0)
    assert rep.satisfies_H


def test_catalog_lookup():
    assert internal_energy_by_name("power", 3).params == (3.0,)
    assert set(CATALOG) >= {"power", "quadratic", "zero", "boltzmann"}
    with pytest.raises(BadParameter):
        internal_energy_by_name("nope")
    with pytest.raises(BadParameter):
        internal_energy_by_name("power")
    with pytest.raises(BadParameter):
        power_energy(1.0)


def test_spec_validation():
    g = Grid(0, 1, 4)
    with pytest.raises(BadParameter):
        EnergySpec(zero_energy(), kernel=np.arange(7.0))
    with pytest.raises(BadParameter):
        EnergySpec(zero_energy(), psi=np.array([np.inf, 0, 0, 0]))
    spec = EnergySpec(zero_energy(), psi=np.zeros(5))
    with pytest.raises(GridMismatch):
        energy(uniform(g), spec)


def test_lower_bound_convention():
    g = Grid(-1, 1, 8)
    assert EnergySpec(quadratic_energy(), psi=psi_preset("quadratic_well", g)).lower_bound() == 0.0
    assert EnergySpec(quadratic_energy(), psi=psi_preset("linear", g)).lower_bound() is None
    assert EnergySpec(boltzmann_energy()).lower_bound() is None
    assert EnergySpec(boltzmann_energy(), inf_energy=-3.0).lower_bound() == -3.0


def test_convolution_matches_direct_sum():
    g = Grid(-1, 1, 9)
    rng = np.random.default_rng(0)
    m = DiscreteMeasure(g, rng.random(9))
    kernel = gaussian_kernel(g, 0.3)
    spec = EnergySpec(zero_energy(), kernel=kernel)
    direct = [g.h * sum(kernel[i - j + 8] * m.density[j] for j in range(9)) for i in range(9)]
    np.testing.assert_allclose(convolve(m, spec), direct, rtol=1e-13)
    np.testing.assert_allclose(kernel_from_function(g, lambda z: np.exp(-0.5 * (z / 0.3) ** 2)), kernel)


def test_translation_covariance_without_potential():
    g = Grid(0, 1, 20)
    rng = np.random.default_rng(1)
    rho = rng.random(20)
    spec = EnergySpec(power_energy(3.0))
    assert energy(DiscreteMeasure(g, np.roll(rho, 7)), spec) == pytest.approx(
        energy(DiscreteMeasure(g, rho), spec), rel=1e-14
    )


def _gateaux_gap(spec, rho, phi, grid, eps=1e-5):
    plus = energy(DiscreteMeasure(grid, rho + eps * phi), spec)
    minus = energy(DiscreteMeasure(grid, rho - eps * phi), spec)
    fd = (plus - minus) / (2 * eps)
    exact = grid.h * float(np.dot(first_variation(DiscreteMeasure(grid, rho), spec), phi))
    return fd, exact


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from(range(len(CATALOG_ENERGIES))), st.booleans(), st.booleans())
def test_gateaux_derivative(seed, which, with_psi, with_kernel):
    g = Grid(-1, 1, 30)
    rng = np.random.default_rng(seed)
    rho = 0.2 + rng.random(g.n_cells)
    phi = rng.uniform(-1, 1, g.n_cells)
    spec = EnergySpec(
        CATALOG_ENERGIES[which],
        psi=psi_preset("quadratic_well", g) if with_psi else None,
        kernel=gaussian_kernel(g, 0.3) if with_kernel else None,
    )
    fd, exact = _gateaux_gap(spec, rho, phi, g)
    assert abs(fd - exact) <= 1e-6 * max(abs(exact), 1e-12) or abs(fd - exact) <= 1e-10
