import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kfrsplit.errors import BadParameter, MassMismatch, ZeroMass
from kfrsplit.grid import DiscreteMeasure, Grid, total_mass, zero_measure
from kfrsplit.metrics import (
    DiracMass,
    fr_distance_sq,
    fr_geodesic,
    kfr_dirac_sq,
    kfr_upper_bound_sq,
    mk_distance_sq,
    rescale,
)

from conftest import bump, uniform


def shifted_uniform(grid, start, length, mass=1.0):
    return DiscreteMeasure(
        grid, np.where((grid.centers > start) & (grid.centers < start + length), mass / length, 0.0)
    )


def test_mk_examples():
    g = Grid(0, 2, 200)
    a = shifted_uniform(g, 0.0, 1.0)
    assert mk_distance_sq(a, a) == 0.0
    for s in (0.1, 0.25, 0.5):
        b = shifted_uniform(g, s, 1.0)
        assert mk_distance_sq(a, b) == pytest.approx(s * s, rel=1e-10)
        assert mk_distance_sq(a.scaled(2), b.scaled(2)) == pytest.approx(2 * s * s, rel=1e-10)


def test_mk_errors():
    g = Grid(0, 1, 10)
    with pytest.raises(MassMismatch):
        mk_distance_sq(uniform(g), uniform(g, 2.0))
    with pytest.raises(ZeroMass):
        mk_distance_sq(zero_measure(g), zero_measure(g))


def test_mk_refinement_stable():
    g = Grid(-1, 1, 100)
    a = bump(g, -0.2, 0.2, background=0.05)
    b = bump(g, 0.3, 0.15, background=0.05)
    b = b.scaled(total_mass(a) / total_mass(b))
    d1 = mk_distance_sq(a, b, 2048)
    d2 = mk_distance_sq(a, b, 4096)
    assert abs(d1 - d2) <= 0.01 * d2


def test_fr_examples():
    g = Grid(0, 1, 10)
    one, four = uniform(g), uniform(g, 4.0)
    assert fr_distance_sq(one, one) == 0.0
    assert fr_distance_sq(one, four) == pytest.approx(4.0, abs=1e-12)
    assert fr_distance_sq(one, zero_measure(g)) == pytest.approx(4.0, abs=1e-12)


def test_dirac_examples():
    assert kfr_dirac_sq(DiracMass(0, 1), DiracMass(0, 1)) == 0.0
    assert kfr_dirac_sq(DiracMass(0, 1), DiracMass(math.pi, 1)) == pytest.approx(8.0, abs=1e-9)
    assert kfr_dirac_sq(DiracMass(0, 1), DiracMass(0.3, 0)) == pytest.approx(4.0)
    # beyond pi the cost saturates at pure reaction
    assert kfr_dirac_sq(DiracMass(0, 1), DiracMass(5.0, 1)) == pytest.approx(8.0)
    with pytest.raises(BadParameter):
        DiracMass(0, -1)


def test_dirac_annihilation_matches_grid_fr():
    g = Grid(-1, 1, 101)
    atom = DiscreteMeasure(g, np.where(np.arange(101) == 50, 1.0 / g.h, 0.0))
    assert fr_distance_sq(atom, zero_measure(g)) == pytest.approx(
        kfr_dirac_sq(DiracMass(0, 1), DiracMass(0, 0)), rel=1e-12
    )


def test_upper_bound_examples():
    g = Grid(0, 1, 10)
    one, four = uniform(g), uniform(g, 4.0)
    assert kfr_upper_bound_sq(one, one) == 0.0
    assert kfr_upper_bound_sq(one, four) == pytest.approx(8.0, rel=1e-12)


def test_upper_bound_ratio_for_nearby_bumps():
    g = Grid(-1, 1, 400)
    for s in (0.05, 0.1):
        k = round(s / g.h)
        a = bump(g, -0.2, 0.02)
        b = DiscreteMeasure(g, np.roll(a.density, k))
        ratio = kfr_upper_bound_sq(a, b) / kfr_dirac_sq(DiracMass(0, total_mass(a)), DiracMass(s, total_mass(b)))
        assert ratio == pytest.approx(2.0, abs=0.02)


def test_geodesic():
    g = Grid(0, 1, 10)
    a, b = uniform(g), uniform(g, 4.0)
    np.testing.assert_array_equal(fr_geodesic(a, b, 0).density, a.density)
    np.testing.assert_allclose(fr_geodesic(a, b, 1).density, b.density)
    np.testing.assert_allclose(fr_geodesic(a, b, 0.5).density, 2.25)
    with pytest.raises(BadParameter):
        fr_geodesic(a, b, 1.5)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0, 1), st.floats(0, 1))
def test_geodesic_constant_speed(seed, t, s):
    g = Grid(0, 1, 16)
    rng = np.random.default_rng(seed)
    a = DiscreteMeasure(g, rng.random(16))
    b = DiscreteMeasure(g, rng.random(16))
    lhs = fr_distance_sq(fr_geodesic(a, b, t), fr_geodesic(a, b, s))
    assert lhs == pytest.approx((t - s) ** 2 * fr_distance_sq(a, b), rel=1e-9, abs=1e-14)


def _pair(seed, n=24):
    g = Grid(-1, 1, n)
    rng = np.random.default_rng(seed)
    a = DiscreteMeasure(g, rng.random(n) * (rng.random(n) > 0.2))
    b = DiscreteMeasure(g, rng.random(n) * (rng.random(n) > 0.2))
    if total_mass(a) == 0:
        a = uniform(g)
    if total_mass(b) == 0:
        b = uniform(g)
    return a, b


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0.1, 10))
def test_symmetry_and_scaling(seed, alpha):
    a, b = _pair(seed)
    b_eq = b.scaled(total_mass(a) / total_mass(b))
    assert mk_distance_sq(a, b_eq) == mk_distance_sq(b_eq, a)
    assert fr_distance_sq(a, b) == fr_distance_sq(b, a)
    p, q = DiracMass(0.1, total_mass(a)), DiracMass(1.3, total_mass(b))
    assert kfr_dirac_sq(p, q) == kfr_dirac_sq(q, p)
    assert mk_distance_sq(rescale(a, alpha), rescale(b_eq, alpha)) == pytest.approx(
        alpha * mk_distance_sq(a, b_eq), rel=1e-10
    )
    assert fr_distance_sq(rescale(a, alpha), rescale(b, alpha)) == pytest.approx(
        alpha * fr_distance_sq(a, b), rel=1e-10
    )
    pa, qa = DiracMass(p.x, alpha * p.k), DiracMass(q.x, alpha * q.k)
    assert kfr_dirac_sq(pa, qa) == pytest.approx(alpha * kfr_dirac_sq(p, q), rel=1e-10)


@settings(max_examples=100, deadline=None)
@given(st.floats(0, 5), st.floats(0, 5), st.floats(-4, 4))
def test_dirac_comparison_bounds(k0, k1, dx):
    value = kfr_dirac_sq(DiracMass(0, k0), DiracMass(dx, k1))
    assert 0 <= value <= 4 * (k0 + k1) + 1e-12
    if k0 == k1:
        assert value <= k0 * dx * dx + 1e-12
    # reaction alone is always cheaper than the cone distance of different masses
    assert value >= 4 * (math.sqrt(k1) - math.sqrt(k0)) ** 2 - 1e-12


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_mass_control(seed):
    # masses can differ by at most what the reaction leg pays for them
    a, b = _pair(seed)
    bound = kfr_upper_bound_sq(a, b)
    assert 4 * (math.sqrt(total_mass(b)) - math.sqrt(total_mass(a))) ** 2 <= bound * (1 + 1e-12) + 1e-14


def test_linear_mass_control_fails_for_nearby_masses():
    # |b| <= |a| + KFR^2 cannot hold when the masses are close: the right side is quadratic
    g = Grid(0, 1, 10)
    a, b = uniform(g), uniform(g, 1.01)
    assert total_mass(b) > total_mass(a) + kfr_upper_bound_sq(a, b)
