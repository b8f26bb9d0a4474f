# Tests for energies, theta and stationarity
import numpy as np
import pytest

from pharmonic.energy import (
    Annulus,
    Ball,
    ScaleProfile,
    bump_fields,
    p_energy,
    radial_energy,
    scale_ladder,
    scale_profile,
    stationarity_residual,
    theta,
    theta_field,
)
from pharmonic.errors import DomainExit, ScaleUnderresolved, TestFieldNotCompact
from pharmonic.lattice import Lattice, VectorField, resample
from pharmonic.presets import bubble_map, linear_map, radial_map

RADIAL_THETA = 8 * np.pi


@pytest.fixture(scope="module")
def radial48():
    return radial_map(Lattice(3, 48))


@pytest.fixture
def linear2(lattice2):
    return linear_map(lattice2, np.array([[1.0, 2.0], [0.0, -1.0]]))


def test_linear_energy(linear2):
    # |A|^2 |B_1|
    assert p_energy(linear2, None, 2.0) == pytest.approx(6 * np.pi, rel=0.01)
    ball = p_energy(linear2, Ball((0.0, 0.0), 0.5), 2.0)
    annulus = p_energy(linear2, Annulus((0.0, 0.0), 0.25, 0.5), 2.0)
    assert ball == pytest.approx(6 * np.pi / 4, rel=0.02)
    assert annulus == pytest.approx(ball - p_energy(linear2, Ball((0.0, 0.0), 0.25), 2.0))


@pytest.mark.parametrize("r", [0.3, 0.4, 0.5])
def test_theta_constancy(radial48, r):
    assert theta(radial48, np.zeros(3), r) == pytest.approx(RADIAL_THETA, rel=0.05)


def test_theta_guards(radial3):
    with pytest.raises(ScaleUnderresolved):
        theta(radial3, np.zeros(3), radial3.lattice.h)
    with pytest.raises(DomainExit):
        theta(radial3, [0.6, 0.0, 0.0], 0.5)


def test_theta_field_matches_theta(radial3):
    grid = theta_field(radial3, 0.5)
    n = radial3.lattice.n
    assert grid[n, n, n] == pytest.approx(theta(radial3, np.zeros(3), 0.5), rel=1e-6)
    assert np.isnan(grid[n + 12, n, n])


def test_scale_ladder(lattice3):
    ladder = scale_ladder(lattice3, 0.5, 0.5)
    assert np.allclose(ladder, [0.5, 0.25])
    with pytest.raises(ScaleUnderresolved):
        scale_ladder(lattice3, 0.5, lattice3.h)


def test_monotonicity_of_radial_map(radial3):
    profile = scale_profile(radial3, [0.1, 0.2, 0.0], gamma=0.7)
    assert profile.monotonicity_violations(0.05 * RADIAL_THETA) == []


def test_monotonicity_violations_detected():
    profile = ScaleProfile(x=(0.0, 0.0), scales=np.array([0.5, 0.25, 0.125]), theta=np.array([1.0, 2.0, 0.5]), p=2.0, m=2)
    assert profile.monotonicity_violations(0.1) == [(0.5, 0.25)]
    assert profile.monotonicity_violations(0.1, floor=0.3) == []
    assert profile.W(0.125, 0.5) == pytest.approx(0.5)


def test_stationarity_of_linear_map(linear2):
    for xi in bump_fields(linear2.lattice, 3, seed=1):
        assert abs(stationarity_residual(linear2, xi)) < 1e-8


def test_stationarity_of_radial_map():
    fmap = radial_map(Lattice(3, 32))
    residuals = [abs(stationarity_residual(fmap, xi)) for xi in bump_fields(fmap.lattice, 4, seed=0)]
    assert max(residuals) <= 0.05


def test_bump_fields_vanish_on_band(lattice3):
    for xi in bump_fields(lattice3, 3, seed=2):
        assert np.all(xi.values[lattice3.boundary_band] == 0.0)


def test_test_field_must_be_compact(radial3):
    lat = radial3.lattice
    with pytest.raises(TestFieldNotCompact):
        stationarity_residual(radial3, VectorField(lat, np.ones(lat.shape + (3,))))


def test_radial_energy_of_radial_map(radial3):
    ring = radial_energy(radial3, np.zeros(3), 0.25, 0.5)
    assert ring < 0.01 * theta(radial3, np.zeros(3), 0.5)


@pytest.mark.parametrize("x, r", [((0.0, 0.0), 0.5), ((0.125, 0.0), 0.5), ((0.0, -0.25), 0.25)])
def test_theta_is_scale_invariant(x, r):
    fmap = bubble_map(Lattice(2, 64), 4.0)
    blown = resample(fmap, x, r)
    assert theta(blown, (0.0, 0.0), 1.0) == pytest.approx(theta(fmap, x, r), rel=0.02)


def test_theta_of_linear_blowup(lattice3):
    fmap = linear_map(lattice3, np.array([[1.0, 2.0, 0.0], [0.5, -1.0, 3.0]]))
    blown = resample(fmap, (0.25, 0.0, 0.0), 0.5)
    assert theta(blown, np.zeros(3), 1.0) == pytest.approx(theta(fmap, (0.25, 0.0, 0.0), 0.5), rel=0.02)
