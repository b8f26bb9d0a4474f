# Tests for energy measures and the concentration set
import numpy as np
import pytest

from pharmonic.defect import EnergyMeasure, accumulate, detect_sigma, homogeneity_check, sigma_radii
from pharmonic.errors import LatticeMismatch, NotInSigma
from pharmonic.lattice import Lattice
from pharmonic.minimizer import make_bubble_sequence
from pharmonic.presets import bubble_ball_energy, constant_map, radial_map
from pharmonic.target import Target


@pytest.fixture(scope="module")
def plane():
    return Lattice(2, 64)


@pytest.fixture(scope="module")
def bubbles(plane):
    return [make_bubble_sequence(i, plane) for i in (2, 3, 4)]


@pytest.fixture(scope="module")
def bubble_report(plane, bubbles):
    measures, limit = accumulate(bubbles, 2.0, constant_map(plane, Target("sphere", 3)))
    return detect_sigma(measures, 1.0, None, limit)


def test_point_mass_is_homogeneous_when_m_equals_p():
    mu = EnergyMeasure.point_mass(Lattice(2, 16), (0.0, 0.0), 5.0, p=2.0)
    assert mu.total == pytest.approx(5.0)
    assert mu.theta((0.0, 0.0), 0.3) == pytest.approx(5.0)
    assert homogeneity_check(mu, (0.0, 0.0), [0.2, 0.3, 0.4]) == pytest.approx(0.0)


def test_hedgehog_measure_is_nearly_homogeneous():
    fmap = radial_map(Lattice(3, 48))
    mu = EnergyMeasure.from_map(fmap)
    assert homogeneity_check(mu, np.zeros(3), [0.3, 0.4, 0.5], fmap=fmap) <= 0.03


def test_theta_grid_matches_theta(plane, bubbles):
    mu = EnergyMeasure.from_map(bubbles[0])
    grid = mu.theta_grid(0.25)
    assert grid[plane.n, plane.n] == pytest.approx(mu.theta((0.0, 0.0), 0.25), rel=1e-6)


def test_accumulate_checks_lattices(bubbles):
    other = make_bubble_sequence(1, Lattice(2, 32))
    with pytest.raises(LatticeMismatch):
        accumulate(bubbles + [other])
    with pytest.raises(ValueError):
        accumulate([])


def test_sigma_needs_a_tail(bubbles):
    measures, _ = accumulate(bubbles[:1])
    with pytest.raises(ValueError):
        detect_sigma(measures)


def test_bubble_concentrates_at_origin(plane, bubble_report):
    report = bubble_report
    assert len(report.clusters) == 1
    assert [plane.n, plane.n] in report.sigma_cells
    assert np.linalg.norm(report.clusters[0].center) <= plane.h
    expected = bubble_ball_energy(16.0)
    assert report.defect_mass == pytest.approx(expected, rel=0.1)
    assert report.clusters[0].mass == pytest.approx(report.defect_mass, rel=1e-6)
    assert report.density_ratio >= 0.9
    assert report.flags == []


def test_sigma_ladder(plane):
    radii = sigma_radii(plane)
    assert len(radii) == 6
    assert radii[0] == pytest.approx(3 * plane.h)
    assert radii[-1] == pytest.approx(0.3)
    assert np.all(np.diff(radii) > 0)
    assert sigma_radii(plane, floor_cells=6)[0] == pytest.approx(6 * plane.h)


def test_sigma_stays_near_the_bubble(plane, bubble_report):
    # a bubble at scale 1/lambda carries eps_thresh = 1 out to about r_min + 1.5/lambda
    reach = 3 * plane.h + 1.5 / 16.0
    spread = max(np.linalg.norm(plane.coords[tuple(c)]) for c in bubble_report.sigma_cells)
    assert spread <= reach
    assert bubble_report.clusters[0].extent <= reach
    assert len(bubble_report.sigma_cells) < 0.05 * plane.node_count


def test_homogeneity_outside_sigma(plane, bubbles, bubble_report):
    mu = EnergyMeasure.from_map(bubbles[-1])
    with pytest.raises(NotInSigma):
        homogeneity_check(mu, (0.5, 0.0), [0.1, 0.2], report=bubble_report)
    assert homogeneity_check(mu, (0.0, 0.0), [0.1, 0.2, 0.3], report=bubble_report) < 0.5


def test_constant_sequence_has_empty_sigma(plane):
    maps = [constant_map(plane, Target("sphere", 3)) for _ in range(3)]
    measures, _ = accumulate(maps)
    report = detect_sigma(measures)
    assert report.clusters == []
    assert report.defect_mass == pytest.approx(0.0)
    assert "empty-sigma" in report.flags
    assert "no-limit-map" in report.flags
