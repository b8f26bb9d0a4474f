# Tests for the constrained minimizer
import numpy as np
import pytest
from pydantic import ValidationError

from pharmonic.energy import p_energy
from pharmonic.errors import ConfigError
from pharmonic.lattice import Lattice
from pharmonic.minimizer import SolveConfig, make_bubble_sequence, solve
from pharmonic.presets import boundary_preset
from pharmonic.target import Target


@pytest.fixture
def quick():
    return SolveConfig(max_iter=60, tol_grad=1e-4)


def test_constant_boundary(sphere3, quick):
    lat = Lattice(3, 8)
    fmap, report = solve(boundary_preset("constant", 3, sphere3), sphere3, lat, quick, label="constant")
    assert report.energy == 0.0
    assert report.iterations == 0
    assert report.converged
    assert np.allclose(fmap.values[lat.inside], [0.0, 0.0, 1.0])


@pytest.mark.parametrize("spec", ["radial", "tilted:0.5"])
def test_solution_stays_on_sphere(sphere3, quick, spec):
    lat = Lattice(3, 8)
    fmap, report = solve(boundary_preset(spec, 3, sphere3), sphere3, lat, quick, label=spec)
    assert np.allclose(np.linalg.norm(fmap.values[lat.inside], axis=-1), 1.0)
    assert report.energy_monotone
    assert np.all(np.diff(report.energy_history) <= 1e-9)
    assert report.energy == pytest.approx(p_energy(fmap, None, 2.0))
    boundary = lat.boundary_band
    expected = boundary_preset(spec, 3, sphere3)(lat.coords[boundary] / lat.radius[boundary][:, None])
    assert np.allclose(fmap.values[boundary], expected)


def test_planar_solve_with_p_above_two(sphere3):
    lat = Lattice(2, 16)
    cfg = SolveConfig(p=2.5, max_iter=80, tol_grad=1e-4)
    fmap, report = solve(boundary_preset("tilted:1", 2, sphere3), sphere3, lat, cfg)
    assert report.energy_monotone
    assert report.energy > 0.0
    assert np.allclose(np.linalg.norm(fmap.values[lat.inside], axis=-1), 1.0)


def test_solve_config_validation():
    with pytest.raises(ValidationError):
        SolveConfig(init="random")
    with pytest.raises(ValidationError):
        SolveConfig(p=1.0)
    with pytest.raises(ValidationError):
        SolveConfig(step_rule="wolfe")


def test_supplied_init_needs_field(sphere3):
    with pytest.raises(ConfigError):
        solve(boundary_preset("radial", 3, sphere3), sphere3, Lattice(3, 8), SolveConfig(init="supplied"))


def test_trace_target_mismatch():
    with pytest.raises(ConfigError):
        solve(lambda w: w.copy(), Target("sphere", 4), Lattice(3, 8))


def test_bubble_sequence():
    lat = Lattice(2, 16)
    first = make_bubble_sequence(1, lat)
    assert first.label == "bubble(lambda=2)"
    assert "bubble-underresolved" not in first.flags
    assert "bubble-underresolved" in make_bubble_sequence(4, lat).flags
    with pytest.raises(ConfigError):
        make_bubble_sequence(0, lat, scaling=lambda i: 0.5)


@pytest.fixture(scope="module")
def radial_solves():
    sphere = Target("sphere", 3)
    cfg = SolveConfig(init="harmonic")
    return [solve(boundary_preset("radial", 3, sphere), sphere, Lattice(3, n), cfg, label="radial")[1] for n in (12, 24)]


def test_radial_trace_energy(radial_solves):
    coarse, fine = radial_solves
    assert fine.energy == pytest.approx(8 * np.pi, rel=0.05)
    assert abs(fine.energy - coarse.energy) / fine.energy <= 0.05


def test_solutions_are_stationary(radial_solves):
    coarse, fine = radial_solves
    assert coarse.stationarity_residual <= 0.1
    assert fine.stationarity_residual <= 0.1
    assert fine.stationarity_residual < coarse.stationarity_residual
