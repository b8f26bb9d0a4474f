# Tests for analytic presets and boundary traces
import numpy as np
import pytest

from pharmonic.energy import p_energy
from pharmonic.errors import ConfigError
from pharmonic.lattice import Lattice
from pharmonic.presets import (
    analytic_preset,
    boundary_preset,
    bubble_ball_energy,
    bubble_energy_density,
    bubble_map,
    field_boundary,
    radial_map,
)
from pharmonic.target import Target


@pytest.fixture
def directions():
    rng = np.random.default_rng(3)
    w = rng.normal(size=(20, 3))
    return w / np.linalg.norm(w, axis=1, keepdims=True)


def test_radial_map(radial3):
    lat = radial3.lattice
    assert np.allclose(np.linalg.norm(radial3.values, axis=-1), 1.0)
    assert np.allclose(radial3.values[lat.n, lat.n, lat.n], [1.0, 0.0, 0.0])
    assert np.allclose(radial3.values[lat.n + 4, lat.n, lat.n], [1.0, 0.0, 0.0])


def test_bubble_closed_form():
    assert bubble_ball_energy(1.0, 1.0) == pytest.approx(4 * np.pi)
    assert bubble_ball_energy(8.0, 0.5) == pytest.approx(8 * np.pi * 16 / 17)
    x = np.array([[0.0, 0.0], [0.3, 0.4]])
    assert np.allclose(bubble_energy_density(x, 2.0), 8 * 4 / (1 + 4 * np.array([0.0, 0.25])) ** 2)


def test_bubble_lattice_energy():
    fmap = bubble_map(Lattice(2, 64), 4.0)
    assert np.allclose(np.linalg.norm(fmap.values, axis=-1), 1.0)
    assert p_energy(fmap, None, 2.0) == pytest.approx(bubble_ball_energy(4.0), rel=0.03)


def test_bubbles_need_plane(lattice3):
    with pytest.raises(ConfigError):
        bubble_map(lattice3, 2.0)


def test_analytic_preset_names(lattice3):
    assert analytic_preset("axial", lattice3).label == "axial"
    assert analytic_preset("blend", lattice3, 0.25).label == "blend(t=0.25)"
    with pytest.raises(ConfigError):
        analytic_preset("hopf", lattice3)


def test_boundary_presets(sphere3, directions):
    assert np.allclose(boundary_preset("radial", 3, sphere3)(directions), directions)
    tilted = boundary_preset("tilted:2", 3, sphere3)(directions)
    assert np.allclose(np.linalg.norm(tilted, axis=-1), 1.0)
    assert np.all(tilted[:, -1] > 0)
    winding = boundary_preset("equator-winding:2", 3, sphere3)(directions)
    assert np.allclose(winding[:, 2], 0.0)
    assert np.allclose(np.linalg.norm(winding, axis=-1), 1.0)
    const = boundary_preset("constant", 3, sphere3)(directions)
    assert np.allclose(const, [0.0, 0.0, 1.0])


def test_boundary_preset_errors(sphere3):
    with pytest.raises(ConfigError):
        boundary_preset("spiral", 3, sphere3)
    with pytest.raises(ConfigError):
        boundary_preset("radial", 2, sphere3)
    with pytest.raises(ConfigError):
        boundary_preset("tilted:1", 3, Target("flat", 3))


def test_field_boundary(radial3, directions):
    assert np.allclose(field_boundary(radial3)(directions), directions)
