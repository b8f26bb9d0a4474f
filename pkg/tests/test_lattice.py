# Tests for the lattice domain
import numpy as np
import pytest

from pharmonic.errors import DomainExit, LatticeMismatch, NodeOutOfRange, ScaleUnderresolved
from pharmonic.lattice import (
    Lattice,
    ScalarField,
    VectorField,
    ball_volume,
    gradient,
    integrate_ball,
    nodal_gradient,
    parse_h,
    resample,
)
from pharmonic.presets import linear_map, radial_map


@pytest.fixture
def matrix():
    return np.array([[1.0, 2.0, 0.0], [0.5, -1.0, 3.0]])


def test_parse_h():
    assert parse_h("1/32") == 32
    assert parse_h(0.5) == 2
    with pytest.raises(ValueError):
        parse_h("2/3")


def test_shapes_and_nodes():
    lat = Lattice(3, 8)
    assert lat.shape == (17, 17, 17)
    assert lat.cell_shape == (16, 16, 16)
    assert lat.node(0) == tuple(int(i) for i in np.argwhere(lat.inside)[0])
    assert np.allclose(lat.node_coords((8, 8, 8)), 0.0)
    with pytest.raises(NodeOutOfRange):
        lat.node(lat.node_count)
    with pytest.raises(NodeOutOfRange):
        lat.node((0, 0, 0))


def test_bad_dimension():
    with pytest.raises(ValueError):
        Lattice(4, 8)


def test_cell_volume_fills_ball(lattice3):
    assert float(np.sum(lattice3.cell_volume)) == pytest.approx(ball_volume(3), rel=0.01)


def test_integrate_ball(lattice3):
    ones = ScalarField(lattice3, np.ones(lattice3.shape))
    assert integrate_ball(ones, np.zeros(3), 0.5) == pytest.approx(ball_volume(3, 0.5), rel=0.02)


def test_integrate_ball_guards(lattice3):
    ones = ScalarField(lattice3, np.ones(lattice3.shape))
    with pytest.raises(ScaleUnderresolved):
        integrate_ball(ones, np.zeros(3), 2 * lattice3.h)
    with pytest.raises(DomainExit):
        integrate_ball(ones, [0.8, 0.0, 0.0], 0.3)


def test_gradient_of_linear_map(lattice3, matrix):
    fmap = linear_map(lattice3, matrix)
    # rows are partial derivatives: d_d f = A[:, d]
    assert np.allclose(gradient(fmap, (16, 16, 16)), matrix.T)
    assert np.allclose(gradient(fmap, (16, 16, 1)), matrix.T)
    # one-sided along the last axis at the south pole
    assert np.allclose(gradient(fmap, (16, 16, 0))[2], matrix.T[2])
    assert np.allclose(nodal_gradient(fmap)[18, 14, 16], matrix.T)


def test_resample_linear(lattice3, matrix):
    fmap = linear_map(lattice3, matrix)
    blown = resample(fmap, np.zeros(3), 0.5)
    inside = lattice3.inside
    expected = 0.5 * lattice3.coords @ matrix.T
    assert np.allclose(blown.values[inside], expected[inside])


def test_check_same():
    with pytest.raises(LatticeMismatch):
        Lattice(3, 8).check_same(Lattice(3, 16))


def test_resample_identity(radial3, origin3):
    sampled = radial3.with_values(radial3.values)
    same = resample(sampled, origin3, 1.0)
    inside = radial3.lattice.inside
    assert np.allclose(same.values[inside], radial3.values[inside])


def test_resample_keeps_the_map(radial3):
    blown = resample(radial3, [0.125, 0.0, 0.0], 0.5)
    assert blown.target == radial3.target
    assert blown.is_analytic
    assert np.allclose(blown.sample(np.array([[0.25, 0.0, 0.0]])), [[1.0, 0.0, 0.0]])


def test_resampled_radial_map_is_radial(radial3, origin3):
    lat = radial3.lattice
    sampled = radial3.with_values(radial3.values)
    blown = resample(sampled, origin3, 0.5)
    # interpolation of x/|x| is only resolved a few cells away from the singularity
    away = lat.inside & (0.5 * lat.radius >= 4 * lat.h)
    err = np.linalg.norm(blown.values[away] - radial3.values[away], axis=-1)
    assert err.max() <= 2 * lat.h


@pytest.mark.parametrize("analytic", [True, False])
def test_resample_composes(radial3, analytic):
    fmap = radial3 if analytic else radial3.with_values(radial3.values)
    x = [0.125, 0.0, 0.0]
    twice = resample(resample(fmap, x, 0.5), np.zeros(3), 0.5)
    once = resample(fmap, x, 0.25)
    inside = radial3.lattice.inside
    assert np.allclose(twice.values[inside], once.values[inside], atol=1e-9)


def test_resample_guards(radial3):
    with pytest.raises(DomainExit):
        resample(radial3, [0.6, 0.0, 0.0], 0.5)


def _smooth(x):
    return np.stack([np.sin(2 * x[..., 0] + x[..., 1]), np.exp(x[..., 1] - x[..., 2]), np.cos(3 * x[..., 2]) * x[..., 0]], axis=-1)


def _smooth_gradient(x):
    s = np.cos(2 * x[0] + x[1])
    e = np.exp(x[1] - x[2])
    return np.array([
        [2 * s, 0.0, np.cos(3 * x[2])],
        [s, e, 0.0],
        [0.0, -e, -3 * np.sin(3 * x[2]) * x[0]],
    ])


def test_gradient_is_second_order():
    x = np.array([0.25, 0.125, 0.375])
    errors = []
    for n in (8, 16, 32):
        lat = Lattice(3, n)
        field = VectorField(lat, _smooth(lat.coords))
        idx = tuple(int(round((c + 1.0) * n)) for c in x)
        errors.append(np.max(np.abs(gradient(field, idx) - _smooth_gradient(x))))
    assert errors[0] / errors[1] >= 3.0
    assert errors[1] / errors[2] >= 3.0


def test_gradient_of_radial_map():
    fmap = radial_map(Lattice(3, 32))
    g = gradient(fmap, (48, 32, 32))
    assert np.allclose(fmap.lattice.coords[48, 32, 32], [0.5, 0.0, 0.0])
    assert float(np.sum(g * g)) == pytest.approx(8.0, rel=0.01)


def test_integrate_inverse_square():
    errors = []
    for n in (32, 64):
        lat = Lattice(3, n)
        r2 = lat.radius ** 2
        # the origin node is left out; the missing mass shrinks with h
        values = np.divide(2.0, r2, out=np.zeros(lat.shape), where=r2 > 0)
        total = integrate_ball(ScalarField(lat, values), np.zeros(3), 0.5)
        errors.append(abs(total - 4 * np.pi) / (4 * np.pi))
    assert errors[0] <= 0.06
    assert errors[1] < errors[0]
