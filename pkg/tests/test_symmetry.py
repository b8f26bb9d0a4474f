# Tests for blow-up symmetry defects
import numpy as np
import pytest

from pharmonic.errors import DomainExit, ScaleUnderresolved
from pharmonic.lattice import Lattice, resample
from pharmonic.presets import axial_map
from pharmonic.symmetry import (
    calibrate_cone_splitting,
    cone_splitting_counterexamples,
    defect_chain,
    directional_energy,
    homogeneous_defect,
    is_symmetric,
    k_symmetric_defect,
    ray_directions,
    symmetry_order,
)


@pytest.fixture
def axial3(lattice3):
    return axial_map(lattice3)


def test_ray_directions_are_unit():
    for m in (2, 3):
        dirs = ray_directions(m, 31)
        assert len(dirs) == 32
        assert np.allclose(np.linalg.norm(dirs, axis=1), 1.0)


def test_constant_map_is_fully_symmetric(constant3, origin3, quad):
    assert homogeneous_defect(constant3, origin3, 0.5, quad=quad).defect < 1e-12
    assert k_symmetric_defect(constant3, origin3, 0.5, 3, quad=quad).defect < 1e-12
    assert symmetry_order(constant3, [0.2, 0.0, 0.0], 0.25, 0.1, quad=quad) == 3


def test_radial_map_at_origin(radial3, origin3, quad):
    assert homogeneous_defect(radial3, origin3, 0.5, quad=quad).defect < 1e-10
    assert symmetry_order(radial3, origin3, 0.5, 0.1, quad=quad) == 0
    chain = defect_chain(radial3, origin3, 0.5, quad=quad)
    assert len(chain) == 4
    assert np.all(np.diff(chain) >= 0)
    assert chain[0] < 1e-10
    assert chain[3] == pytest.approx(2.0, rel=0.05)
    # no line of invariance through the hedgehog
    assert k_symmetric_defect(radial3, origin3, 0.5, 1, quad=quad).defect > 0.2


def test_axial_map_is_one_symmetric(axial3, origin3, quad):
    report = k_symmetric_defect(axial3, origin3, 0.5, 1, quad=quad)
    assert report.defect < 1e-10
    assert abs(abs(report.subspace[0][0]) - 1.0) < 1e-6
    assert symmetry_order(axial3, origin3, 0.5, 0.1, quad=quad) == 1
    assert is_symmetric(axial3, origin3, 0.5, 0, 0.1, quad=quad)
    assert not is_symmetric(axial3, origin3, 0.5, 2, 0.1, quad=quad)


def test_k_range(radial3, origin3, quad):
    with pytest.raises(ValueError):
        k_symmetric_defect(radial3, origin3, 0.5, 0, quad=quad)
    with pytest.raises(ValueError):
        k_symmetric_defect(radial3, origin3, 0.5, 4, quad=quad)


def test_blowup_guards(radial3, quad):
    with pytest.raises(DomainExit):
        homogeneous_defect(radial3, [0.7, 0.0, 0.0], 0.5, quad=quad)
    sampled = radial3.with_values(radial3.values)
    with pytest.raises(ScaleUnderresolved):
        homogeneous_defect(sampled, [0.0, 0.0, 0.0], 0.25, quad=quad)


def test_directional_energy(axial3):
    assert directional_energy(axial3, [1.0, 0.0, 0.0]) < 1e-12
    assert directional_energy(axial3, [0.0, 1.0, 0.0]) > 1.0


def test_cone_splitting_calibration():
    rows = [
        {"t": 0.0, "d0_origin": 0.0, "d0_offset": 0.01, "d1": 0.4},
        {"t": 0.5, "d0_origin": 0.02, "d0_offset": 0.03, "d1": 0.2},
        {"t": 1.0, "d0_origin": 0.3, "d0_offset": 0.0, "d1": 0.9},
    ]
    assert calibrate_cone_splitting(rows, 0.05) == pytest.approx(0.4)
    assert calibrate_cone_splitting(rows, 0.005) == 0.0
    assert [r["t"] for r in cone_splitting_counterexamples(rows, 0.05, 0.3)] == [0.0]


@pytest.mark.parametrize("analytic", [True, False])
def test_defect_of_blowup(radial3, quad, analytic):
    fmap = radial3 if analytic else radial3.with_values(radial3.values)
    x = [0.125, 0.0, 0.0]
    direct = homogeneous_defect(fmap, x, 0.5, quad=quad).defect
    blown = homogeneous_defect(resample(fmap, x, 0.5), np.zeros(3), 1.0, quad=quad).defect
    assert direct > 0.0
    assert blown == pytest.approx(direct, abs=1e-9)


def test_symmetry_imports_blends_at_module_level():
    import pharmonic.symmetry as symmetry
    from pharmonic.presets import blended_map

    assert symmetry.blended_map is blended_map
