# Tests for strata, coverings, regularity scales and the singularity census
import numpy as np
import pytest

from pharmonic.energy import ScaleProfile
from pharmonic.errors import DegenerateFit
from pharmonic.lattice import Lattice, ball_volume
from pharmonic.presets import radial_map
from pharmonic.stratification import (
    StrataLabels,
    analysis_points,
    bad_scale_bound,
    ball_net_bound,
    build_covering,
    classify_strata,
    count_bad_scales,
    inclusion_chain,
    minkowski_fit,
    regularity_scale,
    scale_invariant_norm,
    singularity_census,
    strata_volumes,
    tube_net_bound,
    tube_volume,
)


@pytest.fixture
def line_labels():
    """Points on a segment of the e_1 axis, all almost homogeneous at every scale"""
    xs = np.linspace(-0.5, 0.5, 41)
    points = np.stack([xs, np.zeros_like(xs), np.zeros_like(xs)], axis=1)
    depth = 3
    return StrataLabels(
        points=points, scales=np.array([0.5, 0.25, 0.125]), hscales=np.array([0.2, 0.1, 0.05]),
        orders=np.zeros((len(xs), depth), dtype=int), tuples=np.zeros((len(xs), depth), dtype=np.int8),
        gamma=0.5, eps=0.1, eta=0.1, k_max=2, m=3,
    )


@pytest.fixture(scope="module")
def radial12():
    return radial_map(Lattice(3, 12))


def test_analysis_points():
    lat = Lattice(3, 8)
    pts = analysis_points(lat, 0.5, stride=2)
    assert np.all(np.linalg.norm(pts, axis=1) <= 0.5 + 1e-9)
    assert np.allclose(np.mod(pts * lat.n, 2), 0.0)
    assert any(np.allclose(p, 0.0) for p in pts)


def test_membership_is_nested(line_labels):
    labels = line_labels
    labels.orders[5] = [0, 1, 2]
    labels.orders[6] = [3, 3, 3]
    assert labels.members(0, 1)[5] and not labels.members(0, 2)[5]
    assert labels.members(1, 2)[5] and labels.members(2, 3)[5]
    assert not labels.members(2, 1)[6]
    for k in range(3):
        for j in (1, 2):
            assert np.all(labels.members(k, j + 1) <= labels.members(k, j))
    with pytest.raises(ValueError):
        labels.members(0, 4)


def test_classify_radial_map(radial3, quad):
    points = np.array([[0.0, 0.0, 0.0], [0.25, 0.0, 0.0]])
    labels = classify_strata(radial3, gamma=0.5, eps=0.1, eta=0.3, j_max=3, points=points, quad=quad)
    assert labels.depth == 3
    assert np.all(labels.orders[0] == 0)
    assert np.all(labels.tuples[0] == 0)
    assert labels.members(0, 3).tolist() == [True, False]
    assert len(labels.rows()) == 2


def test_classify_truncates_sampled_maps(radial3, quad):
    sampled = radial3.with_values(radial3.values)
    labels = classify_strata(sampled, j_max=3, points=np.zeros((1, 3)), quad=quad)
    assert labels.depth == 0
    assert labels.rows()[0][3] == ""
    with pytest.raises(ValueError):
        classify_strata(radial3, gamma=0.6)


def test_count_bad_scales():
    profile = ScaleProfile(x=(0.0,), scales=np.array([0.2, 0.1, 0.05, 0.025, 0.0125]),
                           theta=np.array([3.0, 2.5, 1.0, 0.9, 0.8]), p=2.0, m=1)
    assert count_bad_scales(profile, 0.5, A=2) == 2
    assert count_bad_scales(profile, 5.0, A=2) == 0


def test_bad_scale_bound(constant3, radial3):
    assert bad_scale_bound(constant3, [0.1, 0.0, 0.0], 0.5) == pytest.approx(1.0)
    # theta of the hedgehog is scale invariant at its centre
    assert bad_scale_bound(radial3, [0.0, 0.0, 0.0], 0.5) < 3.0


def test_covering_of_a_segment(line_labels):
    tree = build_covering(line_labels, 0)
    assert tree.stratum_points == 41
    assert tree.uncovered == 0
    assert tree.D == 1
    assert tree.leaf_count <= tree.bound
    assert tree.balls_per_level[0] == 1
    assert all(n.radius == pytest.approx(0.125) for n in tree.leaves)
    leaves = np.array([n.center for n in tree.leaves])
    gaps = np.linalg.norm(line_labels.points[:, None, :] - leaves[None], axis=-1).min(axis=1)
    assert gaps.max() <= 0.125 + 1e-12
    dumped = tree.model_dump(by_alias=True)
    assert "tuple" in dumped["nodes"][1]


def test_net_bounds():
    assert ball_net_bound(3, 0.5) == 125
    assert tube_net_bound(3, 0, 0.5) == 27
    assert tube_net_bound(3, 3, 0.5) == ball_net_bound(3, 0.5)
    assert tube_net_bound(3, 1, 0.5) < tube_net_bound(3, 2, 0.5) < ball_net_bound(3, 0.5)


def test_segment_branches_like_a_tube(line_labels):
    tree = build_covering(line_labels, 1)
    assert tree.good_children <= tree.tube_bound == tube_net_bound(3, 1, 0.5)
    assert tree.max_children >= tree.good_children
    assert tree.bound == 3 * 125 * tree.tube_bound ** 2


def test_cloud_breaks_the_tube_bound():
    # a solid cloud put in S^0 with no bad scales cannot branch like a point tube
    rng = np.random.default_rng(3)
    points = rng.uniform(-0.6, 0.6, size=(4000, 3))
    points = points[np.linalg.norm(points, axis=1) <= 0.95]
    labels = StrataLabels(
        points=points, scales=np.array([0.125]), hscales=np.array([0.05]),
        orders=np.zeros((len(points), 1), dtype=int), tuples=np.zeros((len(points), 1), dtype=np.int8),
        gamma=0.125, eps=0.1, eta=0.1, k_max=2, m=3,
    )
    tree = build_covering(labels, 0)
    assert tree.uncovered == 0
    assert tree.good_children > tree.tube_bound


def test_covering_of_an_empty_stratum(line_labels):
    line_labels.orders[:] = 2
    tree = build_covering(line_labels, 0)
    assert tree.stratum_points == 0
    assert len(tree.nodes) == 1
    assert tree.leaf_count == 0


def test_strata_volumes(line_labels):
    radii, volumes, slope = strata_volumes(line_labels, 0, Lattice(3, 16))
    assert radii == [0.5, 0.25, 0.125]
    assert volumes[0] > volumes[1] > volumes[2] > 0
    assert slope is not None and 1.0 < slope < 3.0


def test_regularity_scale_of_constant(constant3):
    rf = regularity_scale(constant3, r_cap=0.5)
    assert np.allclose(rf.r_f[constant3.lattice.inside], 0.5)
    assert not rf.singular().any()


def test_regularity_scale_of_hedgehog(radial12):
    lat = radial12.lattice
    rf = regularity_scale(radial12, r_cap=2 * lat.h)
    centre = (lat.n,) * 3
    assert rf.r_f[centre] == pytest.approx(lat.h / np.sqrt(3), rel=1e-6)
    singular = np.argwhere(rf.singular())
    # the node value at the centre is arbitrary, so one neighbour may join it
    assert list(centre) in singular.tolist()
    assert np.all(np.abs(singular - np.array(centre)).sum(axis=1) <= 1)
    assert scale_invariant_norm(radial12, centre, rf.r_f[centre]) == pytest.approx(1.0, rel=1e-6)


def test_tube_volume_of_a_point(lattice3):
    vol = tube_volume(lattice3, np.zeros((1, 3)), [0.3, 0.5])
    assert vol[0] == pytest.approx(ball_volume(3, 0.3), rel=0.02)
    assert vol[1] == pytest.approx(ball_volume(3, 0.5), rel=0.02)


def test_minkowski_fit(lattice3):
    radii = np.geomspace(0.05, 0.6, 5)
    report = minkowski_fit(np.zeros((1, 3)), radii, Lattice(3, 32))
    assert report.exponent == pytest.approx(3.0, abs=0.15)
    empty = minkowski_fit(np.zeros((0, 3)), radii, lattice3)
    assert empty.degenerate and empty.exponent is None
    with pytest.raises(DegenerateFit):
        minkowski_fit(np.zeros((1, 3)), [0.1, 0.2, 0.3], lattice3)
    with pytest.raises(DegenerateFit):
        minkowski_fit(np.zeros((1, 3)), [0.1, 0.2, 0.3, 0.5], lattice3)


def test_census_of_hedgehog(radial12):
    report = singularity_census(radial12, r_cut=0.1)
    assert report.count == 1
    assert report.borderline
    assert np.linalg.norm(report.clusters[0].center) <= radial12.lattice.h
    assert "pinch-violation" not in report.flags


def test_census_of_constant(constant3):
    report = singularity_census(constant3, r_cut=0.1)
    assert report.count == 0
    assert report.clusters == []


def test_inclusion_chain(radial12, quad):
    lat = radial12.lattice
    rf = regularity_scale(radial12, r_cap=2 * lat.h)
    rows = inclusion_chain(radial12, rf, [lat.h, 2 * lat.h], 0.002, quad=quad)
    assert [row["singular_in_region"] for row in rows] == [True, True]
    assert all(row["symmetric_points"] == 0 for row in rows)
