import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.spatial.transform import Rotation

from spectral_grasp.cloud_io import PointCloud
from spectral_grasp.contacts import ContactSet, GraspCandidate, Pose, parallel_jaw
from spectral_grasp.errors import InsufficientPatch
from spectral_grasp.locomo import (LocomoParams, contact_moment, extract_patch, grasp_quality, pad_shift_table,
                                   rank_grasps, tangent_frame, zero_moment_shift)
from spectral_grasp.shapes import sample_plane, sample_roof, sample_sphere

UP = np.array([0.0, 0.0, 1.0])


@pytest.fixture(scope="module")
def plane():
    # spacing 0.1/142 m is incommensurate with the patch radii, so no lattice
    # point sits on a patch boundary
    return sample_plane(size=0.1, n_side=143)


def _at(cloud, xy):
    """Lattice point of ``cloud`` nearest ``xy``."""
    return cloud.points[int(np.argmin(np.linalg.norm(cloud.points[:, :2] - xy, axis=1)))]


def _cand(points, normals, corr=0.5):
    cs = ContactSet((0, 1), np.asarray(points, float), np.asarray(normals, float), None, corr)
    return GraspCandidate(cs, Pose(np.eye(3), np.zeros(3)), float(np.linalg.norm(np.subtract(*points))))


def test_params_validation():
    with pytest.raises(ValueError):
        LocomoParams(kappa=2)
    with pytest.raises(ValueError):
        LocomoParams(radii=(0.01, 0.005, 0.02))
    with pytest.raises(ValueError):
        LocomoParams(sigma=0.0)
    with pytest.raises(ValueError):
        LocomoParams(omega=(1.0, -1.0))


@pytest.mark.parametrize("n", [UP, [1, 0, 0], [0.3, -0.4, 0.866], [0, 1e-9, -1]])
def test_tangent_frame(n):
    F = tangent_frame(n)
    np.testing.assert_allclose(F.T @ F, np.eye(3), atol=1e-12)
    assert abs(np.linalg.det(F) - 1) < 1e-12
    np.testing.assert_allclose(F[:, 2], np.asarray(n) / np.linalg.norm(n), atol=1e-12)


def test_patch_on_plane(plane):
    p = extract_patch(plane, [0, 0, 0], UP, 0.01)
    assert np.all(p.members[:, 2] == 0)
    np.testing.assert_allclose(zero_moment_shift(p), 0.0, atol=1e-6)


def test_isolated_point():
    c = PointCloud([[0, 0, 0], [1, 0, 0]], [UP, UP])
    with pytest.raises(InsufficientPatch):
        extract_patch(c, [0, 0, 0], UP, 0.01, min_points=5)


def test_sphere_patch_count_matches_scan():
    c = sample_sphere(0.05, 20000)
    center = c.points[123]
    p = extract_patch(c, center, c.normals[123], 0.02)
    scan = np.flatnonzero(np.sqrt(((c.points - center) ** 2).sum(1)) <= 0.02)
    assert len(p.members) == len(scan)
    from scipy.spatial import cKDTree
    p2 = extract_patch(c, center, c.normals[123], 0.02, tree=cKDTree(c.points))
    np.testing.assert_array_equal(p2.indices, scan)


def test_spherical_cap_centroid():
    R, r = 0.05, 0.02
    c = sample_sphere(R, 200000)
    top = int(np.argmax(c.points[:, 2]))
    s = zero_moment_shift(extract_patch(c, c.points[top], c.normals[top], r))
    # uniform cap of chord radius r: polar angle a with r = 2 R sin(a/2);
    # its area centroid sits R (1 - cos a) / 2 below the apex
    a = 2 * np.arcsin(r / (2 * R))
    assert s[2] < 0
    assert abs(s[2] - (-R * (1 - np.cos(a)) / 2)) < 0.03 * R * (1 - np.cos(a)) / 2
    assert np.hypot(s[0], s[1]) < 1e-4


def test_half_disc_shift():
    fine = sample_plane(size=0.04, n_side=401)
    half = fine.subset(np.flatnonzero(fine.points[:, 0] > 0))
    r = 0.01
    p = extract_patch(half, [0, 0, 0], UP, r)
    s = zero_moment_shift(p)
    world = p.frame @ s
    assert world[0] > 0
    assert abs(world[0] - 4 * r / (3 * np.pi)) < 0.05 * 4 * r / (3 * np.pi)
    assert abs(world[1]) < 1e-9 and abs(world[2]) < 1e-12


def test_contact_moment_plane(plane):
    assert abs(contact_moment(plane, ([0, 0, 0], UP)) - 1.0) < 1e-6


def test_contact_moment_sigma(plane):
    params = LocomoParams()
    shifts = np.tile([params.sigma, 0.0, 0.0], (3, 1))
    assert abs(contact_moment(plane, ([0, 0, 0], UP), shifts, params) - np.exp(-0.5)) < 1e-6


def test_contact_moment_invalid():
    c = PointCloud([[0, 0, 0], [1, 0, 0]], [UP, UP])
    assert contact_moment(c, ([0, 0, 0], UP)) == 0.0


def test_quality_product():
    p = LocomoParams()
    assert grasp_quality([1, 1], p) == 1.0
    assert grasp_quality([1, 0], p) == 0.0
    assert grasp_quality([0.5, 0.5], LocomoParams(rho=2.0, omega=(1.0, 2.0))) == pytest.approx(2 * 0.5 * 0.25)
    with pytest.raises(ValueError):
        grasp_quality([1, 1, 1], p)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(0, 1), min_size=2, max_size=2), st.floats(0, 1), st.floats(0.1, 5),
       st.floats(0.1, 3), st.floats(0.1, 3))
def test_quality_bounds_and_monotone(m, bump, rho, w1, w2):
    p = LocomoParams(rho=rho, omega=(w1, w2))
    q = grasp_quality(m, p)
    assert 0 <= q <= rho + 1e-12
    higher = [min(1.0, m[0] + bump), m[1]]
    assert grasp_quality(higher, p) >= q - 1e-15


def test_pad_shifts_flat_jaw():
    table = pad_shift_table(parallel_jaw(), LocomoParams())
    assert table.shape == (2, 3, 3)
    np.testing.assert_allclose(table, 0.0, atol=1e-12)


def test_rank_planes_and_rho(plane):
    jaw = parallel_jaw()
    good = _cand([_at(plane, (0, 0)), _at(plane, (0.01, 0.01))], [UP, UP], 0.2)
    edge = _cand([[0.0495, 0.0, 0], [0.0, 0.0495, 0]], [UP, UP], 0.9)
    ranked = rank_grasps([edge, good], plane, jaw)
    assert ranked[0] is good and good.score == pytest.approx(1.0, abs=1e-6)
    assert edge.score < 1.0
    scores1 = [c.score for c in ranked]
    ranked2 = rank_grasps([edge, good], plane, jaw, LocomoParams(rho=2.0))
    assert [c is d for c, d in zip(ranked, ranked2)] == [True, True]
    np.testing.assert_allclose([c.score for c in ranked2], 2 * np.array(scores1), rtol=1e-12)


def test_rank_ties_by_correlation(plane):
    jaw = parallel_jaw()
    p, q = _at(plane, (0, 0)), _at(plane, (0.01, 0))
    a = _cand([p, q], [UP, UP], 0.3)
    b = _cand([p, q], [UP, UP], 0.7)
    c = _cand([q, p], [UP, UP], 0.7)
    assert rank_grasps([a, b, c], plane, jaw) == [b, c, a]
    assert rank_grasps([a, b, c], plane, jaw, workers=3) == [b, c, a]


def test_plane_beats_ridge():
    roof = sample_roof(half_width=0.03, length=0.06, slope=1.0, spacing=0.001)
    pts, nrm = roof.points, roof.normals
    ridge = int(np.argmin(np.abs(pts[:, 0]) + np.abs(pts[:, 1])))
    flat = int(np.argmin(np.abs(pts[:, 0] - 0.02) + np.abs(pts[:, 1])))
    m_ridge = contact_moment(roof, (pts[ridge], nrm[ridge]))
    m_flat = contact_moment(roof, (pts[flat], nrm[flat]))
    assert m_flat > m_ridge
    jaw = parallel_jaw()
    on_ridge = _cand([pts[ridge], pts[ridge] + [0, 0.01, 0]], [nrm[ridge]] * 2)
    on_flat = _cand([pts[flat], pts[flat] + [0, 0.01, 0]], [nrm[flat]] * 2)
    assert rank_grasps([on_ridge, on_flat], roof, jaw)[0] is on_flat


@settings(max_examples=10, deadline=None)
@given(st.tuples(*[st.floats(-np.pi, np.pi)] * 3), st.tuples(*[st.floats(-1, 1)] * 3))
def test_rigid_invariance(angles, t):
    c = sample_sphere(0.05, 4000)
    jaw = parallel_jaw()
    R = Rotation.from_euler("zyz", angles).as_matrix()
    cand = _cand(c.points[[10, 2000]], c.normals[[10, 2000]])
    moved_cloud = c.transformed(R, t)
    moved = _cand(moved_cloud.points[[10, 2000]], moved_cloud.normals[[10, 2000]])
    s0 = rank_grasps([cand], c, jaw)[0].score
    s1 = rank_grasps([moved], moved_cloud, jaw)[0].score
    assert abs(s0 - s1) <= 1e-9
