import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from spectral_grasp.cloud_io import PointCloud, estimate_normals, infer_format, load_cloud, save_cloud
from spectral_grasp.errors import EmptyCloud, NonFiniteValue, ParseError, TooFewPoints
from spectral_grasp.so3corr import euler_zyz_to_matrix

PLY_HEADER = """ply
format ascii 1.0
comment made by hand
element vertex {n}
property float x
property float y
property float z
{extra}end_header
"""
NORMAL_PROPS = "property float nx\nproperty float ny\nproperty float nz\n"


def _write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_ply_with_normals(tmp_path):
    body = "0 0 0 0 0 2\n1 0 0 3 0 0\n0 1 0 0 -0.5 0\n"
    p = _write(tmp_path, "a.ply", PLY_HEADER.format(n=3, extra=NORMAL_PROPS) + body)
    c = load_cloud(p)
    assert len(c) == 3
    np.testing.assert_allclose(np.linalg.norm(c.normals, axis=1), 1.0, atol=1e-12)
    np.testing.assert_allclose(c.normals, [[0, 0, 1], [1, 0, 0], [0, -1, 0]])


def test_ply_without_normals_is_flagged(tmp_path):
    p = _write(tmp_path, "b.ply", PLY_HEADER.format(n=2, extra="") + "0 0 0\n1 1 1\n")
    c = load_cloud(p)
    assert c.normals_missing and not c.has_normals
    assert not c.valid.any()


def test_ply_short_body_is_parse_error(tmp_path):
    p = _write(tmp_path, "c.ply", PLY_HEADER.format(n=5, extra="") + "0 0 0\n1 1 1\n")
    with pytest.raises(ParseError):
        load_cloud(p)


def test_ply_skips_other_elements(tmp_path):
    text = ("ply\nformat ascii 1.0\nelement vertex 2\nproperty double x\nproperty double y\n"
            "property double z\nelement face 1\nproperty list uchar int vertex_indices\nend_header\n"
            "0 0 0\n1 2 3\n3 0 1 1\n")
    c = load_cloud(_write(tmp_path, "f.ply", text))
    np.testing.assert_array_equal(c.points, [[0, 0, 0], [1, 2, 3]])


@pytest.mark.parametrize("text", ["not a ply\n", "ply\nformat binary_little_endian 1.0\nend_header\n"])
def test_ply_bad_header(tmp_path, text):
    with pytest.raises(ParseError):
        load_cloud(_write(tmp_path, "d.ply", text))


def test_empty_and_nonfinite(tmp_path):
    with pytest.raises(EmptyCloud):
        load_cloud(_write(tmp_path, "e.ply", PLY_HEADER.format(n=0, extra="")))
    with pytest.raises(NonFiniteValue):
        load_cloud(_write(tmp_path, "n.xyz", "0 0 nan\n"))


def test_xyz_comments_and_normals(tmp_path):
    c = load_cloud(_write(tmp_path, "a.xyz", "# header\n0 0 0 0 0 1\n\n1 0 0 0 0 1 # tail\n"))
    assert len(c) == 2 and c.has_normals


def test_infer_format():
    assert infer_format("x.PLY") == "ply-ascii"
    assert infer_format("x.xyz") == "xyz"
    with pytest.raises(ParseError):
        infer_format("x.obj")


@pytest.mark.parametrize("suffix", [".ply", ".xyz"])
def test_round_trip(tmp_path, rng, suffix):
    n = rng.standard_normal((50, 3))
    c = PointCloud(rng.standard_normal((50, 3)), n)
    path = tmp_path / f"r{suffix}"
    save_cloud(c, path)
    back = load_cloud(path)
    np.testing.assert_array_equal(back.points, c.points)
    np.testing.assert_allclose(back.normals, c.normals, atol=1e-15)


def _plane(rng, n=100):
    xy = rng.uniform(-0.05, 0.05, (n, 2))
    return PointCloud(np.column_stack([xy, np.zeros(n)]))


def _pca_oracle(pts, k):
    # least-variance direction by an explicit covariance + eigendecomposition
    out = []
    for p in pts:
        d = np.linalg.norm(pts - p, axis=1)
        nb = pts[np.argsort(d, kind="stable")[:k]]
        cov = np.cov(nb.T)
        w, v = np.linalg.eigh(cov)
        out.append(v[:, 0])
    return np.array(out)


@pytest.mark.parametrize("vp,expected", [((0, 0, 1), (0, 0, 1)), ((0, 0, -1), (0, 0, -1))])
def test_estimate_normals_plane(rng, vp, expected):
    c = estimate_normals(_plane(rng), k=16, viewpoint=vp)
    np.testing.assert_allclose(c.normals, np.tile(expected, (100, 1)), atol=1e-3)
    oracle = _pca_oracle(c.points, 16)
    np.testing.assert_allclose(np.abs(np.sum(oracle * c.normals, axis=1)), 1.0, atol=1e-9)


def test_estimate_normals_too_few():
    with pytest.raises(TooFewPoints):
        estimate_normals(PointCloud([[0, 0, 0], [1, 0, 0]]), k=3)


def test_estimate_normals_degenerate_patch_flagged():
    pts = np.column_stack([np.linspace(0, 1, 20), np.zeros(20), np.zeros(20)])
    c = estimate_normals(PointCloud(pts), k=5)
    assert not c.valid.any()


@settings(max_examples=15, deadline=None)
@given(st.floats(0, 2 * np.pi), st.floats(0, np.pi), st.floats(0, 2 * np.pi),
       st.tuples(*[st.floats(-1, 1)] * 3))
def test_estimate_normals_rigid_invariance(a, b, g, t):
    rng = np.random.default_rng(7)
    base = PointCloud(np.column_stack([rng.uniform(-0.05, 0.05, (200, 2)),
                                       0.01 * rng.uniform(-1, 1, 200) ** 2]))
    vp = np.array([0.0, 0.0, 1.0])
    R = euler_zyz_to_matrix(a, b, g)
    ref = estimate_normals(base, 16, vp)
    moved = estimate_normals(base.transformed(R, t), 16, R @ vp + np.asarray(t))
    np.testing.assert_allclose(moved.normals, ref.normals @ R.T, atol=1e-3)
