import numpy as np
import pytest

from surfrecon import normals
from surfrecon.grid import GridSpec
from surfrecon.pointcloud import PointCloud, ShapeRecipe, generate


def brute_pca(points, node, lam):
    inside = np.all(np.abs(points - node) <= lam, axis=1)
    z = points[inside]
    cov = (z - z.mean(axis=0)).T @ (z - z.mean(axis=0))
    return np.linalg.eigh(cov)[1][:, 0], inside.sum()


def test_eigvec_diagonal():
    v = normals.smallest_eigvec_sym(np.diag([5.0, 1.0]))
    assert np.allclose(np.abs(v), [0, 1])


@pytest.mark.parametrize("d", [2, 3])
def test_eigvec_identity_tie_gives_last_axis(d):
    v = normals.smallest_eigvec_sym(np.eye(d))
    assert np.array_equal(v, np.eye(d)[-1])


def test_eigvec_random_residuals():
    rng = np.random.default_rng(0)
    a = rng.standard_normal((5000, 3, 3))
    a = a + a.transpose(0, 2, 1)
    v, tied = normals.smallest_eigvecs(a)
    lam = np.linalg.eigvalsh(a)[:, 0]
    res = np.linalg.norm(np.einsum("nij,nj->ni", a, v) - lam[:, None] * v, axis=1)
    assert not tied.any()
    assert res.max() <= 1e-8
    assert np.allclose(np.linalg.norm(v, axis=1), 1.0, atol=1e-14)


def test_eigvec_2d_random_residuals():
    rng = np.random.default_rng(1)
    a = rng.standard_normal((5000, 2, 2))
    a = a + a.transpose(0, 2, 1)
    v, _ = normals.smallest_eigvecs(a)
    lam = np.linalg.eigvalsh(a)[:, 0]
    assert np.linalg.norm(np.einsum("nij,nj->ni", a, v) - lam[:, None] * v, axis=1).max() <= 1e-10


def test_window_moments_match_enumeration():
    spec = GridSpec((20, 16))
    rng = np.random.default_rng(2)
    c = PointCloud(rng.uniform(0, 15, size=(40, 2)))
    c.points[:3] = [[5, 5], [7.0, 3.0], [9.5, 9.0]]  # exact window boundaries
    count, first, second = normals.window_moments(c, spec, 2.0, origin=np.zeros(2))
    for node in [(5, 5), (7, 1), (11, 7), (0, 0), (19, 15)]:
        inside = np.all(np.abs(c.points - node) <= 2.0, axis=1)
        z = c.points[inside]
        assert count[node] == inside.sum()
        assert np.allclose(first[(slice(None), *node)], z.sum(axis=0))
        assert np.allclose(second[(slice(None), slice(None), *node)], z.T @ z)


def test_line_data_gives_vertical_normal():
    spec = GridSpec((100, 100))
    xs = np.linspace(20, 80, 121)
    c = PointCloud(np.column_stack([xs, np.full_like(xs, 50.0)]))
    nf = normals.estimate_normals(c, spec, 4)
    assert abs(nf.p[:, 50, 50] @ [0, 1]) >= 1 - 1e-9
    assert nf.from_pca[50, 50]


def test_fallback_is_radial():
    spec = GridSpec((100, 100))
    c = PointCloud(np.array([[50.0, 50.0], [51.0, 50.0], [50.0, 52.0]]))
    nf = normals.estimate_normals(c, spec, 4)
    node = np.array([10, 80])
    assert not nf.from_pca[10, 80]
    expected = (node - 50.0) / np.linalg.norm(node - 50.0)
    assert np.array_equal(nf.p[:, 10, 80], expected)


def test_circle_normal_against_brute_force():
    spec = GridSpec((100, 100))
    c = generate(ShapeRecipe("circle", count=60))
    nf = normals.estimate_normals(c, spec, 4)
    node = np.array([80, 50])
    ref, _ = brute_pca(c.points, node, 4)
    assert abs(nf.p[:, 80, 50] @ [1, 0]) >= 0.99
    assert abs(nf.p[:, 80, 50] @ ref) >= 1 - 1e-10


def test_unit_norm_everywhere_3d():
    spec = GridSpec((24, 24, 24))
    c = generate(ShapeRecipe("torus", center=(12, 12, 12), radius=6, radii=(2.5,), count=800))
    nf = normals.estimate_normals(c, spec, 3)
    assert np.allclose(np.linalg.norm(nf.p, axis=0), 1.0, atol=1e-12)
    assert nf.from_pca.any() and nf.fallback.any()
    node = (18, 12, 12)
    if nf.from_pca[node]:
        ref, _ = brute_pca(c.points, np.array(node), 3)
        assert abs(nf.p[(slice(None), *node)] @ ref) >= 1 - 1e-8


def test_collinear_3d_window_falls_back():
    spec = GridSpec((16, 16, 16))
    xs = np.linspace(4, 12, 9)
    c = PointCloud(np.column_stack([xs, np.full(9, 8.0), np.full(9, 8.0)]))
    nf = normals.estimate_normals(c, spec, 2)
    assert not nf.from_pca[8, 8, 8]


def test_sign_convention():
    spec = GridSpec((40, 40))
    xs = np.linspace(5, 35, 61)
    c = PointCloud(np.column_stack([xs, 0.5 * xs + 5]))
    nf = normals.estimate_normals(c, spec, 3)
    p = nf.p[:, nf.from_pca]
    assert np.all(p[0] > 0)
