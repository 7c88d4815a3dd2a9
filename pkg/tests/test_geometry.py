import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mvfad.geometry import (
    CameraModel,
    PointCloudGrid,
    RotationAngles,
    backproject_depth,
    project_points,
    rotate_cloud,
    rotation_matrix,
    view_grid,
)

RNG = np.random.default_rng(20240811)


def random_cloud(h=6, w=7, valid_ratio=0.8, rng=RNG):
    pts = rng.normal(size=(h, w, 3))
    valid = rng.random((h, w)) < valid_ratio
    pts[~valid] = 0.0
    return PointCloudGrid(points=pts, valid=valid)


class TestRotationMatrix:
    def test_zero_angles_is_identity(self):
        r = rotation_matrix(RotationAngles(0.0, 0.0, 0.0))
        np.testing.assert_array_equal(r, np.eye(3))

    def test_half_pi_first_factor(self):
        # Symbolic substitution into the first factor: cos=0, sin=1.
        r = rotation_matrix(RotationAngles(math.pi / 2, 0.0, 0.0))
        expected = np.array([[0.0, 1.0, 0.0], [-1.0, 0.0, 0.0], [0.0, 0.0, 1.0]])
        np.testing.assert_allclose(r, expected, atol=1e-15)

    def test_orthogonality_and_determinant_100_random_triples(self):
        rng = np.random.default_rng(1)
        for _ in range(100):
            angles = RotationAngles(*rng.uniform(-2 * math.pi, 2 * math.pi, size=3))
            r = rotation_matrix(angles)
            assert np.abs(r.T @ r - np.eye(3)).max() <= 1e-9
            assert abs(np.linalg.det(r) - 1.0) <= 1e-9

    @given(st.floats(-50, 50), st.floats(-50, 50), st.floats(-50, 50))
    @settings(max_examples=60, deadline=None)
    def test_orthogonality_property(self, tx, ty, tz):
        r = rotation_matrix(RotationAngles(tx, ty, tz))
        assert np.abs(r.T @ r - np.eye(3)).max() <= 1e-9

    def test_nonfinite_angle_rejected(self):
        with pytest.raises(ValueError):
            RotationAngles(math.nan, 0.0, 0.0)
        with pytest.raises(ValueError):
            RotationAngles(0.0, math.inf, 0.0)


class TestRotateCloud:
    def test_identity_rotation_exact(self):
        cloud = random_cloud()
        out = rotate_cloud(cloud, np.eye(3))
        np.testing.assert_array_equal(out.points, cloud.points)
        np.testing.assert_array_equal(out.valid, cloud.valid)

    def test_hand_matrix_vector_product(self):
        # (1, 0, 0) under the quarter-turn factor lands on (0, -1, 0).
        r = np.array([[0.0, 1.0, 0.0], [-1.0, 0.0, 0.0], [0.0, 0.0, 1.0]])
        cloud = PointCloudGrid(points=np.array([[[1.0, 0.0, 0.0]]]),
                               valid=np.array([[True]]))
        out = rotate_cloud(cloud, r)
        np.testing.assert_allclose(out.points[0, 0], [0.0, -1.0, 0.0], atol=1e-15)

    def test_norms_and_pairwise_distances_preserved(self):
        rng = np.random.default_rng(2)
        cloud = random_cloud(rng=rng)
        r = rotation_matrix(RotationAngles(*rng.uniform(-3, 3, size=3)))
        out = rotate_cloud(cloud, r)
        before = cloud.points[cloud.valid]
        after = out.points[out.valid]
        np.testing.assert_allclose(
            np.linalg.norm(after, axis=1), np.linalg.norm(before, axis=1), atol=1e-9)
        d_before = np.linalg.norm(before[:, None] - before[None, :], axis=-1)
        d_after = np.linalg.norm(after[:, None] - after[None, :], axis=-1)
        np.testing.assert_allclose(d_after, d_before, atol=1e-9)

    def test_invalid_rotation_rejected(self):
        cloud = random_cloud()
        with pytest.raises(ValueError):
            rotate_cloud(cloud, np.eye(3) * 2.0)


class TestViewGrid:
    def test_default_grid_has_27_views(self):
        assert len(view_grid()) == 27

    def test_center_entry_is_identity_view(self):
        grid = view_grid((-math.pi / 6, 0.0, math.pi / 6))
        assert grid[14 - 1] == RotationAngles(0.0, 0.0, 0.0)

    def test_first_and_last_entries(self):
        # Enumeration oracle: full lexicographic product, x outermost.
        import itertools

        a = 0.4
        values = (-a, 0.0, a)
        grid = view_grid(values)
        expected = [RotationAngles(*t) for t in itertools.product(values, repeat=3)]
        assert grid == expected
        assert grid[0] == RotationAngles(-a, -a, -a)
        assert grid[26] == RotationAngles(a, a, a)

    def test_wrong_count_rejected(self):
        with pytest.raises(ValueError):
            view_grid((0.1, 0.2))
        with pytest.raises(ValueError):
            view_grid((0.1, 0.2, 0.3, 0.4))

    def test_duplicate_values_rejected(self):
        with pytest.raises(ValueError):
            view_grid((0.1, 0.1, 0.3))


class TestProjectPoints:
    def test_optical_axis_hits_principal_point(self):
        cam = CameraModel(fx=100.0, fy=120.0, cx=32.0, cy=24.0)
        cloud = PointCloudGrid(points=np.array([[[0.0, 0.0, 2.5]]]),
                               valid=np.array([[True]]))
        u, v, depth, visible = project_points(cloud, cam)
        assert visible[0, 0]
        assert u[0, 0] == pytest.approx(32.0)
        assert v[0, 0] == pytest.approx(24.0)
        assert depth[0, 0] == pytest.approx(2.5)

    def test_pinhole_formula_by_hand(self):
        cam = CameraModel(fx=100.0, fy=100.0, cx=10.0, cy=20.0)
        x, z = 0.3, 1.5
        cloud = PointCloudGrid(points=np.array([[[x, 0.0, z]]]), valid=np.array([[True]]))
        u, v, _, visible = project_points(cloud, cam)
        assert visible[0, 0]
        assert u[0, 0] == pytest.approx(10.0 + 100.0 * x / z)
        assert v[0, 0] == pytest.approx(20.0)

    def test_nonpositive_depth_invisible(self):
        cam = CameraModel(fx=100.0, fy=100.0, cx=0.0, cy=0.0)
        pts = np.array([[[0.0, 0.0, -1.0], [0.0, 0.0, 0.0], [0.0, 0.0, 1.0]]])
        cloud = PointCloudGrid(points=pts, valid=np.ones((1, 3), dtype=bool))
        *_, visible = project_points(cloud, cam)
        assert list(visible[0]) == [False, False, True]

    def test_projection_homogeneity(self):
        cam = CameraModel(fx=80.0, fy=90.0, cx=15.0, cy=17.0)
        rng = np.random.default_rng(3)
        pts = rng.uniform(-1, 1, size=(4, 5, 3))
        pts[..., 2] = rng.uniform(0.5, 3.0, size=(4, 5))
        cloud = PointCloudGrid(points=pts, valid=np.ones((4, 5), dtype=bool))
        u1, v1, *_ = project_points(cloud, cam)
        for lam in (0.25, 3.0, 17.5):
            scaled = PointCloudGrid(points=pts * lam, valid=cloud.valid)
            u2, v2, *_ = project_points(scaled, cam)
            np.testing.assert_allclose(u2, u1, atol=1e-9)
            np.testing.assert_allclose(v2, v1, atol=1e-9)

    def test_extrinsic_applied_before_pinhole(self):
        # Pushing the cloud 2 units down the optical axis via the extrinsic.
        cam = CameraModel(fx=50.0, fy=50.0, cx=0.0, cy=0.0,
                          translation=np.array([0.0, 0.0, 2.0]))
        cloud = PointCloudGrid(points=np.array([[[0.5, 0.0, 0.0]]]), valid=np.array([[True]]))
        u, v, depth, visible = project_points(cloud, cam)
        assert visible[0, 0]
        assert depth[0, 0] == pytest.approx(2.0)
        assert u[0, 0] == pytest.approx(50.0 * 0.5 / 2.0)


class TestBackprojection:
    def test_roundtrip_through_camera(self):
        cam = CameraModel(fx=77.0, fy=91.0, cx=7.5, cy=8.5)
        rng = np.random.default_rng(4)
        depth = np.where(rng.random((16, 16)) < 0.7, rng.uniform(0.5, 2.0, (16, 16)), 0.0)
        cloud = backproject_depth(depth, cam)
        u, v, z, visible = project_points(cloud, cam)
        np.testing.assert_array_equal(visible, depth > 0)
        jj, ii = np.meshgrid(np.arange(16.0), np.arange(16.0))
        np.testing.assert_allclose(u[visible], jj[visible], atol=1e-9)
        np.testing.assert_allclose(v[visible], ii[visible], atol=1e-9)
        np.testing.assert_allclose(z[visible], depth[visible], atol=1e-12)
