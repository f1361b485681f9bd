import math

import numpy as np
import pytest

from oracles import rotate_translate
from tactile_explore.encoder import CONTACT, FREE, UNEXPLORED, OccupancyGrid
from tactile_explore.env import ContactSignal
from tactile_explore.errors import ConfigurationError, DataError
from tactile_explore.geometry import GridSpec, Pose2D, generate_polygon, rasterize_truth
from tactile_explore.icp import (
    BoundaryModel,
    ICPConfig,
    ICPDiscriminator,
    grid_to_pointcloud,
    icp_align,
    icp_discriminate,
    initial_transforms,
    match_distribution,
)


def contact_grid_of(poly, pose, spec=GridSpec()):
    """Codes with every occupied cell that borders free space marked as contact."""
    occ = rasterize_truth(poly, pose, spec).occupied
    n = spec.n
    codes = np.zeros((n, n), dtype=np.uint8)
    for ix, iy in np.argwhere(occ):
        for dx, dy in ((0, 1), (1, 0), (0, -1), (-1, 0)):
            x, y = ix + dx, iy + dy
            if 0 <= x < n and 0 <= y < n and not occ[x, y]:
                codes[ix, iy] = CONTACT
                break
    return codes


class TestPointCloud:
    def test_empty(self):
        assert grid_to_pointcloud(OccupancyGrid((60, 60))).shape == (0, 2)

    def test_single_corner_cell(self):
        g = OccupancyGrid((60, 60)).update((0, 0), ContactSignal.COLLISION)
        np.testing.assert_allclose(grid_to_pointcloud(g, 0.005, (0.0, 0.0)), [[0.0025, 0.0025]])

    def test_workspace_frame_origin(self):
        g = OccupancyGrid((60, 60)).update((30, 30), ContactSignal.COLLISION)
        np.testing.assert_allclose(grid_to_pointcloud(g, 0.005, GridSpec().origin), [[0.0025, 0.0025]])

    def test_counts_match_for_random_grids(self, rng):
        for _ in range(1000):
            cells = rng.choice([UNEXPLORED, FREE, CONTACT], size=(20, 20)).astype(np.uint8)
            assert len(grid_to_pointcloud(cells)) == int((cells == CONTACT).sum())


class TestBoundaryModel:
    def test_spacing_and_vertices(self, square):
        m = BoundaryModel.from_polygon(square, 0.001)
        pts = m.points()
        assert len(pts) == 4 * 60
        for v in square.vertices:
            assert np.min(np.hypot(*(pts - v).T)) < 1e-15

    def test_nearest_is_exact(self, square):
        m = BoundaryModel.from_polygon(square, 0.001)
        q = np.random.default_rng(0).uniform(-0.05, 0.05, size=(300, 2))
        near, d2 = m.nearest(q)
        pts = m.points()
        brute = ((q[:, None, :] - pts[None]) ** 2).sum(-1)
        np.testing.assert_allclose(d2, brute.min(axis=1), atol=1e-15)


class TestAlign:
    def test_empty_cloud(self, square):
        with pytest.raises(DataError):
            icp_align(np.zeros((0, 2)), square)

    def test_self_match(self, objects):
        for o in objects:
            m = BoundaryModel.from_polygon(o)
            assert icp_align(m.points(), m, 0.0).residual < 1e-6

    def test_known_transform_recovery(self, objects):
        angle, t = math.radians(10), (0.02, 0.0)
        for o in objects:
            m = BoundaryModel.from_polygon(o)
            cloud = rotate_translate(m.points(), angle, t)
            al = icp_align(cloud, m, init_angle=angle)
            err = (al.rotation - angle + math.pi) % (2 * math.pi) - math.pi
            assert abs(math.degrees(err)) < 1.0
            assert np.hypot(*(al.translation - t)) < 0.002

    @pytest.mark.parametrize("residual,init", [("mean", "centroid"), ("mean", "origin"), ("rms", "centroid")])
    def test_residual_non_increasing(self, residual, init):
        rng = np.random.default_rng(7)
        for i in range(100):
            poly = generate_polygon(rng)
            m = BoundaryModel.from_polygon(poly)
            pts = m.points()
            sub = pts[rng.choice(len(pts), size=min(len(pts), 40), replace=False)]
            cloud = rotate_translate(sub, rng.uniform(0, 2 * math.pi), rng.uniform(-0.02, 0.02, 2))
            cloud += rng.normal(0, 0.001, cloud.shape)
            al = icp_align(cloud, m, init_angle=rng.uniform(0, 2 * math.pi), residual=residual,
                           init_translation=init)
            assert np.all(np.diff(al.history) <= 0.0)
            assert al.residual == al.history[-1]

    def test_both_is_not_a_single_start(self, square):
        with pytest.raises(ConfigurationError):
            icp_align(np.ones((3, 2)), square, init_translation="both")

    def test_initial_transforms(self, square):
        m = BoundaryModel.from_polygon(square)
        cloud = np.array([[0.1, 0.0], [0.1, 0.01]])
        th, t = initial_transforms(cloud, m, [0.0, math.pi / 2], "both")
        assert len(th) == 4
        np.testing.assert_allclose(th[:2], [0.0, -math.pi / 2])
        assert not t[2:].any()
        # the centroid start maps the cloud centroid onto the model centroid
        c, s = math.cos(th[1]), math.sin(th[1])
        cc = cloud.mean(axis=0)
        np.testing.assert_allclose([c * cc[0] - s * cc[1], s * cc[0] + c * cc[1]] + t[1], m.centroid, atol=1e-15)


class TestMatchDistribution:
    def test_none_matched_is_uniform(self):
        matched, dist = match_distribution([0.01, 0.02, 0.03], 0.0025)
        assert not matched.any()
        np.testing.assert_allclose(dist, 1 / 3)

    def test_single_match(self):
        _, dist = match_distribution([0.01, 0.001, 0.03], 0.0025)
        np.testing.assert_array_equal(dist, [0.0, 1.0, 0.0])

    def test_two_matches(self):
        _, dist = match_distribution([0.001, 0.002, 0.03], 0.0025)
        np.testing.assert_array_equal(dist, [0.5, 0.5, 0.0])

    def test_threshold_is_strict(self):
        matched, _ = match_distribution([0.0025], 0.0025)
        assert not matched[0]


class TestDiscriminate:
    def test_empty_grid(self, objects):
        pred = icp_discriminate(OccupancyGrid((60, 60)), objects)
        assert pred.confidence == pytest.approx(0.1)
        assert not pred.confidence > 0.98

    def test_full_contour_identifies_object(self, objects):
        disc = ICPDiscriminator(objects)
        for o in objects[:4]:
            codes = contact_grid_of(o, Pose2D(1.1, (0.004, -0.006)))
            res = disc.evaluate_grid(codes)
            assert res.best_errors[o.id] < 0.0025
            assert res.prediction.label == o.id

    def test_two_matches_split(self, objects):
        disc = ICPDiscriminator(objects, ICPConfig(match_threshold=1.0))
        codes = contact_grid_of(objects[0], Pose2D())
        sub = ICPDiscriminator(objects[:2], ICPConfig(match_threshold=1.0))
        np.testing.assert_array_equal(sub.evaluate_grid(codes).distribution, [0.5, 0.5])
        assert disc.evaluate_grid(codes).prediction.confidence == pytest.approx(0.1)

    def test_distribution_is_simplex(self, objects):
        disc = ICPDiscriminator(objects)
        rng = np.random.default_rng(3)
        for _ in range(20):
            codes = np.zeros((60, 60), dtype=np.uint8)
            idx = rng.integers(10, 50, size=(int(rng.integers(1, 15)), 2))
            codes[idx[:, 0], idx[:, 1]] = CONTACT
            d = disc.evaluate_grid(codes).distribution
            assert np.all(d >= 0) and d.sum() == pytest.approx(1.0)

    def test_best_error_not_worse_than_identity_start(self, objects):
        cfg = ICPConfig()
        disc = ICPDiscriminator(objects, cfg)
        rng = np.random.default_rng(4)
        for o in objects:
            pose = Pose2D(rng.uniform(0, 2 * math.pi), tuple(rng.uniform(-0.01, 0.01, 2)))
            cloud = grid_to_pointcloud(contact_grid_of(o, pose), 0.005, GridSpec().origin)
            best = disc.best_errors(cloud)[o.id]
            al = icp_align(cloud, disc.models[o.id], 0.0, init_translation=cfg.init_translation)
            assert best <= al.history[0]
            assert best <= al.residual

    def test_permutation_invariance(self, objects):
        disc = ICPDiscriminator(objects)
        cloud = grid_to_pointcloud(contact_grid_of(objects[5], Pose2D(0.4)), 0.005, GridSpec().origin)
        perm = np.random.default_rng(0).permutation(len(cloud))
        np.testing.assert_allclose(disc.best_errors(cloud), disc.best_errors(cloud[perm]), rtol=1e-9, atol=1e-12)

    def test_cache_hits_return_same_result(self, objects):
        disc = ICPDiscriminator(objects)
        codes = contact_grid_of(objects[1], Pose2D())
        assert disc.evaluate_grid(codes) is disc.evaluate_grid(codes.copy())

    def test_predict_from_image(self, objects):
        disc = ICPDiscriminator(objects)
        g = OccupancyGrid.from_cells(contact_grid_of(objects[2], Pose2D(2.0)))
        assert disc.predict(g.view_for_discriminator()).label == 2
        assert disc.predict_proba(np.stack([g.view_for_discriminator()])).shape == (1, 10)

    def test_config_validation(self):
        with pytest.raises(ConfigurationError):
            ICPConfig(residual="median")
        with pytest.raises(ConfigurationError):
            ICPConfig(num_inits=0)
