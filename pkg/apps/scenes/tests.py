# apps/scenes/tests.py

import tempfile
from pathlib import Path

import numpy as np
from django.core.exceptions import ValidationError
from django.test import SimpleTestCase

from .cloud import (
    ScenePointCloud, VoxelIndex, crop_and_normalize, downsample,
    farthest_point_indices, nearest_exhaustive, squared_distances,
)
from .normals import estimate_normals
from .ply import dumps_ply, loads_ply, read_scene, write_ply
from .synth import SceneSpec, synth_scene


def _cloud(points, normals=None):
    points = np.asarray(points, dtype=np.float64)
    if normals is None:
        normals = np.tile([0.0, 0.0, 1.0], (len(points), 1))
    return ScenePointCloud(points, np.full(points.shape, 0.5), normals)


def _random_cloud(rng, count):
    normals = rng.normal(size=(count, 3))
    normals /= np.linalg.norm(normals, axis=1, keepdims=True)
    return ScenePointCloud(rng.uniform(-3, 3, size=(count, 3)), rng.uniform(size=(count, 3)), normals)


class CropTests(SimpleTestCase):
    def test_translation_example(self):
        cloud = _cloud([[6.0, 5.0, 1.0], [7.5, 5.0, 0.0]])
        cropped = crop_and_normalize(cloud, [5.0, 5.0, 0.0], 2.0)
        np.testing.assert_allclose(cropped.points, [[1.0, 0.0, 1.0]])

    def test_matches_brute_force_filter(self):
        rng = np.random.default_rng(0)
        cloud = _random_cloud(rng, 500)
        anchor = np.array([0.5, -0.3, 0.2])
        cropped = crop_and_normalize(cloud, anchor, 1.5)
        expected = [p - anchor for p in cloud.points if np.hypot(p[0] - anchor[0], p[1] - anchor[1]) <= 1.5]
        np.testing.assert_allclose(cropped.points, np.array(expected))

    def test_invariant_under_joint_translation(self):
        rng = np.random.default_rng(1)
        cloud = _random_cloud(rng, 300)
        anchor = np.array([0.2, 0.1, 0.0])
        shift = np.array([12.5, -3.25, 0.75])
        a = crop_and_normalize(cloud, anchor, 2.0)
        b = crop_and_normalize(cloud.translated(shift), anchor + shift, 2.0)
        np.testing.assert_allclose(a.points, b.points, atol=1e-9)

    def test_empty_crop(self):
        with self.assertRaises(ValidationError):
            crop_and_normalize(_cloud([[10.0, 0.0, 0.0]]), [0, 0, 0], 1.0)
        with self.assertRaises(ValidationError):
            crop_and_normalize(_cloud([[0.0, 0.0, 0.0]]), [0, 0, 0], 0.0)


class DownsampleTests(SimpleTestCase):
    def test_small_cloud_is_identity(self):
        cloud = _cloud(np.eye(3))
        self.assertIs(downsample(cloud, 5), cloud)

    def test_square_tie_breaks_to_lower_index(self):
        points = [[0, 0, 0], [0, 1, 0], [1, 0, 0], [1, 1, 0], [0.5, 0.5, 0]]
        self.assertEqual(farthest_point_indices(points, 3).tolist(), [0, 3, 1])

    def test_fps_matches_greedy_recomputation(self):
        rng = np.random.default_rng(2)
        points = rng.uniform(size=(60, 3))
        selected = [0]
        while len(selected) < 10:
            best, best_d = None, -1.0
            for i in range(len(points)):
                d = min(np.sum((points[i] - points[j]) ** 2) for j in selected)
                if d > best_d:
                    best, best_d = i, d
            selected.append(best)
        self.assertEqual(farthest_point_indices(points, 10).tolist(), selected)

    def test_random_is_seeded(self):
        cloud = _random_cloud(np.random.default_rng(3), 200)
        a = downsample(cloud, 50, 'random', seed=4)
        b = downsample(cloud, 50, 'random', seed=4)
        np.testing.assert_array_equal(a.points, b.points)

    def test_fps_spreads_better_than_random(self):
        rng = np.random.default_rng(5)
        wins = 0
        for trial in range(100):
            points = rng.uniform(size=(80, 3))
            fps = points[farthest_point_indices(points, 8)]
            rand = points[rng.choice(80, 8, replace=False)]
            wins += _min_pairwise(fps) >= _min_pairwise(rand)
        self.assertGreaterEqual(wins, 95)

    def test_invalid_arguments(self):
        cloud = _cloud(np.eye(3))
        with self.assertRaises(ValidationError):
            downsample(cloud, 0)
        with self.assertRaises(ValidationError):
            downsample(cloud, 2, method='grid')


def _min_pairwise(points):
    d = np.sqrt(((points[:, None] - points[None]) ** 2).sum(-1))
    return d[np.triu_indices(len(points), 1)].min()


class NearestTests(SimpleTestCase):
    def setUp(self):
        self.plane = synth_scene(SceneSpec('flat', size=4.0, density=100.0))

    def test_above_and_below_plane(self):
        for h in (1.0, 0.37, 0.02):
            _, unsigned, signed = self.plane.nearest([0.05, 0.05, h])
            self.assertAlmostEqual(unsigned, h, places=9)
            self.assertAlmostEqual(signed, h, places=9)
            _, _, below = self.plane.nearest([0.05, 0.05, -h])
            self.assertAlmostEqual(below, -h, places=9)

    def test_matches_exhaustive_scan(self):
        rng = np.random.default_rng(6)
        cloud = _random_cloud(rng, 2000)
        queries = rng.uniform(-4, 4, size=(10000, 3))
        indices, unsigned, _ = cloud.nearest_many(queries)
        for q, idx, dist in zip(queries, indices, unsigned):
            expected_idx, expected_dist = nearest_exhaustive(cloud.points, q)
            self.assertEqual(idx, expected_idx)
            self.assertEqual(dist, expected_dist)

    def test_duplicate_points_pick_lowest_index(self):
        index = VoxelIndex(np.array([[1.0, 1.0, 1.0], [0.0, 0.0, 0.0], [1.0, 1.0, 1.0]]))
        self.assertEqual(index.nearest(np.array([0.9, 0.9, 0.9]))[0], 0)

    def test_far_query_falls_back(self):
        cloud = _cloud([[0.0, 0.0, 0.0], [0.1, 0.0, 0.0]])
        idx, dist, _ = cloud.nearest([50.0, 0.0, 0.0])
        self.assertEqual(idx, 1)
        self.assertAlmostEqual(dist, 49.9)

    def test_empty_cloud(self):
        with self.assertRaises(ValidationError):
            ScenePointCloud.empty().nearest([0, 0, 0])

    def test_squared_distance_formula(self):
        self.assertEqual(squared_distances(np.array([[1.0, 2.0, 2.0]]), np.zeros(3)).tolist(), [9.0])


class SynthTests(SimpleTestCase):
    def test_flat_density(self):
        cloud = synth_scene(SceneSpec('flat'))
        self.assertEqual(len(cloud), 10000)
        self.assertTrue((cloud.points[:, 2] == 0).all())
        self.assertTrue((cloud.normals == [0.0, 0.0, 1.0]).all())

    def test_stairs_height_and_normals(self):
        spec = SceneSpec('stairs', step_rise=0.15, step_run=0.3, num_steps=5)
        cloud = synth_scene(spec)
        self.assertAlmostEqual(cloud.points[:, 2].max(), 0.75)
        risers = cloud.normals[:, 0] == -1.0
        self.assertTrue(risers.any())
        self.assertTrue((cloud.normals[risers, 2] == 0).all())
        self.assertAlmostEqual(spec.ground_height(1.05, 0.0), 0.15)
        self.assertAlmostEqual(spec.ground_height(3.0, 0.0), 0.75)
        self.assertEqual(spec.ground_height(0.5, 0.0), 0.0)

    def test_dynamic_walker_centroid_advances(self):
        cloud = synth_scene(SceneSpec('dynamic_walker', walker_speed=1.0, fps=10.0, num_frames=40))
        self.assertEqual(len(cloud.dynamic_frames), 40)
        centroids = np.array([f.points.mean(axis=0) for f in cloud.dynamic_frames])
        steps = np.linalg.norm(np.diff(centroids[:, :2], axis=0), axis=1)
        np.testing.assert_allclose(steps, 0.1, atol=1e-9)

    def test_frame_and_condition_clouds(self):
        cloud = synth_scene(SceneSpec('dynamic_walker', size=3.0, num_frames=4))
        walker = len(cloud.dynamic_frames[0])
        self.assertEqual(len(cloud.frame_cloud(2)), len(cloud) + walker)
        self.assertEqual(len(cloud.condition_cloud()), len(cloud) + 4 * walker)

    def test_box_room_has_seat_top(self):
        cloud = synth_scene(SceneSpec('box_room', box_height=0.45))
        top = (cloud.normals[:, 2] == 1.0) & np.isclose(cloud.points[:, 2], 0.45)
        self.assertTrue(top.any())

    def test_invalid_parameters(self):
        with self.assertRaises(ValidationError):
            SceneSpec('volcano')
        with self.assertRaises(ValidationError):
            SceneSpec('stairs', step_rise=2.0)

    def test_colors_depend_on_seed_only(self):
        a = synth_scene(SceneSpec('corridor', seed=3))
        b = synth_scene(SceneSpec('corridor', seed=3))
        c = synth_scene(SceneSpec('corridor', seed=4))
        np.testing.assert_array_equal(a.colors, b.colors)
        np.testing.assert_array_equal(a.points, c.points)
        self.assertFalse(np.array_equal(a.colors, c.colors))


class PlyTests(SimpleTestCase):
    def test_write_read_write_is_stable(self):
        cloud = synth_scene(SceneSpec('box_room', room_half=2.0, seed=9))
        text = dumps_ply(cloud)
        self.assertEqual(dumps_ply(loads_ply(text)), text)

    def test_dynamic_frames_round_trip(self):
        cloud = synth_scene(SceneSpec('dynamic_walker', size=2.0, num_frames=3))
        with tempfile.TemporaryDirectory() as tmp:
            static = write_ply(Path(tmp) / 'scene.ply', cloud)
            frames = [write_ply(Path(tmp) / f'frame_{i:04d}.ply', f) for i, f in enumerate(cloud.dynamic_frames)]
            loaded = read_scene(static, frames)
        self.assertEqual(len(loaded.dynamic_frames), 3)
        np.testing.assert_allclose(loaded.dynamic_frames[1].points, cloud.dynamic_frames[1].points, atol=1e-6)

    def test_missing_normals_are_estimated(self):
        text = '\n'.join([
            'ply', 'format ascii 1.0', 'element vertex 9',
            'property float x', 'property float y', 'property float z',
            'property uchar red', 'property uchar green', 'property uchar blue', 'end_header',
        ] + [f'{x} {y} 0 10 20 30' for x in range(3) for y in range(3)]) + '\n'
        cloud = loads_ply(text)
        np.testing.assert_allclose(cloud.normals, np.tile([0, 0, 1.0], (9, 1)), atol=1e-9)

    def test_missing_colors_rejected(self):
        text = 'ply\nformat ascii 1.0\nelement vertex 1\nproperty float x\nproperty float y\nproperty float z\nend_header\n0 0 0\n'
        with self.assertRaises(ValidationError):
            loads_ply(text)

    def test_binary_rejected(self):
        with self.assertRaises(ValidationError):
            loads_ply('ply\nformat binary_little_endian 1.0\nelement vertex 0\nend_header\n')


class NormalEstimationTests(SimpleTestCase):
    def test_vertical_wall_points_outward(self):
        ys, zs = np.meshgrid(np.linspace(-1, 1, 8), np.linspace(0, 2, 8))
        wall = np.column_stack([np.full(ys.size, 5.0), ys.ravel(), zs.ravel()])
        floor = np.column_stack([np.random.default_rng(0).uniform(-2, 1.5, size=(64, 2)), np.zeros(64)])
        normals = estimate_normals(np.concatenate([floor, wall]))
        np.testing.assert_allclose(normals[64:, 0], 1.0, atol=1e-6)
        np.testing.assert_allclose(normals[:64, 2], 1.0, atol=1e-6)
