# apps/motion/tests.py

import json
import tempfile
from pathlib import Path

import numpy as np
from django.core.exceptions import ValidationError
from django.test import SimpleTestCase

from apps.autograd.tensor import Tensor

from . import scripts
from .io import dumps_motion, loads_motion, read_motion, write_motion
from .representation import (
    MotionSequence, PoseFeatureLayout, decode_features, decode_positions_tensor,
    encode_features, foot_contact_flags, markers,
)
from .skeleton import (
    Skeleton, axis_angle_to_matrix, default_skeleton, forward_kinematics,
    forward_kinematics_sequence, matrix_to_axis_angle,
)


def _random_motion(seed, frames=12):
    rng = np.random.default_rng(seed)
    skeleton = default_skeleton()
    translations = np.cumsum(rng.normal(scale=0.05, size=(frames, 3)), axis=0) + [0.0, 0.0, 0.9]
    rotations = rng.normal(scale=0.3, size=(frames, skeleton.joint_count, 3))
    rotations[:, 0, :2] = 0.0
    rotations[:, 0, 2] = np.cumsum(rng.normal(scale=0.2, size=frames))
    return skeleton, MotionSequence.from_pose(skeleton, translations, rotations)


class SkeletonTests(SimpleTestCase):
    def test_default_layout(self):
        skeleton = default_skeleton()
        self.assertEqual(skeleton.joint_count, 8)
        self.assertEqual(skeleton.foot_joints, (4, 6))
        self.assertAlmostEqual(skeleton.standing_height(), 0.9)

    def test_malformed_tree_rejected(self):
        with self.assertRaises(ValidationError):
            Skeleton((-1, 2, 0), np.zeros((3, 3)))
        with self.assertRaises(ValidationError):
            Skeleton((0, 0), np.zeros((2, 3)))
        with self.assertRaises(ValidationError):
            Skeleton((-1, 0), [[0, 0, 0], [0, 0, np.nan]])

    def test_rodrigues_round_trip(self):
        rng = np.random.default_rng(0)
        vectors = rng.uniform(-1.5, 1.5, size=(50, 3))
        rot = axis_angle_to_matrix(vectors)
        np.testing.assert_allclose(rot @ np.swapaxes(rot, -1, -2), np.broadcast_to(np.eye(3), rot.shape), atol=1e-12)
        np.testing.assert_allclose(matrix_to_axis_angle(rot), vectors, atol=1e-9)


class ForwardKinematicsTests(SimpleTestCase):
    def setUp(self):
        self.skeleton = default_skeleton()
        self.zero = np.zeros((self.skeleton.joint_count, 3))

    def test_zero_pose_gives_rest_offsets(self):
        positions = forward_kinematics(self.skeleton, np.zeros(3), self.zero)
        np.testing.assert_allclose(positions, self.skeleton.rest_positions(), atol=1e-12)
        np.testing.assert_allclose(positions[2], [0.0, 0.0, 0.6], atol=1e-12)

    def test_translation_shifts_all_joints(self):
        shifted = forward_kinematics(self.skeleton, [1.0, 0.0, 0.0], self.zero)
        np.testing.assert_allclose(shifted - self.skeleton.rest_positions(), np.tile([1.0, 0.0, 0.0], (8, 1)))

    def test_root_yaw_quarter_turn(self):
        skeleton = Skeleton((-1, 0), [[0, 0, 0], [1.0, 0.0, 0.0]])
        rotations = np.array([[0.0, 0.0, np.pi / 2], [0.0, 0.0, 0.0]])
        positions = forward_kinematics(skeleton, [2.0, 3.0, 0.5], rotations)
        np.testing.assert_allclose(positions[1], [2.0, 4.0, 0.5], atol=1e-12)

    def test_rigid_under_global_transform(self):
        rng = np.random.default_rng(1)
        translation = rng.normal(size=3)
        rotations = rng.normal(scale=0.5, size=(8, 3))
        rotations[0] = rng.normal(scale=0.3, size=3)
        base = forward_kinematics(self.skeleton, translation, rotations)

        global_rot = axis_angle_to_matrix(rng.normal(scale=0.3, size=3))
        shift = rng.normal(size=3)
        moved = rotations.copy()
        moved[0] = matrix_to_axis_angle(global_rot @ axis_angle_to_matrix(rotations[0]))
        result = forward_kinematics(self.skeleton, global_rot @ translation + shift, moved)
        np.testing.assert_allclose(result, base @ global_rot.T + shift, atol=1e-9)

    def test_wrong_rotation_count(self):
        with self.assertRaises(ValidationError):
            forward_kinematics(self.skeleton, np.zeros(3), np.zeros((3, 3)))


class FeatureTests(SimpleTestCase):
    def test_layout_width(self):
        self.assertEqual(PoseFeatureLayout(8).width, 51)

    def test_standing_still(self):
        skeleton = default_skeleton()
        rotations = np.zeros((5, 8, 3))
        translations = np.tile([0.0, 0.0, 0.9], (5, 1))
        features = encode_features(MotionSequence.from_pose(skeleton, translations, rotations), skeleton)
        layout = PoseFeatureLayout(8)
        self.assertTrue((features[:, :3] == 0).all())
        self.assertTrue((features[:, layout.joint_velocities] == 0).all())
        np.testing.assert_allclose(features[:, 3], 0.9)

    def test_straight_walk_planar_velocity(self):
        skeleton = default_skeleton()
        frames = 10
        translations = np.column_stack([np.arange(frames) * 0.1, np.zeros(frames), np.full(frames, 0.9)])
        motion = MotionSequence.from_pose(skeleton, translations, np.zeros((frames, 8, 3)))
        features = encode_features(motion, skeleton)
        np.testing.assert_allclose(features[:, 1:3], np.tile([0.1, 0.0], (frames, 1)), atol=1e-12)

    def test_random_round_trip(self):
        for seed in range(5):
            skeleton, motion = _random_motion(seed)
            features = encode_features(motion, skeleton)
            self.assertTrue(np.isfinite(features).all())
            translation, _, positions = decode_features(
                features, motion.root_translation[0], motion.root_yaw[0], PoseFeatureLayout(8))
            self.assertLess(np.abs(translation - motion.root_translation).max(), 1e-6)
            self.assertLess(np.abs(positions - motion.joint_positions).max(), 1e-6)

    def test_single_frame_rejected(self):
        skeleton, motion = _random_motion(0, frames=1)
        with self.assertRaises(ValidationError):
            encode_features(motion, skeleton)

    def test_width_mismatch_rejected(self):
        with self.assertRaises(ValidationError):
            decode_features(np.zeros((4, 50)), np.zeros(3), 0.0, PoseFeatureLayout(8))

    def test_tensor_decode_matches_numpy(self):
        skeleton, motion = _random_motion(3)
        features = encode_features(motion, skeleton)
        _, _, expected = decode_features(features, [0.0, 0.0, 0.0], 0.0, PoseFeatureLayout(8))
        decoded = decode_positions_tensor(Tensor(features[None]), PoseFeatureLayout(8))
        np.testing.assert_allclose(decoded.data[0], expected, atol=1e-12)


class ContactTests(SimpleTestCase):
    def _motion(self, foot_x, foot_z):
        frames = len(foot_x)
        positions = np.zeros((frames, 8, 3))
        positions[:, 0, 2] = 0.9
        for foot in (4, 6):
            positions[:, foot, 0] = foot_x
            positions[:, foot, 2] = foot_z
        return MotionSequence(
            fps=10.0,
            root_translation=positions[:, 0],
            root_yaw=np.zeros(frames),
            joint_positions=positions,
        )

    def test_planted_feet(self):
        flags = foot_contact_flags(self._motion([0.0] * 4, [0.0] * 4), default_skeleton())
        self.assertTrue((flags == 1).all())

    def test_jump_frame(self):
        flags = foot_contact_flags(self._motion([0.0] * 3, [0.0, 0.5, 0.0]), default_skeleton())
        self.assertEqual(flags[1].tolist(), [0.0, 0.0])

    def test_boundary_counts_as_contact(self):
        foot_x = np.array([0.0, 0.05, 0.1])
        flags = foot_contact_flags(self._motion(foot_x, [0.08] * 3), default_skeleton())
        speeds = np.abs(np.diff(foot_x))
        self.assertTrue((speeds <= 0.05).all())
        self.assertTrue((flags == 1).all())

    def test_missing_feet(self):
        skeleton = Skeleton((-1, 0), np.zeros((2, 3)), foot_joints=(1,))
        motion = MotionSequence(1.0, np.zeros((2, 3)), np.zeros(2), np.zeros((2, 2, 3)))
        with self.assertRaises(ValidationError):
            foot_contact_flags(motion, skeleton)


class MarkerTests(SimpleTestCase):
    def test_static_pose(self):
        skeleton = default_skeleton()
        motion = MotionSequence.from_pose(skeleton, np.tile([0, 0, 0.9], (4, 1)), np.zeros((4, 8, 3)))
        points = markers(motion, skeleton)
        for frame in points[1:]:
            np.testing.assert_array_equal(frame, points[0])

    def test_matches_frame_by_frame_fk(self):
        skeleton, motion = _random_motion(7)
        points = markers(motion, skeleton)
        for i in range(motion.num_frames):
            expected = forward_kinematics(skeleton, motion.root_translation[i], motion.rotations[i])
            np.testing.assert_allclose(points[i], expected, atol=1e-12)

    def test_batched_fk_translation(self):
        skeleton = default_skeleton()
        shifts = np.array([[0, 0, 0], [1, 2, 3.0]])
        points = forward_kinematics_sequence(skeleton, shifts, np.zeros((2, 8, 3)))
        np.testing.assert_allclose(points[1] - points[0], np.tile([1, 2, 3.0], (8, 1)))


class MotionFileTests(SimpleTestCase):
    def test_write_read_write_is_stable(self):
        skeleton, motion = _random_motion(11)
        encoded = MotionSequence.from_features(
            encode_features(motion, skeleton), motion.root_translation[0], motion.root_yaw[0])
        first = dumps_motion(encoded)
        with tempfile.TemporaryDirectory() as tmp:
            path = write_motion(Path(tmp) / 'm.json', encoded)
            again = read_motion(path)
        self.assertEqual(dumps_motion(again), first)

    def test_field_order(self):
        skeleton, motion = _random_motion(2)
        encoded = MotionSequence.from_features(encode_features(motion, skeleton), [0, 0, 0.9], 0.0)
        self.assertEqual(list(json.loads(dumps_motion(encoded))),
                         ['layout', 'fps', 'num_frames', 'num_joints', 'features', 'root_init'])

    def test_reader_validates_width(self):
        payload = {
            'layout': 'hml-lite-v1', 'fps': 10.0, 'num_frames': 2, 'num_joints': 8,
            'features': [[0.0] * 50, [0.0] * 50], 'root_init': {'pos': [0, 0, 0], 'yaw': 0.0},
        }
        with self.assertRaises(ValidationError):
            loads_motion(json.dumps(payload))

    def test_unknown_layout(self):
        payload = {
            'layout': 'hml-v2', 'fps': 10.0, 'num_frames': 1, 'num_joints': 8,
            'features': [[0.0] * 51], 'root_init': {'pos': [0, 0, 0], 'yaw': 0.0},
        }
        with self.assertRaises(ValidationError):
            loads_motion(json.dumps(payload))


class ScriptTests(SimpleTestCase):
    def setUp(self):
        self.skeleton = default_skeleton()

    def test_every_script_starts_at_origin_facing_x(self):
        motions = [
            scripts.walk_to(self.skeleton),
            scripts.climb_stairs(self.skeleton),
            scripts.circle(self.skeleton),
            scripts.wave(self.skeleton),
            scripts.sit_on(self.skeleton),
            scripts.walk_and_wave(self.skeleton),
        ]
        for motion in motions:
            self.assertEqual(motion.num_frames, 40)
            np.testing.assert_allclose(motion.root_translation[0, :2], [0.0, 0.0], atol=1e-12)
            self.assertAlmostEqual(float(motion.root_yaw[0]), 0.0)

    def test_walk_stays_above_flat_ground(self):
        motion = scripts.walk_to(self.skeleton)
        self.assertGreaterEqual(motion.joint_positions[..., 2].min(), -1e-12)
        self.assertAlmostEqual(float(motion.root_translation[-1, 0]), 2.0)

    def test_sit_on_reaches_seat(self):
        motion = scripts.sit_on(self.skeleton, seat_front=1.5, seat_height=0.45, seat_depth=0.4)
        hips = motion.joint_positions[-1, [3, 5]]
        np.testing.assert_allclose(hips[:, 2], [0.45, 0.45], atol=1e-9)
        np.testing.assert_allclose(motion.root_translation[-1, 0], 1.7, atol=1e-9)
        feet = motion.joint_positions[-1, [4, 6], 2]
        np.testing.assert_allclose(feet, [0.0, 0.0], atol=1e-9)

    def test_seat_out_of_reach(self):
        with self.assertRaises(ValidationError):
            scripts.sit_on(self.skeleton, seat_height=1.2)

    def test_stair_support_follows_ground(self):
        def steps(x, y):
            return 0.15 * min(5, max(0, int(np.floor((x - 1.0) / 0.3)) + 1)) if x >= 1.0 else 0.0

        motion = scripts.climb_stairs(self.skeleton, distance=2.8, ground=steps)
        feet = motion.joint_positions[:, [4, 6]]
        for frame in feet:
            for x, _, z in frame:
                self.assertGreaterEqual(z, steps(x, 0.0) - 1e-9)
