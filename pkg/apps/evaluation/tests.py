# apps/evaluation/tests.py

import json

import numpy as np
from django.core.exceptions import ValidationError
from django.test import SimpleTestCase, tag
from rest_framework import serializers

from apps.language.captions import synth_caption
from apps.language.vocab import TextPrompt, Vocabulary
from apps.motion.representation import MotionSequence, PoseFeatureLayout, encode_features
from apps.motion.scripts import circle, climb_stairs, sit_on, walk_and_wave, walk_to, wave
from apps.motion.skeleton import default_skeleton
from apps.scenes.cloud import ScenePointCloud, nearest_exhaustive

from .diversity import apd_std, condition_diversity, sample_array
from .frechet import fid_from_embeddings, frechet_distance, gaussian_moments
from .matching import MatchingModel, contrastive_loss, in_batch_accuracy, train_matching_model
from .plausibility import contact_score, in_contact, non_collision_score, signed_distances
from .report import (
    P_SCORE_NOTE, REPORT_KEYS, MetricsReport, dumps_report, format_comparison_table, format_report_table,
    loads_report,
)
from .retrieval import r_score_from_embeddings

SKELETON = default_skeleton()
LAYOUT = PoseFeatureLayout(SKELETON.joint_count)


def _surface(points, normal=(0.0, 0.0, 1.0), frames=None):
    points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    normals = np.tile(np.asarray(normal, dtype=np.float64), (len(points), 1))
    return ScenePointCloud(points, np.full_like(points, 0.5), normals, frames)


def _floor_grid():
    axis = np.arange(-20, 21) * 0.1
    xs, ys = np.meshgrid(axis, axis, indexing='ij')
    return _surface(np.column_stack([xs.ravel(), ys.ravel(), np.zeros(xs.size)]))


def _motion(joint_positions, fps=10.0):
    joint_positions = np.asarray(joint_positions, dtype=np.float64)
    frames = joint_positions.shape[0]
    return MotionSequence(fps=fps, root_translation=joint_positions[:, 0], root_yaw=np.zeros(frames),
                          joint_positions=joint_positions)


def _column(heights):
    """Todas las articulaciones sobre (0, 0), una altura por fotograma y articulación."""
    heights = np.asarray(heights, dtype=np.float64)
    positions = np.zeros(heights.shape + (3,))
    positions[..., 2] = heights
    return _motion(positions)


def _stacked(frames, base):
    return _column(base + 0.1 * np.arange(SKELETON.joint_count)[None, :] + np.zeros((frames, 1)))


class NonCollisionTests(SimpleTestCase):
    def test_body_above_ground_never_collides(self):
        motion = _stacked(6, 0.5)
        self.assertEqual(non_collision_score(motion, SKELETON, _floor_grid()), 1.0)

    def test_half_of_the_queries_below_the_floor(self):
        heights = np.full((4, SKELETON.joint_count), 0.8)
        heights[:2] = -0.3
        self.assertEqual(non_collision_score(_column(heights), SKELETON, _floor_grid()), 0.5)

    def test_shallow_penetration_is_tolerated(self):
        heights = np.full((3, SKELETON.joint_count), -0.04)
        self.assertEqual(non_collision_score(_column(heights), SKELETON, _floor_grid(), threshold=0.05), 1.0)

    def test_matches_exhaustive_nearest_neighbour(self):
        for trial in range(20):
            rng = np.random.default_rng(trial)
            points = rng.uniform(-2, 2, size=(300, 3))
            normals = rng.normal(size=(300, 3))
            normals /= np.linalg.norm(normals, axis=1, keepdims=True)
            scene = ScenePointCloud(points, rng.uniform(size=(300, 3)), normals)
            motion = _motion(rng.uniform(-2, 2, size=(5, SKELETON.joint_count, 3)))

            expected = []
            for query in motion.joint_positions.reshape(-1, 3):
                idx, _ = nearest_exhaustive(points, query)
                expected.append(np.dot(query - points[idx], normals[idx]) >= -0.05)
            self.assertAlmostEqual(non_collision_score(motion, SKELETON, scene), float(np.mean(expected)),
                                   places=12)

    def test_empty_scene_raises(self):
        with self.assertRaises(ValidationError):
            non_collision_score(_stacked(2, 0.5), SKELETON, ScenePointCloud.empty())


class ContactTests(SimpleTestCase):
    def test_touching_at_the_threshold_counts(self):
        motion = _stacked(3, 0.25)
        self.assertTrue(in_contact(motion, SKELETON, _floor_grid(), threshold=0.25))

    def test_just_above_the_threshold_does_not_count(self):
        motion = _stacked(3, 0.25 + 1e-6)
        self.assertFalse(in_contact(motion, SKELETON, _floor_grid(), threshold=0.25))

    def test_score_is_fraction_of_sequences(self):
        motions = [_stacked(3, 0.01), _stacked(3, 2.0), _stacked(3, 0.02), _stacked(3, 3.0)]
        self.assertEqual(contact_score(motions, SKELETON, _floor_grid()), 0.5)

    def test_floating_motion_has_zero_contact(self):
        self.assertEqual(contact_score([_stacked(4, 1.5)], SKELETON, _floor_grid()), 0.0)

    def test_dynamic_scene_uses_the_cloud_of_each_frame(self):
        far = _surface([[0.0, 0.0, -10.0]])
        near_late = (_surface([[5.0, 5.0, 1.0]]), _surface([[0.0, 0.0, 1.0]]))
        near_never = (_surface([[5.0, 5.0, 1.0]]), _surface([[5.0, 5.0, 1.0]]))
        motion = _column(np.full((2, SKELETON.joint_count), 1.0))

        self.assertTrue(in_contact(motion, SKELETON, _surface(far.points, frames=near_late)))
        self.assertFalse(in_contact(motion, SKELETON, _surface(far.points, frames=near_never)))

    def test_signed_distance_follows_frame_clouds(self):
        far = _surface([[0.0, 0.0, -10.0]])
        frames = (_surface([[0.0, 0.0, 0.0]]), _surface([[0.0, 0.0, 2.0]], normal=(0.0, 0.0, -1.0)))
        positions = np.zeros((2, 1, 3))
        positions[:, 0, 2] = 1.0
        unsigned, signed = signed_distances(positions, _surface(far.points, frames=frames))
        np.testing.assert_allclose(unsigned[:, 0], [1.0, 1.0])
        np.testing.assert_allclose(signed[:, 0], [1.0, 1.0])

    def test_one_scene_per_motion_required(self):
        with self.assertRaises(ValidationError):
            contact_score([_stacked(2, 0.0)] * 2, SKELETON, [_floor_grid()])


class DiversityTests(SimpleTestCase):
    def test_identical_samples_have_zero_diversity(self):
        motion = walk_to(SKELETON, num_frames=10)
        apd, std = apd_std([[motion, motion, motion]], 't')
        self.assertEqual(apd, 0.0)
        self.assertEqual(std, 0.0)

    def test_constant_offset_of_two_metres(self):
        base = np.zeros((6, 3))
        shifted = base + np.array([0.0, 2.0, 0.0])
        apd, std = condition_diversity([base, shifted])
        self.assertAlmostEqual(apd, 2.0, places=12)
        self.assertAlmostEqual(std, 1.0, places=12)

    def test_matches_double_loop(self):
        rng = np.random.default_rng(3)
        samples = [rng.normal(size=(7, 5)) for _ in range(5)]
        total = 0.0
        for i in range(5):
            for j in range(5):
                if i != j:
                    total += np.mean(np.linalg.norm(samples[i] - samples[j], axis=1))
        apd, _ = condition_diversity(samples)
        self.assertAlmostEqual(apd, total / 20.0, places=10)

    def test_std_is_spread_about_the_condition_mean(self):
        rng = np.random.default_rng(4)
        samples = [rng.normal(size=(7, 5)) for _ in range(5)]
        center = sum(samples) / 5.0
        squares = [np.mean(np.linalg.norm(s - center, axis=1)) ** 2 for s in samples]
        _, std = condition_diversity(samples)
        self.assertAlmostEqual(std, float(np.sqrt(np.mean(squares))), places=10)
        self.assertGreater(std, 0.0)

    def test_modes_pick_their_arrays(self):
        motion = walk_to(SKELETON, num_frames=10)
        features = encode_features(motion, SKELETON)
        decoded = MotionSequence.from_features(features, motion.root_translation[0], motion.root_yaw[0])
        self.assertEqual(sample_array(decoded, 't').shape, (10, 3))
        self.assertEqual(sample_array(decoded, 'p').shape, (10, LAYOUT.width - 4))
        self.assertEqual(sample_array(decoded, 'm', SKELETON).shape, (10, SKELETON.joint_count, 3))

    def test_pose_mode_ignores_translation(self):
        first = walk_to(SKELETON, distance=2.0, num_frames=10)
        features = encode_features(first, SKELETON)
        a = MotionSequence.from_features(features, [0.0, 0.0, 0.0], 0.0)
        b = MotionSequence.from_features(features, [3.0, -1.0, 0.0], 0.0)
        apd_p, _ = apd_std([[a, b]], 'p')
        apd_t, _ = apd_std([[a, b]], 't')
        self.assertEqual(apd_p, 0.0)
        self.assertGreater(apd_t, 3.0)

    def test_pose_mode_needs_features(self):
        with self.assertRaises(ValidationError):
            sample_array(walk_to(SKELETON, num_frames=5), 'p')

    def test_single_sample_rejected(self):
        with self.assertRaises(ValidationError):
            condition_diversity([np.zeros((3, 3))])

    def test_unknown_mode_rejected(self):
        with self.assertRaises(ValidationError):
            sample_array(walk_to(SKELETON, num_frames=5), 'x')


class FrechetTests(SimpleTestCase):
    def _covariance(self, seed, dim=4):
        a = np.random.default_rng(seed).normal(size=(dim, dim))
        return a @ a.T + 0.1 * np.eye(dim)

    def test_same_gaussian_is_zero(self):
        sigma = self._covariance(0)
        mu = np.arange(4.0)
        self.assertAlmostEqual(frechet_distance(mu, sigma, mu, sigma), 0.0, places=8)

    def test_mean_shift_in_one_dimension(self):
        self.assertAlmostEqual(frechet_distance([0.0], [[1.0]], [1.0], [[1.0]]), 1.0, places=12)

    def test_variance_change_in_one_dimension(self):
        self.assertAlmostEqual(frechet_distance([0.0], [[1.0]], [0.0], [[4.0]]), 1.0, places=12)

    def test_symmetric(self):
        s1, s2 = self._covariance(1), self._covariance(2)
        m1, m2 = np.ones(4), np.zeros(4)
        self.assertAlmostEqual(frechet_distance(m1, s1, m2, s2), frechet_distance(m2, s2, m1, s1), places=8)

    def test_matches_closed_form_from_samples(self):
        rng = np.random.default_rng(7)
        a = rng.normal(size=(5000, 3))
        b = rng.normal(size=(5000, 3)) * np.array([2.0, 1.0, 1.0]) + np.array([1.0, 0.0, 0.0])
        # ‖Δμ‖² = 1 y (1 − 2)² = 1 en el eje escalado
        self.assertAlmostEqual(fid_from_embeddings(a, b), 2.0, delta=0.1)

    def test_set_against_itself_is_zero(self):
        a = np.random.default_rng(8).normal(size=(64, 6))
        self.assertAlmostEqual(fid_from_embeddings(a, a), 0.0, places=8)

    def test_not_psd_rejected(self):
        with self.assertRaises(ValidationError):
            frechet_distance([0.0, 0.0], [[1.0, 0.0], [0.0, -1.0]], [0.0, 0.0], np.eye(2))

    def test_too_few_samples_rejected(self):
        with self.assertRaises(ValidationError):
            gaussian_moments(np.zeros((4, 4)))


class RScoreTests(SimpleTestCase):
    def test_perfect_matching_scores_one(self):
        embeddings = np.eye(64)
        captions = [f'caption {i}' for i in range(64)]
        self.assertEqual(r_score_from_embeddings(embeddings, embeddings, captions, pool_size=32), 1.0)

    def test_identical_embeddings_tie_and_fail(self):
        embeddings = np.ones((40, 8))
        captions = [f'caption {i}' for i in range(40)]
        self.assertEqual(r_score_from_embeddings(embeddings, embeddings, captions, pool_size=32), 0.0)

    def test_random_embeddings_score_chance(self):
        rng = np.random.default_rng(11)
        motion = rng.normal(size=(5000, 16))
        text = rng.normal(size=(5000, 16))
        captions = [f'caption {i}' for i in range(5000)]
        self.assertAlmostEqual(r_score_from_embeddings(motion, text, captions, pool_size=32), 1 / 32, delta=0.02)

    def test_not_enough_distinct_captions(self):
        embeddings = np.eye(16)
        captions = [f'caption {i % 4}' for i in range(16)]
        with self.assertRaises(ValidationError):
            r_score_from_embeddings(embeddings, embeddings, captions, pool_size=8)

    def test_keys_define_duplicates(self):
        embeddings = np.eye(16)
        captions = [f'caption {i}' for i in range(16)]
        keys = [i % 4 for i in range(16)]
        self.assertEqual(r_score_from_embeddings(embeddings, embeddings, captions, pool_size=4, keys=keys), 1.0)
        with self.assertRaises(ValidationError):
            r_score_from_embeddings(embeddings, embeddings, captions, pool_size=8, keys=keys)


class MatchingModelTests(SimpleTestCase):
    def setUp(self):
        self.vocab = Vocabulary.build()
        self.model = MatchingModel(len(self.vocab), LAYOUT.width, np.random.default_rng(0), width=16, embed_width=8,
                                   heads=2, max_frames=16, pad_id=self.vocab.pad_id)
        self.sequences = [
            encode_features(walk_to(SKELETON, num_frames=12), SKELETON),
            encode_features(circle(SKELETON, num_frames=9), SKELETON),
            encode_features(wave(SKELETON, num_frames=16), SKELETON),
        ]
        self.prompts = [
            TextPrompt.from_text(synth_caption('box_room', 'walk_to', 1), self.vocab),
            TextPrompt.from_text(synth_caption('flat', 'circle', 1), self.vocab),
            TextPrompt.from_text(synth_caption('flat', 'wave', 1), self.vocab),
        ]

    def test_embeddings_are_unit_norm(self):
        motion = self.model.embed_motions(self.sequences).data
        text = self.model.embed_texts(self.prompts).data
        np.testing.assert_allclose(np.linalg.norm(motion, axis=1), 1.0, atol=1e-10)
        np.testing.assert_allclose(np.linalg.norm(text, axis=1), 1.0, atol=1e-10)

    def test_padding_does_not_change_an_embedding(self):
        alone = self.model.embed_motions(self.sequences[1:2]).data[0]
        batched = self.model.embed_motions(self.sequences).data[1]
        np.testing.assert_allclose(alone, batched, atol=1e-10)

    def test_zero_scale_loss_is_log_batch(self):
        self.model.logit_scale.assign(np.zeros(1))
        loss = contrastive_loss(self.model, self.sequences, self.prompts)
        self.assertAlmostEqual(loss.item(), np.log(3), places=12)

    def test_too_few_pairs_rejected(self):
        with self.assertRaises(ValidationError):
            train_matching_model(self.sequences, ['a', 'b', 'c'], self.vocab)

    def test_degenerate_captions_rejected(self):
        with self.assertRaises(ValidationError):
            train_matching_model(self.sequences, ['same'] * 3, self.vocab, min_pairs=2)

    def test_tiny_training_runs(self):
        captions = [p.text for p in self.prompts]
        model = train_matching_model(self.sequences, captions, self.vocab, steps=2, batch_size=3, width=8,
                                     embed_width=4, min_pairs=3, log_every=0)
        accuracy = in_batch_accuracy(model, self.sequences, self.prompts, batch_size=3)
        self.assertGreaterEqual(accuracy, 0.0)
        self.assertLessEqual(accuracy, 1.0)


def _stairs(x, y):
    return 0.15 * np.floor(max(x, 0.0) / 0.3)


# (escena, guion, generador con un parámetro en [0, 1])
LABELLED_SCRIPTS = (
    ('flat', 'circle', lambda u: circle(SKELETON, radius=0.8 + 0.6 * u, num_frames=24)),
    ('flat', 'wave', lambda u: wave(SKELETON, num_frames=24, amplitude=0.2 + 0.2 * u)),
    ('stairs', 'climb_stairs', lambda u: climb_stairs(SKELETON, distance=2.5 + 0.5 * u, num_frames=24,
                                                      ground=_stairs)),
    ('box_room', 'walk_to', lambda u: walk_to(SKELETON, distance=1.2 + 0.3 * u, num_frames=24)),
    ('box_room', 'sit_on', lambda u: sit_on(SKELETON, seat_front=1.4 + 0.4 * u, num_frames=24)),
    ('corridor', 'walk_to', lambda u: walk_to(SKELETON, distance=3.0 + 0.4 * u, num_frames=24)),
    ('dynamic_walker', 'wave', lambda u: walk_and_wave(SKELETON, distance=1.3 + 0.4 * u, num_frames=24)),
    ('dynamic_walker', 'walk_to', lambda u: walk_to(SKELETON, distance=2.1 + 0.3 * u, num_frames=24)),
)


def _labelled_corpus(rounds, seed):
    """`rounds` bloques consecutivos con un ejemplo de cada etiqueta."""
    rng = np.random.default_rng(seed)
    sequences, captions = [], []
    for _ in range(rounds):
        for scene, script, build in LABELLED_SCRIPTS:
            sequences.append(encode_features(build(rng.uniform()), SKELETON))
            captions.append(synth_caption(scene, script, int(rng.integers(1, 37))))
    return sequences, captions


@tag('slow')
class MatchingTrainingTests(SimpleTestCase):
    def test_held_out_in_batch_accuracy(self):
        vocab = Vocabulary.build()
        train_sequences, train_captions = _labelled_corpus(16, seed=0)
        test_sequences, test_captions = _labelled_corpus(8, seed=1)
        model = train_matching_model(train_sequences, train_captions, vocab, seed=0, steps=400, batch_size=8)
        prompts = [TextPrompt.from_text(c, vocab) for c in test_captions]
        accuracy = in_batch_accuracy(model, test_sequences, prompts, batch_size=8, shuffle=False)
        self.assertGreaterEqual(accuracy, 0.5)


class ReportTests(SimpleTestCase):
    def setUp(self):
        self.report = MetricsReport(
            non_collision=0.97, contact=0.8, apd_t=1.25, std_t=0.5, apd_p=3.5, std_p=1.75, apd_m=2.0, std_m=0.75,
            fid=12.5, r_score=0.4, n_conditions=8, k_per_condition=5, config_hash='0123456789abcdef',
        )

    def test_round_trip(self):
        self.assertEqual(loads_report(dumps_report(self.report)), self.report)

    def test_key_order_is_fixed(self):
        self.assertEqual(tuple(json.loads(dumps_report(self.report))), REPORT_KEYS)

    def test_unknown_key_rejected(self):
        data = json.loads(dumps_report(self.report))
        data['p_score'] = 0.5
        with self.assertRaises(serializers.ValidationError):
            loads_report(json.dumps(data))

    def test_out_of_range_fraction_rejected(self):
        data = json.loads(dumps_report(self.report))
        data['r_score'] = 1.5
        with self.assertRaises(serializers.ValidationError):
            loads_report(json.dumps(data))

    def test_table_mentions_p_score(self):
        table = format_report_table(self.report)
        self.assertIn(P_SCORE_NOTE, table)
        self.assertIn('0123456789abcdef', table)

    def test_comparison_table(self):
        row = dict(self.report.as_dict(), variant='parallel_cross', final_loss=0.125)
        table = format_comparison_table([row, dict(row, variant='triple')])
        lines = table.splitlines()
        self.assertEqual(len(lines), 3)
        self.assertTrue(lines[0].startswith('variant\tnon_collision'))
        self.assertTrue(lines[2].startswith('triple\t'))
