# apps/diffusion/tests.py

import tempfile
from pathlib import Path

import numpy as np
from django.core.exceptions import ValidationError
from django.test import SimpleTestCase

from apps.autograd.gradcheck import check_gradients
from apps.autograd.optim import Adam
from apps.autograd.tensor import GradTape, Parameter, Tensor
from apps.language.vocab import TextPrompt, Vocabulary
from apps.motion.representation import PoseFeatureLayout, encode_features
from apps.motion.scripts import circle, walk_to
from apps.motion.skeleton import default_skeleton

from .checkpoint import dumps_checkpoint, load_checkpoint, loads_checkpoint, save_checkpoint, verify_checkpoint
from .denoiser import Denoiser
from .losses import (
    LossWeights, TrainingBatch, combine_losses, geometric_terms, reconstruction_loss, training_loss,
)
from .model import ConditionInput, ModelShape, MotionDiffusionModel
from .normalizer import FeatureNormalizer
from .sampler import features_to_motion, guided_prediction, reverse_chain, sample
from .schedule import build_schedule, forward_chain, p_sample_step, q_sample

SKELETON = default_skeleton()
LAYOUT = PoseFeatureLayout(SKELETON.joint_count)


def _features(frames=8):
    walk = encode_features(walk_to(SKELETON, num_frames=frames), SKELETON)
    arc = encode_features(circle(SKELETON, num_frames=frames), SKELETON)
    return np.stack([walk, arc])


def _tiny_model(dtype=np.float64, seed=0, fusion_kind='parallel_cross'):
    vocab = Vocabulary.build()
    shape = ModelShape(feature_width=LAYOUT.width, vocab_size=len(vocab), width=8, text_width=8, cond_width=8,
                       heads=2, text_blocks=1, denoiser_layers=1, neighbours=4, global_points=8, max_frames=16,
                       fusion_kind=fusion_kind)
    return MotionDiffusionModel(shape, np.random.default_rng(seed), dtype), vocab


def _condition(vocab, seed=0, text='the person walks up to the box'):
    rng = np.random.default_rng(seed)
    f_p = np.concatenate([rng.uniform(-1, 1, size=(20, 3)), rng.uniform(size=(20, 3))], axis=1)
    return ConditionInput(f_p=f_p, prompt=TextPrompt.from_text(text, vocab))


class ScheduleTests(SimpleTestCase):
    def test_single_step(self):
        schedule = build_schedule(1, 0.5, 0.5)
        self.assertAlmostEqual(schedule.alpha_bars[1], 0.5)

    def test_two_steps(self):
        schedule = build_schedule(2, 0.1, 0.2)
        np.testing.assert_allclose(schedule.alpha_bars[1:], [0.9, 0.72], atol=1e-12)

    def test_alpha_bar_strictly_decreasing(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            start, end = np.sort(rng.uniform(1e-4, 0.5, size=2))
            steps = int(rng.integers(1, 200))
            schedule = build_schedule(steps, start, end)
            self.assertTrue((np.diff(schedule.alpha_bars) < 0).all())
            np.testing.assert_allclose(schedule.alpha_bars[1:], np.cumprod(1.0 - schedule.betas[1:]), rtol=1e-12)
            self.assertAlmostEqual(1.0 - schedule.alpha_bars[1], schedule.betas[1], places=12)

    def test_invalid_ranges(self):
        for args in ((10, 0.0, 0.02), (10, 0.03, 0.02), (10, 0.1, 1.0), (0, 0.1, 0.2)):
            with self.assertRaises(ValidationError):
                build_schedule(*args)


class ForwardProcessTests(SimpleTestCase):
    def test_direct_substitution(self):
        schedule = build_schedule(1, 0.75, 0.75)
        out = q_sample([2.0, 0.0], 1, [0.0, 1.0], schedule)
        np.testing.assert_allclose(out, [1.0, np.sqrt(0.75)], atol=1e-12)

    def test_step_zero_is_identity(self):
        schedule = build_schedule(10)
        x0 = np.array([0.3, -1.2])
        np.testing.assert_array_equal(q_sample(x0, 0, np.ones(2), schedule), x0)

    def test_per_item_steps(self):
        schedule = build_schedule(10)
        x0 = np.ones((2, 3, 4))
        noise = np.zeros_like(x0)
        out = q_sample(x0, np.array([1, 10]), noise, schedule)
        np.testing.assert_allclose(out[0], np.sqrt(schedule.alpha_bars[1]))
        np.testing.assert_allclose(out[1], np.sqrt(schedule.alpha_bars[10]))

    def test_out_of_range(self):
        schedule = build_schedule(5)
        with self.assertRaises(ValidationError):
            q_sample([0.0], 6, [0.0], schedule)

    def test_stepwise_chain_matches_closed_form(self):
        rng = np.random.default_rng(42)
        draws = 10000
        for _ in range(20):
            steps = int(rng.integers(1, 51))
            dim = int(rng.integers(1, 9))
            start, end = np.sort(rng.uniform(1e-4, 0.2, size=2))
            schedule = build_schedule(steps, start, end)
            t = int(rng.integers(1, steps + 1))
            x0 = rng.normal(size=dim)
            chain = forward_chain(np.broadcast_to(x0, (draws, dim)), t, schedule, rng)

            bar = schedule.alpha_bars[t]
            variance = 1.0 - bar
            mean_error = np.abs(chain.mean(axis=0) - np.sqrt(bar) * x0)
            self.assertTrue((mean_error < 4.5 * np.sqrt(variance / draws)).all())
            cov = np.cov(chain, rowvar=False).reshape(dim, dim)
            diagonal_se = variance * np.sqrt(2.0 / (draws - 1))
            off_diagonal_se = variance / np.sqrt(draws)
            tolerance = np.full((dim, dim), 4.5 * off_diagonal_se)
            np.fill_diagonal(tolerance, 4.5 * diagonal_se)
            self.assertTrue((np.abs(cov - variance * np.eye(dim)) < tolerance).all())


class ReverseProcessTests(SimpleTestCase):
    def test_last_step_returns_prediction(self):
        schedule = build_schedule(100)
        rng = np.random.default_rng(0)
        x0_hat = rng.normal(size=(3, 4))
        out = p_sample_step(rng.normal(size=(3, 4)), x0_hat, 1, schedule, rng.normal(size=(3, 4)))
        np.testing.assert_array_equal(out, x0_hat)

    def test_posterior_mean_formula(self):
        schedule = build_schedule(10, 0.1, 0.3)
        coef_x0, coef_xt, variance = schedule.posterior(4)
        bar, bar_prev, beta = schedule.alpha_bars[4], schedule.alpha_bars[3], schedule.betas[4]
        self.assertAlmostEqual(coef_x0, np.sqrt(bar_prev) * beta / (1 - bar))
        self.assertAlmostEqual(coef_xt, np.sqrt(1 - beta) * (1 - bar_prev) / (1 - bar))
        self.assertAlmostEqual(variance, beta * (1 - bar_prev) / (1 - bar))

    def test_oracle_chain_lands_on_target(self):
        schedule = build_schedule(50)
        target = np.random.default_rng(1).normal(size=(1, 6, 5))
        out = reverse_chain(lambda x, t: target, target.shape, schedule, np.random.default_rng(2))
        np.testing.assert_array_equal(out, target)

    def test_noiseless_chain_is_repeatable(self):
        schedule = build_schedule(20)

        def shrink(x, t):
            return 0.5 * x

        first = reverse_chain(shrink, (2, 3), schedule, np.random.default_rng(5), deterministic=True)
        second = reverse_chain(shrink, (2, 3), schedule, np.random.default_rng(5), deterministic=True)
        np.testing.assert_array_equal(first, second)

    def test_step_out_of_range(self):
        schedule = build_schedule(5)
        with self.assertRaises(ValidationError):
            p_sample_step(np.zeros(2), np.zeros(2), 0, schedule)
        with self.assertRaises(ValidationError):
            p_sample_step(np.zeros(2), np.zeros(2), 6, schedule)


class NormalizerTests(SimpleTestCase):
    def test_fit_leaves_contacts_alone(self):
        normalizer = FeatureNormalizer.fit(list(_features(12)), LAYOUT)
        np.testing.assert_array_equal(normalizer.mean[LAYOUT.contacts], [0.0, 0.0])
        np.testing.assert_array_equal(normalizer.std[LAYOUT.contacts], [1.0, 1.0])
        self.assertTrue((normalizer.std >= 1e-3 * 0.999).all())

    def test_round_trip(self):
        features = _features(12)[0]
        normalizer = FeatureNormalizer.fit([features], LAYOUT)
        np.testing.assert_allclose(normalizer.denormalize(normalizer.normalize(features)), features, atol=1e-9)

    def test_state_round_trip(self):
        normalizer = FeatureNormalizer.fit(list(_features(12)), LAYOUT)
        restored = FeatureNormalizer.from_state(normalizer.state_dict())
        np.testing.assert_array_equal(restored.mean, normalizer.mean)
        np.testing.assert_array_equal(restored.std, normalizer.std)

    def test_empty_input(self):
        with self.assertRaises(ValidationError):
            FeatureNormalizer.fit([], LAYOUT)


class DenoiserTests(SimpleTestCase):
    def setUp(self):
        self.rng = np.random.default_rng(3)
        self.denoiser = Denoiser(LAYOUT.width, 8, 6, self.rng, heads=2, layers=2, max_frames=16)

    def test_output_shape_and_determinism(self):
        x_t = self.rng.normal(size=(2, 8, LAYOUT.width))
        z_c = Tensor(self.rng.normal(size=(2, 6)))
        first = self.denoiser(x_t, [3, 7], z_c)
        self.assertEqual(first.shape, x_t.shape)
        np.testing.assert_array_equal(first.data, self.denoiser(x_t, [3, 7], z_c).data)

    def test_padded_frames_do_not_leak(self):
        x_t = self.rng.normal(size=(1, 8, LAYOUT.width))
        valid = np.array([[True] * 5 + [False] * 3])
        z_c = Tensor(self.rng.normal(size=(1, 6)))
        changed = x_t.copy()
        changed[:, 5:] += 10.0
        a = self.denoiser(x_t, [4], z_c, valid).data[:, :5]
        b = self.denoiser(changed, [4], z_c, valid).data[:, :5]
        np.testing.assert_allclose(a, b, atol=1e-12)

    def test_timestep_matters(self):
        x_t = self.rng.normal(size=(1, 8, LAYOUT.width))
        z_c = Tensor(self.rng.normal(size=(1, 6)))
        self.assertFalse(np.allclose(self.denoiser(x_t, [1], z_c).data, self.denoiser(x_t, [50], z_c).data))

    def test_items_are_independent(self):
        x_t = self.rng.normal(size=(2, 8, LAYOUT.width))
        z_c = self.rng.normal(size=(2, 6))
        pair = self.denoiser(x_t, [5, 9], Tensor(z_c)).data
        alone = self.denoiser(x_t[1:], [9], Tensor(z_c[1:])).data
        np.testing.assert_allclose(pair[1:], alone, atol=1e-12)


class LossTests(SimpleTestCase):
    def setUp(self):
        self.raw = _features(8)
        self.normalizer = FeatureNormalizer.fit(list(self.raw), LAYOUT)
        self.x0 = self.normalizer.normalize(self.raw)
        self.valid = np.ones(self.x0.shape[:2], dtype=bool)

    def test_exact_prediction_gives_zero(self):
        prediction = Tensor(self.x0)
        motion = reconstruction_loss(prediction, self.x0, self.valid)
        terms = geometric_terms(prediction, self.x0, self.valid, self.normalizer, LAYOUT, SKELETON.foot_joints)
        _, report = combine_losses(motion, *terms, LossWeights())
        for value in report.as_dict().values():
            self.assertEqual(value, 0.0)

    def test_constant_offset(self):
        motion = reconstruction_loss(Tensor(self.x0 + 0.3), self.x0, self.valid)
        self.assertAlmostEqual(motion.item(), 0.09, places=12)

    def test_invalid_frames_ignored(self):
        valid = self.valid.copy()
        valid[:, 6:] = False
        prediction = self.x0.copy()
        prediction[:, 7:] += 5.0
        motion = reconstruction_loss(Tensor(prediction), self.x0, valid)
        self.assertEqual(motion.item(), 0.0)
        position, velocity, _ = geometric_terms(Tensor(prediction), self.x0, valid, self.normalizer, LAYOUT,
                                                SKELETON.foot_joints)
        self.assertEqual(position.item(), 0.0)
        self.assertEqual(velocity.item(), 0.0)

    def test_terms_non_negative(self):
        model, vocab = _tiny_model()
        z_c = model.embed_conditions([_condition(vocab, 0), _condition(vocab, 1)])
        batch = TrainingBatch(self.x0, self.valid, z_c)
        _, report = training_loss(model, batch, build_schedule(10), self.normalizer, LAYOUT, SKELETON.foot_joints,
                                  np.random.default_rng(0))
        for value in report.as_dict().values():
            self.assertTrue(np.isfinite(value))
            self.assertGreaterEqual(value, 0.0)

    def test_denoiser_loss_gradients(self):
        rng = np.random.default_rng(4)
        denoiser = Denoiser(LAYOUT.width, 16, 6, rng, layers=1, max_frames=8)
        z_c = Parameter(rng.normal(size=(2, 6)))
        schedule = build_schedule(10)
        valid = self.valid.copy()
        valid[1, 6:] = False

        def loss():
            batch = TrainingBatch(self.x0, valid, z_c)
            total, _ = training_loss(denoiser, batch, schedule, self.normalizer, LAYOUT, SKELETON.foot_joints,
                                     np.random.default_rng(11))
            return total

        self.assertLess(check_gradients(loss, denoiser.parameters() + [z_c]), 1e-4)

    def test_full_model_gradients(self):
        model, vocab = _tiny_model(seed=6)
        schedule = build_schedule(10)
        items = [_condition(vocab, 0), _condition(vocab, 1, 'someone waves at the pedestrian')]

        def loss():
            batch = TrainingBatch(self.x0, self.valid, model.embed_conditions(items))
            total, _ = training_loss(model, batch, schedule, self.normalizer, LAYOUT, SKELETON.foot_joints,
                                     np.random.default_rng(12), cond_dropout=0.5)
            return total

        self.assertLess(check_gradients(loss, model.parameters(), max_entries=4), 1e-4)


class SamplerTests(SimpleTestCase):
    def setUp(self):
        self.model, vocab = _tiny_model()
        self.item = _condition(vocab)
        self.schedule = build_schedule(5)
        self.normalizer = FeatureNormalizer.fit(list(_features(12)), LAYOUT)

    def test_fixed_seed_is_bit_identical(self):
        first = sample(self.model, self.item, self.schedule, self.normalizer, num_frames=10, seed=3)
        second = sample(self.model, self.item, self.schedule, self.normalizer, num_frames=10, seed=3)
        np.testing.assert_array_equal(first.features, second.features)

    def test_shape_and_origin(self):
        motion = sample(self.model, self.item, self.schedule, self.normalizer, num_frames=10, seed=1)
        self.assertEqual(motion.features.shape, (10, LAYOUT.width))
        np.testing.assert_array_equal(motion.root_translation[0, :2], [0.0, 0.0])

    def test_oracle_denoiser_reproduces_motion(self):
        features = _features(10)[0]
        target = self.normalizer.normalize(features)[None]
        out = reverse_chain(lambda x, t: target, target.shape, build_schedule(100), np.random.default_rng(0))
        motion = features_to_motion(self.normalizer.denormalize(out[0]))
        np.testing.assert_allclose(motion.features, features, atol=1e-5)

    def test_unit_guidance_is_conditional_prediction(self):
        x_t = Tensor(np.random.default_rng(0).normal(size=(1, 6, LAYOUT.width)))
        z_c = self.model.embed_conditions([self.item])
        np.testing.assert_array_equal(guided_prediction(self.model, x_t, 3, z_c, 1.0),
                                      self.model(x_t, [3], z_c).data)
        guided = guided_prediction(self.model, x_t, 3, z_c, 2.0)
        uncond = self.model(x_t, [3], self.model.null_condition(1)).data
        cond = self.model(x_t, [3], z_c).data
        np.testing.assert_allclose(guided, 2.0 * cond - uncond, atol=1e-10)


class CheckpointTests(SimpleTestCase):
    def setUp(self):
        self.model, _ = _tiny_model(dtype=np.float32)
        self.normalizer = FeatureNormalizer.identity(LAYOUT.width)
        self.meta = {'fusion_kind': 'parallel_cross', 'config_hash': 'abc123', 'step': 0}

    def test_round_trip_restores_parameters(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = save_checkpoint(Path(tmp) / 'model.stmd', self.model, self.normalizer, self.meta)
            checkpoint = load_checkpoint(path)
        clone, _ = _tiny_model(dtype=np.float32, seed=99)
        clone.load_state_dict(checkpoint.section('model'))
        for name, value in self.model.state_dict().items():
            np.testing.assert_array_equal(clone.state_dict()[name], value)
        self.assertEqual(checkpoint.meta, self.meta)

    def test_rewrite_is_byte_identical(self):
        blob = dumps_checkpoint(self.meta, self.model.state_dict())
        again = loads_checkpoint(blob)
        self.assertEqual(dumps_checkpoint(again.meta, again.tensors), blob)
        self.assertTrue(blob.startswith(b'STMD1'))

    def test_optimizer_state_survives(self):
        optimizer = Adam(self.model.named_parameters(), lr=1e-3)
        param = self.model.parameters()[0]
        with GradTape() as tape:
            loss = (param * param).sum()
        optimizer.step(tape.backward(loss))
        with tempfile.TemporaryDirectory() as tmp:
            path = save_checkpoint(Path(tmp) / 'model.stmd', self.model, self.normalizer, self.meta, optimizer)
            checkpoint = load_checkpoint(path)
        restored = Adam(self.model.named_parameters(), lr=1e-3)
        restored.load_state_dict(checkpoint.tensors, checkpoint.meta['optimizer_step'])
        self.assertEqual(restored.step_count, 1)
        name = next(iter(optimizer.m))
        np.testing.assert_array_equal(restored.m[name], optimizer.m[name])

    def test_bad_magic(self):
        with self.assertRaises(ValidationError):
            loads_checkpoint(b'NOPE!' + b'\x00' * 8)

    def test_mismatch_is_refused(self):
        checkpoint = loads_checkpoint(dumps_checkpoint(self.meta, {}))
        verify_checkpoint(checkpoint, 'abc123', 'parallel_cross')
        with self.assertRaises(ValidationError):
            verify_checkpoint(checkpoint, 'abc123', 'triple')
        with self.assertRaises(ValidationError):
            verify_checkpoint(checkpoint, 'ffff', 'parallel_cross')
