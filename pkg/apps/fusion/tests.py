# apps/fusion/tests.py

import numpy as np
from django.core.exceptions import ValidationError
from django.test import SimpleTestCase

from apps.autograd import functional as F
from apps.autograd.exceptions import ShapeError
from apps.autograd.gradcheck import check_gradients
from apps.autograd.nn import AttentionBlock, Linear
from apps.autograd.tensor import Parameter, Tensor

from .condition import (
    FUSION_KINDS, ConcatSelfFusion, ConditionModule, SelfEnhance, TripleFusion, build_fusion,
    fuse_variant, parallel_cross_fuse, position_inject, self_enhance,
)
from .points import PointEncoder, encode_scene


def _cloud(rng, count):
    return np.concatenate([rng.uniform(-2, 2, size=(count, 3)), rng.uniform(size=(count, 3))], axis=1)


def _identity_linear(layer):
    rows, cols = layer.weight.shape
    layer.weight.assign(np.eye(rows, cols))
    if layer.bias is not None:
        layer.bias.assign(np.zeros(cols))


def _silence_ffn(block):
    for layer in (block.ffn.inner, block.ffn.outer):
        layer.weight.assign(np.zeros(layer.weight.shape))
        layer.bias.assign(np.zeros(layer.bias.shape))


class PointEncoderTests(SimpleTestCase):
    def setUp(self):
        self.encoder = PointEncoder(8, np.random.default_rng(0), heads=2, global_points=32)

    def test_output_shapes(self):
        rng = np.random.default_rng(1)
        for count in (1, 100, 2048):
            self.assertEqual(encode_scene(self.encoder, _cloud(rng, count)).shape, (count, 8))

    def test_row_permutation_equivariance(self):
        rng = np.random.default_rng(2)
        cloud = _cloud(rng, 120)
        perm = rng.permutation(120)
        base = self.encoder(cloud).data
        np.testing.assert_array_equal(self.encoder(cloud[perm]).data, base[perm])

    def test_translation_changes_features(self):
        rng = np.random.default_rng(3)
        cloud = _cloud(rng, 50)
        moved = cloud.copy()
        moved[:, :3] += 1.0
        self.assertFalse(np.allclose(self.encoder(cloud).data, self.encoder(moved).data))

    def test_empty_cloud(self):
        with self.assertRaises(ValidationError):
            self.encoder(np.zeros((0, 6)))

    def test_gradients(self):
        rng = np.random.default_rng(4)
        encoder = PointEncoder(4, rng, neighbours=4, global_points=5)
        cloud = _cloud(rng, 12)
        error = check_gradients(lambda: (encoder(cloud) ** 2).sum(), encoder.parameters())
        self.assertLess(error, 1e-4)


class SelfEnhanceTests(SimpleTestCase):
    def test_shapes(self):
        rng = np.random.default_rng(5)
        module = SelfEnhance(8, 6, rng)
        F_p, F_l = self_enhance(module, Tensor(rng.normal(size=(7, 8))), Tensor(rng.normal(size=(3, 6))))
        self.assertEqual(F_p.shape, (7, 8))
        self.assertEqual(F_l.shape, (3, 8))

    def test_single_row_unit_weights(self):
        module = SelfEnhance(3, 3, np.random.default_rng(6))
        for attn in (module.scene_attn, module.text_attn):
            for layer in (attn.query, attn.key, attn.value, attn.output):
                _identity_linear(layer)
        _identity_linear(module.text_projection)
        row = Tensor([[0.5, -1.0, 2.0]])
        F_p, F_l = module(row, row)
        np.testing.assert_allclose(F_p.data, [[1.0, -2.0, 4.0]], atol=1e-12)
        np.testing.assert_allclose(F_l.data, [[1.0, -2.0, 4.0]], atol=1e-12)

    def test_gradients(self):
        rng = np.random.default_rng(7)
        module = SelfEnhance(4, 3, rng, heads=2)
        F_p, F_l = Parameter(rng.normal(size=(5, 4))), Parameter(rng.normal(size=(2, 3)))

        def loss():
            a, b = module(F_p, F_l)
            return (a ** 2).sum() + (b ** 3).sum()

        self.assertLess(check_gradients(loss, module.parameters() + [F_p, F_l]), 1e-4)


class PositionInjectTests(SimpleTestCase):
    def test_bias_only(self):
        layer = Linear(4 + 6, 4, np.random.default_rng(8))
        layer.weight.assign(np.zeros(layer.weight.shape))
        layer.bias.assign([1.0, 2.0, 3.0, 4.0])
        out = position_inject(layer, Tensor(np.zeros((5, 4))), _cloud(np.random.default_rng(9), 5))
        np.testing.assert_array_equal(out.data, np.tile([1.0, 2.0, 3.0, 4.0], (5, 1)))

    def test_identity_on_raw_slice(self):
        width = 8
        layer = Linear(width + 6, width, np.random.default_rng(10))
        weight = np.zeros((width + 6, width))
        weight[width:, :6] = np.eye(6)
        layer.weight.assign(weight)
        rng = np.random.default_rng(11)
        f_p = _cloud(rng, 9)
        out = position_inject(layer, Tensor(rng.normal(size=(9, width))), f_p)
        np.testing.assert_allclose(out.data[:, :6], f_p, atol=1e-12)
        np.testing.assert_allclose(out.data[:, 6:], 0.0, atol=1e-12)

    def test_row_mismatch(self):
        layer = Linear(10, 4, np.random.default_rng(12))
        with self.assertRaises(ShapeError):
            position_inject(layer, Tensor(np.zeros((3, 4))), np.zeros((4, 6)))


class ParallelCrossTests(SimpleTestCase):
    def setUp(self):
        rng = np.random.default_rng(13)
        self.text_block = AttentionBlock(4, rng)
        self.scene_block = AttentionBlock(4, rng)
        self.rng = rng

    def test_single_scene_row_is_shared(self):
        F_l = Tensor(self.rng.normal(size=(5, 4)))
        F_pc = Tensor(self.rng.normal(size=(1, 4)))
        attended = self.text_block.attn(F_l, F_pc)
        for row in attended.data[1:]:
            np.testing.assert_allclose(row, attended.data[0], atol=1e-12)

    def test_zero_ffn_without_norm_is_attention_plus_residual(self):
        rng = np.random.default_rng(14)
        text_block = AttentionBlock(2, rng, final_norm=False)
        scene_block = AttentionBlock(2, rng, final_norm=False)
        for block in (text_block, scene_block):
            _silence_ffn(block)
            for layer in (block.attn.query, block.attn.key, block.attn.value, block.attn.output):
                _identity_linear(layer)
        q = np.array([[1.0, 0.0], [0.0, 2.0]])
        c = np.array([[0.5, 1.0], [-1.0, 0.0]])
        F_L, F_P = parallel_cross_fuse(text_block, scene_block, Tensor(q), Tensor(c))

        def by_hand(query, context):
            scores = query @ context.T / np.sqrt(2.0)
            weights = np.exp(scores) / np.exp(scores).sum(axis=1, keepdims=True)
            return weights @ context + query

        np.testing.assert_allclose(F_L.data, by_hand(q, c), atol=1e-12)
        np.testing.assert_allclose(F_P.data, by_hand(c, q), atol=1e-12)

    def test_scene_permutation(self):
        F_l = Tensor(self.rng.normal(size=(3, 4)))
        scene = self.rng.normal(size=(6, 4))
        perm = self.rng.permutation(6)
        F_L, F_P = parallel_cross_fuse(self.text_block, self.scene_block, F_l, Tensor(scene))
        F_L2, F_P2 = parallel_cross_fuse(self.text_block, self.scene_block, F_l, Tensor(scene[perm]))
        np.testing.assert_allclose(F_P2.data, F_P.data[perm], atol=1e-12)
        np.testing.assert_allclose(F_L2.data, F_L.data, atol=1e-12)

    def test_empty_side(self):
        with self.assertRaises(ShapeError):
            parallel_cross_fuse(self.text_block, self.scene_block, Tensor(np.zeros((0, 4))), Tensor(np.ones((2, 4))))


class VariantTests(SimpleTestCase):
    def test_all_variants_emit_fixed_width(self):
        rng = np.random.default_rng(15)
        for kind in FUSION_KINDS:
            variant = build_fusion(kind, 4, 6, rng)
            for rows, tokens in ((1, 1), (2048, 12)):
                condition = fuse_variant(variant, Tensor(rng.normal(size=(tokens, 4))),
                                         Tensor(rng.normal(size=(rows, 4))))
                self.assertEqual(condition.z.shape, (6,))
                self.assertEqual(condition.kind, kind)
                self.assertTrue(np.isfinite(condition.z.data).all())

    def test_triple_similarity_columns_sum_to_one(self):
        rng = np.random.default_rng(16)
        variant = TripleFusion(4, 6, rng)
        _, extras = variant(Tensor(rng.normal(size=(3, 4))), Tensor(rng.normal(size=(9, 4))))
        self.assertEqual(extras['W'].shape, (9, 3))
        np.testing.assert_allclose(extras['W'].data.sum(axis=0), np.ones(3), atol=1e-12)

    def test_concat_self_identical_rows(self):
        rng = np.random.default_rng(17)
        variant = ConcatSelfFusion(4, 6, rng)
        v = Tensor(rng.normal(size=(1, 4)))
        z, extras = variant(v, v)
        block = variant.block
        expected = block.norm(block.ffn(block.attn.output(block.attn.value(v)) + v))
        np.testing.assert_allclose(extras['joint'].data, np.repeat(expected.data, 2, axis=0), atol=1e-12)
        by_hand = variant.head(Tensor(np.concatenate([expected.data[0], expected.data[0]])))
        np.testing.assert_allclose(z.data, by_hand.data, atol=1e-12)

    def test_unknown_kind(self):
        with self.assertRaises(ValidationError):
            build_fusion('late_fusion', 4, 6, np.random.default_rng(0))


class ConditionModuleTests(SimpleTestCase):
    def _module(self, kind, seed=18, width=4):
        return ConditionModule(kind, width, 3, 5, np.random.default_rng(seed), heads=2 if width % 2 == 0 else 1,
                               neighbours=4, global_points=6)

    def test_condition_is_permutation_invariant(self):
        rng = np.random.default_rng(19)
        cloud = _cloud(rng, 40)
        F_l = Tensor(rng.normal(size=(4, 3)))
        perm = rng.permutation(40)
        for kind in FUSION_KINDS:
            module = self._module(kind)
            first, _ = module(cloud, F_l)
            second, _ = module(cloud[perm], F_l)
            np.testing.assert_array_equal(first.z.data, second.z.data)

    def test_condition_depends_on_text(self):
        rng = np.random.default_rng(20)
        module = self._module('parallel_cross')
        cloud = _cloud(rng, 20)
        a, _ = module(cloud, Tensor(rng.normal(size=(4, 3))))
        b, _ = module(cloud, Tensor(rng.normal(size=(6, 3))))
        self.assertFalse(np.allclose(a.z.data, b.z.data))

    def test_activations_have_matching_rows(self):
        rng = np.random.default_rng(21)
        module = self._module('parallel_cross')
        _, acts = module(_cloud(rng, 15), Tensor(rng.normal(size=(4, 3))), keep_activations=True)
        self.assertEqual(acts.F_p.shape, (15, 4))
        self.assertEqual(acts.F_pc.shape, (15, 4))
        self.assertEqual(acts.F_l_enhanced.shape, (4, 4))
        self.assertEqual(acts.extras['F_P'].shape, (15, 4))
        self.assertEqual(acts.extras['F_L'].shape, (4, 4))

    def test_every_variant_gradient_checks(self):
        for kind in FUSION_KINDS:
            rng = np.random.default_rng(22)
            module = self._module(kind)
            cloud = _cloud(rng, 8)
            F_l = Parameter(rng.normal(size=(3, 3)))
            weights = rng.normal(size=5)

            def loss():
                condition, _ = module(cloud, F_l)
                return (condition.z * weights).sum() + (condition.z ** 2).sum()

            with self.subTest(kind=kind):
                self.assertLess(check_gradients(loss, module.parameters() + [F_l]), 1e-4)

    def test_bad_point_features(self):
        with self.assertRaises(ValidationError):
            self._module('triple')(np.zeros((4, 3)), Tensor(np.ones((2, 3))))

    def test_softmax_used_for_triple_is_scene_normalised(self):
        scores = Tensor(np.arange(6.0).reshape(3, 2))
        np.testing.assert_allclose(F.softmax(scores, axis=0).data.sum(axis=0), [1.0, 1.0])
