# apps/autograd/tests.py

import numpy as np
from django.test import SimpleTestCase

from . import functional as F
from .exceptions import GradientError, NonFiniteError, ShapeError
from .gradcheck import check_gradients
from .nn import AttentionBlock, MultiHeadAttention
from .optim import Adam
from .tensor import GradTape, Parameter, Tensor, concat, cumsum, masked_fill, round_, stack


def _param(rng, *shape):
    return Parameter(rng.normal(size=shape))


class SoftmaxTests(SimpleTestCase):
    def test_uniform_input(self):
        out = F.softmax(Tensor([1.0, 1.0, 1.0]))
        np.testing.assert_allclose(out.data, [1 / 3] * 3, atol=1e-12)

    def test_log_two(self):
        out = F.softmax(Tensor([0.0, np.log(2.0)]))
        np.testing.assert_allclose(out.data, [1 / 3, 2 / 3], atol=1e-12)

    def test_large_constant_shift_is_stable(self):
        out = F.softmax(Tensor([1000.0, 1000.0]))
        np.testing.assert_allclose(out.data, [0.5, 0.5], atol=1e-12)

    def test_rows_sum_to_one(self):
        rng = np.random.default_rng(1)
        x = Tensor(rng.normal(scale=300.0, size=(20, 7)))
        out = F.softmax(x, axis=-1)
        self.assertTrue((out.data >= 0).all())
        np.testing.assert_allclose(out.data.sum(axis=-1), np.ones(20), atol=1e-6)

    def test_other_axis(self):
        rng = np.random.default_rng(2)
        out = F.softmax(Tensor(rng.normal(size=(5, 3))), axis=0)
        np.testing.assert_allclose(out.data.sum(axis=0), np.ones(3), atol=1e-6)

    def test_empty_axis_rejected(self):
        with self.assertRaises(ShapeError):
            F.softmax(Tensor(np.zeros((2, 0))))

    def test_non_finite_input_rejected(self):
        with self.assertRaises(NonFiniteError):
            F.softmax(Tensor([0.0, np.nan]))

    def test_masked_positions_get_zero(self):
        out = F.softmax(Tensor([1.0, 2.0, 3.0]), valid=[True, True, False])
        self.assertEqual(out.data[2], 0.0)
        self.assertAlmostEqual(out.data.sum(), 1.0)


class LayerNormTests(SimpleTestCase):
    def test_constant_row(self):
        out = F.layer_norm(Tensor([[5.0, 5.0, 5.0]]), Tensor(np.ones(3)), Tensor(np.zeros(3)))
        np.testing.assert_allclose(out.data, np.zeros((1, 3)), atol=1e-12)

    def test_two_values(self):
        out = F.layer_norm(Tensor([[1.0, 3.0]]), eps=1e-12)
        np.testing.assert_allclose(out.data, [[-1.0, 1.0]], atol=1e-9)

    def test_random_row_matches_direct_formula(self):
        rng = np.random.default_rng(3)
        row = rng.normal(size=(1, 9))
        out = F.layer_norm(Tensor(row), eps=1e-5)
        expected = (row - row.mean()) / np.sqrt(row.var() + 1e-5)
        np.testing.assert_allclose(out.data, expected, atol=1e-12)
        self.assertAlmostEqual(out.data.mean(), 0.0, places=10)
        self.assertAlmostEqual(out.data.var(), 1.0, places=4)

    def test_empty_last_axis(self):
        with self.assertRaises(ShapeError):
            F.layer_norm(Tensor(np.zeros((3, 0))))


class AttentionTests(SimpleTestCase):
    def test_single_key_returns_value(self):
        rng = np.random.default_rng(4)
        q = Tensor(rng.normal(size=(5, 4)))
        k = Tensor(rng.normal(size=(1, 4)))
        v = Tensor([[1.5, -2.0, 0.25]])
        out = F.attention(q, k, v)
        np.testing.assert_allclose(out.data, np.repeat(v.data, 5, axis=0), atol=1e-12)

    def test_identical_keys_average_values(self):
        rng = np.random.default_rng(5)
        key_row = rng.normal(size=(1, 3))
        k = Tensor(np.repeat(key_row, 2, axis=0))
        v = Tensor([[1.0, 0.0], [3.0, 4.0]])
        out = F.attention(Tensor(rng.normal(size=(6, 3))), k, v)
        np.testing.assert_allclose(out.data, np.tile([[2.0, 2.0]], (6, 1)), atol=1e-12)

    def test_output_inside_convex_hull(self):
        rng = np.random.default_rng(6)
        v = rng.normal(size=(7, 3))
        out = F.attention(Tensor(rng.normal(size=(4, 5))), Tensor(rng.normal(size=(7, 5))), Tensor(v))
        self.assertTrue((out.data >= v.min(axis=0) - 1e-12).all())
        self.assertTrue((out.data <= v.max(axis=0) + 1e-12).all())

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(7)
        q, k, v = _param(rng, 3, 4), _param(rng, 5, 4), _param(rng, 5, 2)
        error = check_gradients(lambda: (F.attention(q, k, v) ** 2).sum(), [q, k, v])
        self.assertLess(error, 1e-4)

    def test_errors(self):
        with self.assertRaises(ShapeError):
            F.attention(Tensor(np.ones((2, 3))), Tensor(np.ones((0, 3))), Tensor(np.ones((0, 2))))
        with self.assertRaises(ShapeError):
            F.attention(Tensor(np.ones((2, 3))), Tensor(np.ones((4, 2))), Tensor(np.ones((4, 2))))


class BackwardTests(SimpleTestCase):
    def test_sum_of_squares(self):
        x = Parameter([1.0, 2.0])
        with GradTape() as tape:
            loss = (x * x).sum()
        grads = tape.backward(loss)
        np.testing.assert_allclose(grads[x], [2.0, 4.0])

    def test_matmul_chain(self):
        rng = np.random.default_rng(8)
        a, b, c = _param(rng, 3, 4), _param(rng, 4, 5), _param(rng, 5, 2)
        self.assertLess(check_gradients(lambda: ((a @ b) @ c).tanh().sum(), [a, b, c]), 1e-4)

    def test_batched_matmul_and_shared_weight(self):
        rng = np.random.default_rng(9)
        x, w, y = _param(rng, 2, 3, 4), _param(rng, 4, 4), _param(rng, 2, 4, 3)
        self.assertLess(check_gradients(lambda: ((x @ w) @ y).sin().sum(), [x, w, y]), 1e-4)

    def test_elementwise_and_structural_ops(self):
        rng = np.random.default_rng(10)
        a = _param(rng, 4, 3)
        b = Parameter(rng.uniform(0.5, 2.0, size=(4, 3)))
        bias = _param(rng, 3)

        def loss():
            mixed = F.gelu(a * b + bias) / b + b.log() - a.exp() * 0.1
            joined = concat([mixed, a.cos()], axis=1)
            stacked = stack([joined[:, :2], joined[:, 2:4]], axis=0)
            picked = joined.take(np.array([0, 2, 2]))
            masked = masked_fill(cumsum(picked, axis=0), np.array([[True, False, False, False, False, False]]))
            return F.log_softmax(masked, axis=-1).sum() + stacked.mean() + (a.T @ b).sum()

        self.assertLess(check_gradients(loss, [a, b, bias]), 1e-4)

    def test_multihead_attention_block(self):
        rng = np.random.default_rng(11)
        block = AttentionBlock(4, rng, heads=2, context_width=3)
        query, context = _param(rng, 2, 5, 4), _param(rng, 2, 6, 3)
        valid = np.ones((2, 6), dtype=bool)
        valid[1, 4:] = False
        params = block.parameters() + [query, context]
        self.assertLess(check_gradients(lambda: (block(query, context, valid) ** 2).sum(), params), 1e-4)

    def test_non_scalar_loss_rejected(self):
        x = Parameter([1.0, 2.0])
        with GradTape() as tape:
            out = x * 2.0
        with self.assertRaises(GradientError):
            tape.backward(out)

    def test_non_differentiable_op_rejected(self):
        x = Parameter([1.2, 2.7])
        with GradTape() as tape:
            loss = round_(x * 1.0).sum()
        with self.assertRaises(GradientError):
            tape.backward(loss)

    def test_loss_outside_tape_rejected(self):
        x = Parameter([1.0])
        loss = (x * x).sum()
        with GradTape() as tape:
            pass
        with self.assertRaises(GradientError):
            tape.backward(loss)

    def test_backward_is_deterministic(self):
        def run():
            rng = np.random.default_rng(12)
            attn = MultiHeadAttention(6, rng)
            x = Tensor(rng.normal(size=(4, 6)))
            with GradTape() as tape:
                loss = (attn(x) ** 2).mean()
            grads = tape.backward(loss)
            return [grads[p] for p in attn.parameters()]

        for first, second in zip(run(), run()):
            self.assertTrue(np.array_equal(first, second))

    def test_nan_is_surfaced(self):
        with self.assertRaises(NonFiniteError):
            Tensor([1.0, np.inf])
        with self.assertRaises(NonFiniteError):
            Tensor([-1.0]) ** 0.5

    def test_non_finite_gradient_is_surfaced(self):
        x = Parameter([0.0, 1.0])
        with GradTape() as tape:
            loss = (x ** 0.5).sum()
        with np.errstate(divide='ignore'), self.assertRaises(NonFiniteError):
            tape.backward(loss)


class AdamTests(SimpleTestCase):
    def test_step_moves_against_gradient(self):
        x = Parameter([1.0, -1.0])
        optimizer = Adam({'x': x}, lr=0.1)
        with GradTape() as tape:
            loss = (x * x).sum()
        optimizer.step(tape.backward(loss))
        np.testing.assert_allclose(x.data, [0.9, -0.9], atol=1e-6)
        self.assertEqual(optimizer.step_count, 1)
