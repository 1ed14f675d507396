import math
import unittest

import numpy as np

from hyperagg.exceptions import (
    ConfigError, DimensionError, NumericalError, SupervisionError)
from hyperagg.oracles import dense_matmul, fd_gradient
from hyperagg.tensor import (
    OPERATIONS, Matrix, Segments, Tape, add, backward, backward_hook,
    concat_cols, dropout, elementwise_mul, gelu, layer_norm, mae_loss, matmul,
    mean_rows, row_select, scale, segment_expand, segment_outer,
    softmax_cross_entropy, spmm, sub, sum_all, transpose)


def leaf(data):
    return Matrix(data, requires_grad=True)


def uniform(rng, rows, cols):
    return rng.uniform(-1.0, 1.0, size=(rows, cols))


def relative_error(a, b):
    scale_ = np.linalg.norm(a) + np.linalg.norm(b)
    return 0.0 if scale_ == 0.0 else np.linalg.norm(a - b) / scale_


def tape_gradient(fn, matrix):
    with Tape() as tape:
        loss = fn()
    backward(tape, loss, [matrix])
    return matrix.grad


def numeric_gradient(fn, matrix):
    original = matrix.data.copy()

    def f(flat):
        matrix.data[...] = flat.reshape(original.shape)
        return fn().data[0, 0]
    try:
        return fd_gradient(f, original.ravel()).reshape(original.shape)
    finally:
        matrix.data[...] = original


class GradientTestCase(unittest.TestCase):

    def assertGradientsMatch(self, fn, matrices, tolerance=1e-4):
        for matrix in matrices:
            analytic = tape_gradient(fn, matrix)
            numeric = numeric_gradient(fn, matrix)
            self.assertLess(relative_error(analytic, numeric), tolerance)

    def projection(self, rng, rows, cols):
        weights = Matrix(uniform(rng, rows, cols))
        return lambda m: sum_all(elementwise_mul(m, weights))


class TestMatrix(unittest.TestCase):

    def test_scalar_and_vector_promotion(self):
        self.assertEqual(Matrix(3.0).shape, (1, 1))
        self.assertEqual(Matrix([1, 2, 3]).shape, (1, 3))

    def test_rejects_3d(self):
        with self.assertRaises(DimensionError):
            Matrix(np.zeros((2, 2, 2)))

    def test_data_is_copied(self):
        data = np.ones((2, 2))
        m = Matrix(data)
        data[0, 0] = 5.0
        self.assertEqual(m.data[0, 0], 1.0)

    def test_check_finite(self):
        Matrix([[1.0]]).check_finite()
        with self.assertRaises(NumericalError):
            Matrix([[float('nan')]]).check_finite()


class TestMatmul(GradientTestCase):

    def test_identity(self):
        out = matmul(Matrix([[1, 0], [0, 1]]), Matrix([[5, 6], [7, 8]]))
        self.assertEqual(out.tolist(), [[5, 6], [7, 8]])

    def test_zero_annihilation(self):
        out = matmul(Matrix([[0, 0]]), Matrix([[3], [4]]))
        self.assertEqual(out.tolist(), [[0]])

    def test_triple_loop_oracle(self):
        rng = np.random.default_rng(1)
        a, b = uniform(rng, 3, 4), uniform(rng, 4, 2)
        out = matmul(Matrix(a), Matrix(b))
        np.testing.assert_allclose(out.data, dense_matmul(a.tolist(),
                                                          b.tolist()),
                                   atol=1e-12)

    def test_mismatch_names_both_shapes(self):
        with self.assertRaises(DimensionError) as ctx:
            matmul(Matrix(np.zeros((2, 3))), Matrix(np.zeros((4, 2))))
        self.assertIn('2x3', str(ctx.exception))
        self.assertIn('4x2', str(ctx.exception))

    def test_associativity(self):
        rng = np.random.default_rng(2)
        for _ in range(10):
            p, q, r, s = rng.integers(1, 9, size=4)
            a = Matrix(uniform(rng, p, q))
            b = Matrix(uniform(rng, q, r))
            c = Matrix(uniform(rng, r, s))
            left = matmul(matmul(a, b), c).data
            right = matmul(a, matmul(b, c)).data
            self.assertLess(np.abs(left - right).max(), 1e-9)

    def test_gradients(self):
        rng = np.random.default_rng(3)
        a, b = leaf(uniform(rng, 3, 4)), leaf(uniform(rng, 4, 2))
        project = self.projection(rng, 3, 2)
        self.assertGradientsMatch(lambda: project(matmul(a, b)), [a, b])

    def test_inputs_not_mutated(self):
        rng = np.random.default_rng(4)
        a, b = leaf(uniform(rng, 2, 2)), leaf(uniform(rng, 2, 2))
        before = a.data.copy(), b.data.copy()
        with Tape() as tape:
            loss = sum_all(gelu(matmul(a, b)))
        backward(tape, loss, [a, b])
        np.testing.assert_array_equal(a.data, before[0])
        np.testing.assert_array_equal(b.data, before[1])


class TestTranspose(GradientTestCase):

    def test_involution(self):
        a = Matrix(np.arange(6.0).reshape(2, 3))
        np.testing.assert_array_equal(transpose(transpose(a)).data, a.data)

    def test_row_to_column(self):
        self.assertEqual(transpose(Matrix([[1, 2, 3]])).tolist(),
                         [[1], [2], [3]])

    def test_sum_gradient_is_ones(self):
        a = leaf(np.random.default_rng(5).uniform(-1, 1, (2, 3)))
        fn = lambda: sum_all(transpose(a))  # noqa
        np.testing.assert_allclose(tape_gradient(fn, a), np.ones((2, 3)))
        np.testing.assert_allclose(numeric_gradient(fn, a), np.ones((2, 3)),
                                   atol=1e-8)


class TestGelu(GradientTestCase):

    def test_zero(self):
        self.assertEqual(gelu(Matrix([[0.0]])).data[0, 0], 0.0)

    def test_asymptote(self):
        value = gelu(Matrix([[10.0]])).data[0, 0]
        self.assertTrue(9.999 <= value <= 10.0)

    def test_one(self):
        self.assertAlmostEqual(gelu(Matrix([[1.0]])).data[0, 0], 0.841345,
                               places=6)

    def test_gradient(self):
        rng = np.random.default_rng(6)
        a = leaf(rng.uniform(-3, 3, (4, 3)))
        project = self.projection(rng, 4, 3)
        self.assertGradientsMatch(lambda: project(gelu(a)), [a])


class TestElementwise(GradientTestCase):

    def test_add_broadcasts_a_row(self):
        out = add(Matrix(np.zeros((3, 2))), Matrix([[1.0, 2.0]]))
        self.assertEqual(out.tolist(), [[1, 2]] * 3)

    def test_add_rejects_mismatch(self):
        with self.assertRaises(DimensionError):
            add(Matrix(np.zeros((3, 2))), Matrix(np.zeros((2, 2))))

    def test_gradients(self):
        rng = np.random.default_rng(7)
        a, b = leaf(uniform(rng, 3, 2)), leaf(uniform(rng, 3, 2))
        row = leaf(uniform(rng, 1, 2))
        project = self.projection(rng, 3, 2)
        self.assertGradientsMatch(
            lambda: project(sub(add(a, row), scale(elementwise_mul(a, b),
                                                   0.5))), [a, b, row])

    def test_concat_shape(self):
        out = concat_cols(Matrix(np.zeros((4, 3))), Matrix(np.ones((4, 3))))
        self.assertEqual(out.shape, (4, 6))

    def test_concat_gradient(self):
        rng = np.random.default_rng(8)
        a, b = leaf(uniform(rng, 3, 2)), leaf(uniform(rng, 3, 1))
        project = self.projection(rng, 3, 3)
        self.assertGradientsMatch(lambda: project(concat_cols(a, b)), [a, b])

    def test_mean_rows_of_one_row(self):
        self.assertEqual(mean_rows(Matrix([[1.0, -2.0]])).tolist(),
                         [[1.0, -2.0]])

    def test_mean_rows_gradient(self):
        rng = np.random.default_rng(9)
        a = leaf(uniform(rng, 4, 3))
        project = self.projection(rng, 1, 3)
        self.assertGradientsMatch(lambda: project(mean_rows(a)), [a])


class TestRowSelect(GradientTestCase):

    def test_gradient_scatters_into_selected_row(self):
        a = leaf(np.arange(6.0).reshape(3, 2))
        grad = tape_gradient(lambda: sum_all(row_select(a, [1])), a)
        np.testing.assert_array_equal(grad, [[0, 0], [1, 1], [0, 0]])
        np.testing.assert_allclose(
            numeric_gradient(lambda: sum_all(row_select(a, [1])), a), grad,
            atol=1e-8)

    def test_repeats_accumulate(self):
        a = leaf(np.zeros((2, 1)))
        grad = tape_gradient(lambda: sum_all(row_select(a, [0, 0, 1])), a)
        np.testing.assert_array_equal(grad, [[2], [1]])

    def test_out_of_range(self):
        with self.assertRaises(DimensionError):
            row_select(Matrix(np.zeros((2, 2))), [2])

    def test_spmm_gradient(self):
        from scipy import sparse
        rng = np.random.default_rng(10)
        s = sparse.random(4, 3, density=0.5, random_state=1, format='csr')
        a = leaf(uniform(rng, 3, 2))
        project = self.projection(rng, 4, 2)
        self.assertGradientsMatch(lambda: project(spmm(s, a)), [a])


class TestLayerNorm(GradientTestCase):

    def test_constant_row_gives_bias(self):
        bias = Matrix([[0.5, -1.0, 2.0]])
        out = layer_norm(Matrix([[3.0, 3.0, 3.0]]), Matrix.ones(1, 3), bias)
        np.testing.assert_allclose(out.data, bias.data, atol=1e-12)

    def test_centering(self):
        rng = np.random.default_rng(11)
        bias = Matrix(uniform(rng, 1, 5))
        out = layer_norm(Matrix(uniform(rng, 4, 5)), Matrix.ones(1, 5), bias)
        for row in out.data:
            self.assertLess(abs(row.mean() - bias.data.mean()), 1e-9)

    def test_gradients(self):
        rng = np.random.default_rng(12)
        a = leaf(uniform(rng, 3, 4))
        gain = leaf(rng.uniform(0.5, 1.5, (1, 4)))
        bias = leaf(uniform(rng, 1, 4))
        project = self.projection(rng, 3, 4)
        self.assertGradientsMatch(lambda: project(layer_norm(a, gain, bias)),
                                  [a, gain, bias], tolerance=1e-5)

    def test_width_mismatch(self):
        with self.assertRaises(DimensionError):
            layer_norm(Matrix(np.zeros((2, 3))), Matrix.ones(1, 2),
                       Matrix.zeros(1, 2))


class TestDropout(GradientTestCase):

    def test_zero_probability_is_identity(self):
        a = Matrix(np.ones((2, 2)))
        self.assertTrue(dropout(a, 0.0, True, np.random.default_rng(0)) is a)

    def test_inference_is_identity(self):
        a = Matrix(np.ones((2, 2)))
        self.assertTrue(dropout(a, 0.9, False, None) is a)

    def test_probability_range(self):
        a = Matrix(np.ones((2, 2)))
        for p in (-0.1, 1.0, 1.5):
            with self.assertRaises(ConfigError):
                dropout(a, p, True, np.random.default_rng(0))

    def test_expected_mean(self):
        rng = np.random.default_rng(13)
        a = Matrix(np.ones((1, 10)))
        total = 0.0
        trials = 10000
        for _ in range(trials):
            total += dropout(a, 0.3, True, rng).data.mean()
        self.assertLess(abs(total / trials - 1.0), 0.02)

    def test_gradient_uses_stored_mask(self):
        rng = np.random.default_rng(14)
        a = leaf(uniform(rng, 3, 3))
        project = self.projection(rng, 3, 3)
        fn = lambda: project(dropout(a, 0.5, True,  # noqa
                                     np.random.default_rng(99)))
        self.assertGradientsMatch(fn, [a])


class TestLosses(GradientTestCase):

    def test_uniform_logits(self):
        loss = softmax_cross_entropy(Matrix(np.zeros((4, 5))), [0, 1, 2, 3],
                                     [True] * 4)
        self.assertAlmostEqual(loss.data[0, 0], math.log(5), places=12)

    def test_large_margin(self):
        logits = Matrix([[50.0, 0.0, 0.0]])
        loss = softmax_cross_entropy(logits, [0], [True])
        self.assertLess(loss.data[0, 0], 1e-12)

    def test_gradient(self):
        rng = np.random.default_rng(15)
        logits = leaf(uniform(rng, 4, 3))
        labels = [0, 2, 1, 2]
        mask = [True, True, False, True]
        self.assertGradientsMatch(
            lambda: softmax_cross_entropy(logits, labels, mask), [logits],
            tolerance=1e-6)

    def test_masked_rows_get_no_gradient(self):
        logits = leaf(np.zeros((3, 2)))
        grad = tape_gradient(
            lambda: softmax_cross_entropy(logits, [0, 1, 1],
                                          [True, False, True]), logits)
        np.testing.assert_array_equal(grad[1], [0.0, 0.0])

    def test_empty_mask(self):
        with self.assertRaises(SupervisionError) as ctx:
            softmax_cross_entropy(Matrix(np.zeros((2, 2))), [0, 1],
                                  [False, False])
        self.assertIn('no supervised vertices', str(ctx.exception))

    def test_mae_gradient(self):
        predictions = leaf([[0.5], [-1.0], [2.0]])
        self.assertGradientsMatch(
            lambda: mae_loss(predictions, [0.0, 0.0, 1.0], [True] * 3),
            [predictions])

    def test_mae_value(self):
        loss = mae_loss(Matrix([[1.0], [3.0]]), [1.0, 1.0], [True, True])
        self.assertEqual(loss.data[0, 0], 1.0)


class TestBackward(unittest.TestCase):

    def test_sum_gives_ones(self):
        w = leaf(np.zeros((2, 3)))
        with Tape() as tape:
            loss = sum_all(w)
        backward(tape, loss, [w])
        np.testing.assert_array_equal(w.grad, np.ones((2, 3)))

    def test_independent_parameter_gets_zero(self):
        w = leaf(np.ones((2, 2)))
        v = leaf(np.ones((1, 2)))
        with Tape() as tape:
            loss = sum_all(v)
        backward(tape, loss, [w, v])
        np.testing.assert_array_equal(w.grad, np.zeros((2, 2)))

    def test_loss_must_be_scalar(self):
        w = leaf(np.ones((2, 2)))
        with Tape() as tape:
            out = scale(w, 2.0)
        with self.assertRaises(DimensionError):
            backward(tape, out, [w])

    def test_nothing_recorded_without_tape(self):
        w = leaf(np.ones((2, 2)))
        out = scale(w, 2.0)
        self.assertFalse(out.requires_grad)

    def test_tape_records_every_operation_once(self):
        w = leaf(np.ones((2, 2)))
        with Tape() as tape:
            sum_all(gelu(scale(w, 2.0)))
        self.assertEqual([op.name for op in tape.operations],
                         ['scale', 'gelu', 'sum_all'])

    def test_replay_is_deterministic(self):
        rng = np.random.default_rng(16)
        x = uniform(rng, 3, 3)
        grads = []
        for _ in range(2):
            w = leaf(x)
            with Tape() as tape:
                loss = sum_all(gelu(matmul(w, w)))
            backward(tape, loss, [w])
            grads.append((loss.data.copy(), w.grad.copy()))
        np.testing.assert_array_equal(grads[0][0], grads[1][0])
        np.testing.assert_array_equal(grads[0][1], grads[1][1])

    def test_backward_hook(self):
        a, b = leaf(np.ones((1, 2))), leaf(np.ones((2, 1)))
        double = lambda grads: tuple(2.0 * g for g in grads)  # noqa
        with backward_hook('matmul', double):
            with Tape() as tape:
                loss = sum_all(matmul(a, b))
            backward(tape, loss, [a, b])
        np.testing.assert_array_equal(a.grad, [[2.0, 2.0]])
        with Tape() as tape:
            loss = sum_all(matmul(a, b))
        backward(tape, loss, [a, b])
        np.testing.assert_array_equal(a.grad, [[1.0, 1.0]])

    def test_backward_hook_unknown_operation(self):
        with self.assertRaises(ConfigError) as ctx:
            with backward_hook('matmull', lambda grads: grads):
                pass
        self.assertIn('matmull', str(ctx.exception))
        self.assertIn('matmul', OPERATIONS)

    def test_check_finite_mode(self):
        a = leaf([[1e308]])
        with self.assertRaises(NumericalError):
            with Tape(check_finite=True):
                scale(a, 10.0)


class TestSegments(GradientTestCase):

    def test_empty_segment(self):
        with self.assertRaises(DimensionError) as ctx:
            Segments([2, 0, 1])
        self.assertIn('empty neighborhood', str(ctx.exception))

    def test_layout(self):
        segments = Segments([2, 3, 2])
        self.assertEqual(segments.total, 7)
        self.assertEqual(segments.offsets.tolist(), [0, 2, 5, 7])
        self.assertEqual(len(segments.buckets), 2)
        np.testing.assert_allclose(
            segments.mean_matrix().toarray().sum(axis=1), np.ones(3))

    def test_outer_matches_per_segment_products(self):
        rng = np.random.default_rng(17)
        sizes = [1, 3, 2, 3]
        x, t = uniform(rng, 9, 4), uniform(rng, 9, 2)
        segments = Segments(sizes)
        out = segment_outer(Matrix(x), Matrix(t), segments).data
        for s, start in enumerate(segments.offsets[:-1]):
            rows = slice(start, start + sizes[s])
            np.testing.assert_allclose(out[4 * s:4 * s + 4],
                                       x[rows].T.dot(t[rows]), atol=1e-12)

    def test_expand_matches_per_segment_products(self):
        rng = np.random.default_rng(18)
        sizes = [2, 1, 2]
        t, y = uniform(rng, 5, 2), uniform(rng, 12, 2)
        segments = Segments(sizes)
        out = segment_expand(Matrix(t), Matrix(y), segments).data
        for s, start in enumerate(segments.offsets[:-1]):
            rows = slice(start, start + sizes[s])
            np.testing.assert_allclose(out[rows],
                                       t[rows].dot(y[4 * s:4 * s + 4].T),
                                       atol=1e-12)

    def test_gradients(self):
        rng = np.random.default_rng(19)
        segments = Segments([3, 1, 3, 2])
        x, t = leaf(uniform(rng, 9, 3)), leaf(uniform(rng, 9, 2))
        project = self.projection(rng, 9, 3)

        def fn():
            return project(segment_expand(
                t, gelu(segment_outer(x, t, segments)), segments))
        self.assertGradientsMatch(fn, [x, t])


if __name__ == '__main__':
    unittest.main()
