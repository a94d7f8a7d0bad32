# Copyright (C) <2026> Association Prologin <association@prologin.org>
# SPDX-License-Identifier: GPL-3.0+

import numpy as np
from django.test import SimpleTestCase

from autodiff import functional as F
from autodiff.gradcheck import NON_DIFFERENTIABLE, finite_diff_check
from autodiff.nn import Initializer, Module
from autodiff.primitives import dft_tables
from autodiff.tensor import ComputeGraph, Tensor, apply_primitive, backward
from tracelib.exceptions import ContractViolation

SEEDS = range(10)


def param(rng, *shape, positive=False):
    data = rng.standard_normal(shape)
    if positive:
        data = np.abs(data) + 0.5
    return Tensor(data, requires_grad=True)


def weighted_sum(out, rng):
    """Scalar reduction whose gradient is generic in every output entry."""
    weights = Tensor(rng.standard_normal(out.shape))
    return (out * weights).mean()


class PrimitiveGradientTest(SimpleTestCase):
    def assertGradients(self, build, *shapes, positive=False):
        for seed in SEEDS:
            with self.subTest(seed=seed):
                rng = np.random.default_rng(seed)
                params = [param(rng, *s, positive=positive) for s in shapes]

                def f():
                    weights = np.random.default_rng(1000 + seed)
                    return weighted_sum(build(*params), weights)

                report = finite_diff_check(f, params, eps=1e-5, tol=1e-4)
                self.assertTrue(report.passed, str(report))
                self.assertLess(report.max_rel_error, 1e-4)

    def test_matmul(self):
        self.assertGradients(lambda a, b: a @ b, (2, 3, 4), (4, 5))
        self.assertGradients(lambda a, b: a @ b, (2, 3, 4), (2, 4, 5))

    def test_elementwise_broadcast(self):
        self.assertGradients(lambda a, b: a + b, (3, 4), (4,))
        self.assertGradients(lambda a, b: a - b, (3, 1), (3, 4))
        self.assertGradients(lambda a, b: a * b, (2, 3, 4), (1, 4))
        self.assertGradients(lambda a: a * 3.0 - a / 2.0, (5,))

    def test_activations(self):
        self.assertGradients(F.sigmoid, (4, 5))
        self.assertGradients(F.gelu, (4, 5))
        self.assertGradients(F.silu, (4, 5))
        self.assertGradients(F.log1p, (4, 5), positive=True)

    def test_softmax_with_mask(self):
        mask = np.where(np.tril(np.ones((4, 4))) > 0, 0.0, -np.inf)
        self.assertGradients(lambda x: F.softmax(x, mask=mask), (2, 4, 4))
        self.assertGradients(lambda x: F.softmax(x, axis=0), (3, 5))

    def test_losses(self):
        labels = np.array([0, 2, 1, 2])
        self.assertGradients(lambda x: F.cross_entropy(x, labels), (4, 3))
        self.assertGradients(lambda r: F.huber(r, delta=0.7), (6, 5))

    def test_layout(self):
        self.assertGradients(lambda x: x.reshape(6, 4), (2, 3, 4))
        self.assertGradients(lambda x: x.permute(2, 0, 1), (2, 3, 4))
        self.assertGradients(lambda x: x.sum(axis=1), (2, 3, 4))
        self.assertGradients(lambda x: x.mean(axis=(0, 2)), (2, 3, 4))
        self.assertGradients(
            lambda a, b: F.concat([a, b], axis=1), (2, 3), (2, 5)
        )
        self.assertGradients(
            lambda x: F.take(x, np.array([2, 0, 2]), axis=1), (2, 4)
        )
        self.assertGradients(
            lambda x: F.put_along(x, np.array([[3, 0], [1, 2]]), 5), (2, 2)
        )
        self.assertGradients(
            lambda x: F.scatter_rows(x, np.array([4, 1, 2]), 6), (3, 2)
        )

    def test_topk_values(self):
        self.assertGradients(lambda x: F.topk(x, 3)[0], (4, 7))

    def test_normalizations(self):
        self.assertGradients(
            lambda x, g, b: F.group_norm(x, g, b, groups=2),
            (2, 4, 6),
            (4,),
            (4,),
        )
        self.assertGradients(F.layer_norm, (3, 5, 6), (6,), (6,))
        self.assertGradients(F.rms_norm, (3, 5, 6), (6,))

    def test_convolutions(self):
        self.assertGradients(
            lambda x, w: F.conv1d(x, w, stride=3),
            (2, 2, 20),
            (4, 2, 5),
        )
        self.assertGradients(
            lambda x, w: F.conv1d(x, w, padding=1),
            (2, 3, 9),
            (2, 3, 3),
        )
        self.assertGradients(F.dwconv1d, (2, 4, 5), (4, 5), (4,))
        self.assertGradients(F.dwconv1d, (1, 3, 2), (3, 4), (3,))

    def test_spectral_and_rotary(self):
        self.assertGradients(F.rdft_magnitude, (3, 16), (9,), (9,))
        self.assertGradients(F.rdft_magnitude, (2, 15), (8,), (8,))
        self.assertGradients(lambda x: F.rope(x), (2, 5, 6))
        self.assertGradients(lambda x: F.rope(x, base=100.0), (2, 5, 7))


class PrimitiveForwardTest(SimpleTestCase):
    def test_softmax_symmetric(self):
        out = F.softmax(Tensor(np.zeros(2)))
        np.testing.assert_array_equal(out.data, [0.5, 0.5])

    def test_softmax_rows_are_distributions(self):
        x = np.random.default_rng(0).standard_normal((20, 9)) * 30
        out = F.softmax(Tensor(x)).data
        self.assertTrue(np.all(out >= 0))
        np.testing.assert_allclose(out.sum(-1), 1.0, rtol=0, atol=1e-12)

    def test_softmax_all_masked_axis(self):
        mask = np.array([[0.0, -np.inf], [-np.inf, -np.inf]])
        with self.assertRaises(ContractViolation):
            F.softmax(Tensor(np.zeros((2, 2))), mask=mask)

    def test_dft_magnitude_of_constant_patch(self):
        c = -1.7
        x = Tensor(np.full((1, 200), c))
        out = F.rdft_magnitude(x, np.ones(101), np.zeros(101)).data[0]
        self.assertAlmostEqual(out[0], 200 * abs(c), places=9)
        self.assertLess(np.max(np.abs(out[1:])), 1e-9)

    def test_dft_magnitude_matches_numpy(self):
        x = np.random.default_rng(4).standard_normal((3, 200))
        out = F.rdft_magnitude(Tensor(x), np.ones(101), np.zeros(101)).data
        np.testing.assert_allclose(out, np.abs(np.fft.rfft(x)), atol=1e-9)

    def test_conv_output_lengths(self):
        x = Tensor(np.zeros((1, 1, 200)))
        for kernel, expected in ((25, 8), (49, 7), (99, 5)):
            w = Tensor(np.zeros((8, 1, kernel)))
            out = F.conv1d(x, w, stride=25)
            self.assertEqual(out.shape, (1, 8, expected))

    def test_conv_matches_direct_summation(self):
        rng = np.random.default_rng(5)
        x = rng.standard_normal((2, 3, 200))
        w = rng.standard_normal((4, 3, 49))
        out = F.conv1d(Tensor(x), Tensor(w), stride=25).data
        for b in range(2):
            for o in range(4):
                for p in range(7):
                    expected = sum(
                        x[b, c, 25 * p + k] * w[o, c, k]
                        for c in range(3)
                        for k in range(49)
                    )
                    self.assertAlmostEqual(out[b, o, p], expected, places=9)

    def test_conv_kernel_larger_than_input(self):
        with self.assertRaises(ContractViolation):
            F.conv1d(
                Tensor(np.zeros((1, 1, 10))), Tensor(np.zeros((1, 1, 11)))
            )

    def test_shape_mismatch(self):
        with self.assertRaises(ContractViolation):
            Tensor(np.zeros((2, 3))) + Tensor(np.zeros((4,)))
        with self.assertRaises(ContractViolation):
            Tensor(np.zeros((2, 3))) @ Tensor(np.zeros((2, 3)))
        with self.assertRaises(ContractViolation):
            apply_primitive('sigmoid', [Tensor(0.0), Tensor(1.0)])

    def test_group_norm_statistics(self):
        rng = np.random.default_rng(6)
        x = Tensor(rng.standard_normal((3, 8, 10)) * 5 + 2)
        out = F.group_norm(x, np.ones(8), np.zeros(8), groups=4).data
        grouped = out.reshape(3, 4, -1)
        np.testing.assert_allclose(grouped.mean(-1), 0, atol=1e-6)
        np.testing.assert_allclose(grouped.var(-1), 1, atol=1e-6)

    def test_group_norm_indivisible_channels(self):
        with self.assertRaises(ContractViolation):
            F.group_norm(
                Tensor(np.zeros((1, 6, 4))), np.ones(6), np.zeros(6), 4
            )

    def test_layer_and_rms_norm_statistics(self):
        x = Tensor(np.random.default_rng(7).standard_normal((4, 5, 32)) * 3)
        ln = F.layer_norm(x, np.ones(32), np.zeros(32)).data
        np.testing.assert_allclose(ln.mean(-1), 0, atol=1e-6)
        np.testing.assert_allclose(ln.var(-1), 1, atol=1e-5)
        rms = F.rms_norm(x, np.ones(32)).data
        np.testing.assert_allclose(
            np.sqrt((rms * rms).mean(-1)), 1, atol=1e-6
        )

    def test_topk_ties_go_to_lowest_index(self):
        x = Tensor(np.array([1.0, 3.0, 3.0, 0.0, 3.0]))
        values, indices = F.topk(x, 2)
        np.testing.assert_array_equal(indices, [1, 2])
        np.testing.assert_array_equal(values.data, [3.0, 3.0])
        _, indices = F.topk(Tensor(np.zeros(64)), 8)
        np.testing.assert_array_equal(indices, np.arange(8))

    def test_topk_returns_the_largest(self):
        x = np.random.default_rng(8).standard_normal((10, 20))
        _, indices = F.topk(Tensor(x), 5)
        self.assertEqual(indices.shape, (10, 5))
        for row, picked in zip(x, indices):
            rest = np.delete(row, picked)
            self.assertGreater(row[picked].min(), rest.max())

    def test_topk_invalid_k(self):
        with self.assertRaises(ContractViolation):
            F.topk(Tensor(np.zeros(4)), 5)

    def test_forward_is_deterministic(self):
        rng = np.random.default_rng(9)
        x = rng.standard_normal((2, 4, 16))
        w = rng.standard_normal((3, 4, 5))

        def run():
            out = F.gelu(F.conv1d(Tensor(x), Tensor(w), stride=2))
            return F.softmax(out).data

        np.testing.assert_array_equal(run(), run())


class BackwardTest(SimpleTestCase):
    def test_linear_sum_gives_outer_product(self):
        x = np.array([[1.0, -2.0, 3.0], [0.5, 4.0, -1.0]])
        w = Tensor(np.ones((3, 2)), requires_grad=True)
        with ComputeGraph() as graph:
            loss = (Tensor(x) @ w).sum()
        backward(graph, loss)
        expected = np.outer(x.sum(0), np.ones(2))
        np.testing.assert_array_equal(w.grad, expected)

    def test_unreachable_parameter_has_zero_gradient(self):
        a = Tensor(np.ones(3), requires_grad=True)
        b = Tensor(np.ones(3), requires_grad=True)
        with ComputeGraph() as graph:
            loss = (a * a).sum()
        backward(graph, loss)
        np.testing.assert_array_equal(b.grad, np.zeros(3))

    def test_dft_magnitude_gradient_matches_its_output(self):
        x = Tensor(
            np.random.default_rng(6).standard_normal((2, 16)),
            requires_grad=True,
        )
        with ComputeGraph() as graph:
            out = F.rdft_magnitude(x, np.ones(9), np.zeros(9))
            loss = out.sum()
        backward(graph, loss)
        cos, sin = dft_tables(16, 'float64')
        magnitude = out.data
        expected = (x.data @ cos / magnitude) @ cos.T + (
            x.data @ sin / magnitude
        ) @ sin.T
        np.testing.assert_allclose(x.grad, expected, rtol=1e-12)
        np.testing.assert_allclose(
            magnitude ** 2,
            (x.data @ cos) ** 2 + (x.data @ sin) ** 2,
            rtol=1e-12,
        )

    def test_dft_magnitude_silent_bins(self):
        x = Tensor(np.zeros((1, 16)), requires_grad=True)
        with ComputeGraph() as graph:
            out = F.rdft_magnitude(x, np.ones(9), np.zeros(9))
            loss = out.sum()
        backward(graph, loss)
        np.testing.assert_array_equal(out.data, np.zeros((1, 9)))
        np.testing.assert_array_equal(x.grad, np.zeros((1, 16)))

    def test_huber_minimum(self):
        r = Tensor(np.zeros(4), requires_grad=True)
        with ComputeGraph() as graph:
            loss = F.huber(r).mean()
        backward(graph, loss)
        np.testing.assert_array_equal(r.grad, np.zeros(4))

    def test_repeated_backward_accumulates(self):
        x = Tensor(np.array([1.0, 2.0]), requires_grad=True)
        with ComputeGraph() as graph:
            loss = (x * x).sum()
        backward(graph, loss)
        backward(graph, loss)
        np.testing.assert_array_equal(x.grad, [4.0, 8.0])
        x.zero_grad()
        np.testing.assert_array_equal(x.grad, [0.0, 0.0])

    def test_shared_subexpression(self):
        x = Tensor(np.array([3.0]), requires_grad=True)
        with ComputeGraph() as graph:
            y = x * x
            loss = (y + y * 2.0).sum()
        backward(graph, loss)
        np.testing.assert_allclose(x.grad, [18.0])

    def test_non_scalar_loss(self):
        x = Tensor(np.ones(3), requires_grad=True)
        with ComputeGraph() as graph:
            out = x * 2.0
        with self.assertRaises(ContractViolation):
            backward(graph, out)

    def test_nothing_recorded_outside_a_graph(self):
        x = Tensor(np.ones(3), requires_grad=True)
        out = x * 2.0
        self.assertIsNone(out.node)
        with ComputeGraph() as graph:
            x * 2.0
            Tensor(np.ones(3)) * 2.0
        self.assertEqual(len(graph), 1)

    def test_gradients_are_deterministic(self):
        rng = np.random.default_rng(11)
        data = rng.standard_normal((4, 6))

        def grads():
            w = Tensor(data.copy(), requires_grad=True)
            with ComputeGraph() as graph:
                loss = F.softmax(F.silu(w)).mean()
            backward(graph, loss)
            return w.grad

        np.testing.assert_array_equal(grads(), grads())


class GradcheckTest(SimpleTestCase):
    def test_quadratic(self):
        x = Tensor(np.random.default_rng(0).standard_normal(10), True)
        report = finite_diff_check(lambda: (x * x).sum() * 0.5, [x])
        self.assertTrue(report.passed)
        self.assertLess(report.max_rel_error, 1e-7)

    def test_wrong_gradient_is_reported(self):
        x = Tensor(np.array([1.0, 2.0]), requires_grad=True)

        def f():
            # the recorded graph computes sum(x), the evaluation sum(x²)
            out = x.sum()
            out.data = np.sum(x.data ** 2)
            return out

        report = finite_diff_check(f, [x])
        self.assertFalse(report.passed)

    def test_zero_spectral_bin_is_skipped(self):
        # even length, alternating signs: only the Nyquist bin is nonzero
        x = Tensor(np.tile([1.0, -1.0], 4), requires_grad=True)
        mask_re = Tensor(np.ones(5), requires_grad=True)
        mask_im = Tensor(np.zeros(5), requires_grad=True)
        report = finite_diff_check(
            lambda: F.rdft_magnitude(x, mask_re, mask_im).sum(),
            [x, mask_re, mask_im],
            names=['x', 'mask_re', 'mask_im'],
        )
        x_check = report.parameters[0]
        self.assertTrue(x_check.skipped)
        self.assertEqual(x_check.skipped[0][1], NON_DIFFERENTIABLE)
        self.assertTrue(report.passed, str(report))

    def test_non_finite_value_fails_coordinate(self):
        x = Tensor(np.array([0.0, 1.0]), requires_grad=True)

        def f():
            out = x.sum()
            if x.data[0] > 0:
                out.data = np.array(np.nan)
            return out

        report = finite_diff_check(f, [x], names=['x'])
        self.assertFalse(report.passed)
        self.assertEqual(report.parameters[0].failures[0][0], (0,))


class ModuleTest(SimpleTestCase):
    class Pair(Module):
        def __init__(self, init):
            super().__init__()
            self.weight = init.uniform((3, 2), fan_in=3)
            self.bias = init.zeros((2,))

    class Stack(Module):
        def __init__(self, init):
            super().__init__()
            self.scale = init.ones((1,))
            self.layers = [ModuleTest.Pair(init), ModuleTest.Pair(init)]

    def test_parameter_names_follow_registration(self):
        model = self.Stack(Initializer(np.random.default_rng(0)))
        self.assertEqual(
            [name for name, _ in model.named_parameters()],
            [
                'scale',
                'layers.0.weight',
                'layers.0.bias',
                'layers.1.weight',
                'layers.1.bias',
            ],
        )

    def test_state_dict_round_trip(self):
        first = self.Stack(Initializer(np.random.default_rng(0)))
        second = self.Stack(Initializer(np.random.default_rng(1)))
        second.load_state_dict(first.state_dict())
        for (_, a), (_, b) in zip(
            first.named_parameters(), second.named_parameters()
        ):
            np.testing.assert_array_equal(a.data, b.data)

    def test_load_state_dict_rejects_mismatch(self):
        model = self.Stack(Initializer(np.random.default_rng(0)))
        state = model.state_dict()
        del state['scale']
        with self.assertRaises(ContractViolation):
            model.load_state_dict(state)

    def test_same_seed_same_parameters(self):
        a = self.Stack(Initializer(np.random.default_rng(3))).state_dict()
        b = self.Stack(Initializer(np.random.default_rng(3))).state_dict()
        for name in a:
            np.testing.assert_array_equal(a[name], b[name])
