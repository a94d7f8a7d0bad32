# Copyright (C) <2026> Association Prologin <association@prologin.org>
# SPDX-License-Identifier: GPL-3.0+

import numpy as np

from autodiff import functional as F
from autodiff.gradcheck import finite_diff_check
from autodiff.nn import Initializer
from autodiff.tensor import Tensor
from backbone.attention import CSTA, TemporalFormer, attention_flops
from backbone.blocks import Backbone, TRMoEBlock
from backbone.config import RoutingMode
from backbone.routing import CTRFFN, Router
from tracelib import tests
from training.diagnostics import randomize, reduced_config


def init(seed=0):
    return Initializer(np.random.default_rng(seed), np.float64)


def hidden(*shape, seed=1):
    return np.random.default_rng(seed).normal(size=shape)


def perturbed_after(h, step, seed=2):
    """Copy of `h` with every step after `step` redrawn."""
    out = h.copy()
    tail = out[:, :, step + 1 :]
    out[:, :, step + 1 :] = np.random.default_rng(seed).normal(
        size=tail.shape
    )
    return out


class CSTATest(tests.TraceTestCase):
    def setUp(self):
        self.csta = randomize(
            CSTA(8, 2, 10000.0, init()), np.random.default_rng(3)
        )

    def test_fusion_width(self):
        csta = CSTA(8, 2, 10000.0, init())
        self.assertEqual(csta.out_proj.shape, (16, 8))

    def test_causality(self):
        h = hidden(2, 3, 6, 8)
        out = self.csta(Tensor(h)).data
        again = self.csta(Tensor(perturbed_after(h, 2))).data
        self.assertBitIdentical(again[:, :, :3], out[:, :, :3])
        self.assertFalse(np.array_equal(again[:, :, 3:], out[:, :, 3:]))

    def test_channel_permutation_equivariance(self):
        h = hidden(1, 5, 4, 8)
        order = [2, 4, 0, 1, 3]
        out = self.csta(Tensor(h)).data
        permuted = self.csta(Tensor(h[:, order])).data
        self.assertAllClose(permuted, out[:, order], rtol=1e-10)

    def test_single_channel_spatial_branch(self):
        h = Tensor(hidden(2, 1, 4, 8))
        spatial = self.csta.spatial(h).data
        self.assertAllClose(
            spatial, (h @ self.csta.spatial_v).data, rtol=1e-12
        )

    def test_attention_cost(self):
        base = attention_flops(19, 30, 200)
        doubled = attention_flops(19, 60, 200)
        self.assertEqual(doubled['temporal'], 4 * base['temporal'])
        self.assertEqual(doubled['spatial'], 2 * base['spatial'])


class TemporalFormerTest(tests.TraceTestCase):
    def setUp(self):
        self.former = randomize(
            TemporalFormer(8, 2, 2, init()), np.random.default_rng(4)
        )

    def test_shape(self):
        context = self.former(Tensor(hidden(2, 3, 5, 8)))
        self.assertEqual(context.shape, (2, 5, 8))

    def test_causality(self):
        h = hidden(2, 3, 6, 8)
        context = self.former(Tensor(h)).data
        again = self.former(Tensor(perturbed_after(h, 3))).data
        self.assertBitIdentical(again[:, :4], context[:, :4])
        self.assertFalse(np.array_equal(again[:, 4:], context[:, 4:]))

    def test_first_step_reads_first_tokens(self):
        h = hidden(1, 3, 5, 8)
        alone = self.former(Tensor(h[:, :, :1])).data
        self.assertEqual(alone.shape, (1, 1, 8))
        self.assertAllClose(
            alone, self.former(Tensor(h)).data[:, :1], rtol=1e-10
        )

    def test_duplicated_channels(self):
        h = hidden(1, 3, 4, 8)
        doubled = np.concatenate([h, h], axis=1)
        self.assertAllClose(
            self.former(Tensor(doubled)).data,
            self.former(Tensor(h)).data,
            rtol=1e-10,
        )


def expected_routing(context, weight, k):
    """Top-K experts, their gates and the full softmax for one d-vector."""
    logits = np.asarray(context) @ np.asarray(weight)
    selected = np.argsort(-logits, kind='stable')[:k]
    values = logits[selected]
    gates = np.exp(values - values.max())
    probs = np.exp(logits - logits.max())
    return selected, gates / gates.sum(), probs / probs.sum()


class RouterTest(tests.TraceTestCase):
    def test_equal_logits(self):
        router = Router(4, 64, 8, init())
        router.weight.data[...] = 0.0
        gates, _, probs, selected = router(Tensor(hidden(3, 4)))
        self.assertEqual(selected.tolist(), [list(range(8))] * 3)
        self.assertAllClose(gates.data, np.full((3, 8), 1 / 8))
        self.assertAllClose(probs.data, np.full((3, 64), 1 / 64))

    def test_single_expert(self):
        router = Router(1, 2, 1, init())
        router.weight.data[...] = [[2.0, 1.0]]
        gates, dense, _, selected = router(Tensor(np.ones((1, 1))))
        self.assertEqual(selected.tolist(), [[0]])
        self.assertEqual(gates.data.tolist(), [[1.0]])
        self.assertEqual(dense.data.tolist(), [[1.0, 0.0]])

    def test_router_gates(self):
        router = Router(8, 6, 3, init())
        context = Tensor(hidden(10, 8))
        gates, dense, probs, selected = router(context)
        self.assertAllClose(dense.data.sum(axis=1), np.ones(10), atol=1e-9)
        self.assertEqual(
            (dense.data == 0).sum(axis=1).tolist(), [3] * 10
        )
        self.assertAllClose(probs.data.sum(axis=1), np.ones(10), atol=1e-9)
        for row in range(10):
            expected, expected_gates, expected_probs = expected_routing(
                context.data[row], router.weight.data, 3
            )
            self.assertEqual(selected[row].tolist(), expected.tolist())
            self.assertAllClose(gates.data[row], expected_gates)
            self.assertAllClose(probs.data[row], expected_probs)


class CTRFFNTest(tests.TraceTestCase):
    def ffn(self, mode, *extra, seed=5):
        config = reduced_config(mode=mode, extra=extra)
        return CTRFFN(config.model, config.routing, init(seed))

    def test_zero_output_at_init(self):
        u = Tensor(hidden(2, 3, 4, 8))
        context = Tensor(hidden(2, 4, 8, seed=6))
        for mode in RoutingMode:
            with self.subTest(mode=mode):
                out, _ = self.ffn(mode)(u, context)
                self.assertAllClose(out.data, np.zeros(u.shape), rtol=0)

    def test_routing_layouts(self):
        u = Tensor(hidden(2, 3, 4, 8))
        context = Tensor(hidden(2, 4, 8, seed=6))
        layouts = {
            RoutingMode.temporal: (2, 4),
            RoutingMode.mean: (2, 4),
            RoutingMode.token: (2, 4, 3),
        }
        for mode, layout in layouts.items():
            with self.subTest(mode=mode):
                _, routing = self.ffn(mode)(u, context)
                self.assertEqual(routing.layout, layout)
                groups = int(np.prod(layout))
                self.assertEqual(routing.selected.shape, (groups, 2))
                self.assertAllClose(
                    routing.gates.sum(axis=1), np.ones(groups), atol=1e-9
                )
        _, routing = self.ffn(RoutingMode.dense)(u)
        self.assertIsNone(routing)

    def test_one_decision_per_step_for_every_channel(self):
        ffn = randomize(self.ffn('temporal'), np.random.default_rng(7))
        u = Tensor(hidden(1, 5, 3, 8))
        context = Tensor(hidden(1, 3, 8, seed=8))
        out, routing = ffn(u, context)
        self.assertEqual(routing.grid(routing.selected).shape, (1, 3, 2))

        # every channel of a step goes through the step's experts
        x = u.data[0].transpose(1, 0, 2)
        for step in range(3):
            expected = ffn.shared(Tensor(x[step])).data
            for e, gate in zip(
                routing.selected[step], routing.gates[step]
            ):
                expected = (
                    expected + gate * ffn.experts[e](Tensor(x[step])).data
                )
            self.assertAllClose(out.data[0, :, step], expected, rtol=1e-10)

    def test_single_expert(self):
        ffn = randomize(
            self.ffn('temporal', 'routing.experts = 1', 'routing.topk = 1'),
            np.random.default_rng(9),
        )
        u = Tensor(hidden(2, 3, 4, 8))
        out, routing = ffn(u, Tensor(hidden(2, 4, 8, seed=10)))
        self.assertTrue((routing.gates == 1.0).all())
        expected = ffn.experts[0](u).data + ffn.shared(u).data
        self.assertAllClose(out.data, expected, rtol=1e-10)


class BlockTest(tests.TraceTestCase):
    def block(self, mode, seed=11):
        config = reduced_config(mode=mode)
        return TRMoEBlock(config.model, config.routing, init(seed))

    def test_identity_at_init(self):
        h = hidden(2, 3, 4, 8)
        for mode in RoutingMode:
            with self.subTest(mode=mode):
                out, _ = self.block(mode)(Tensor(h))
                self.assertAllClose(out.data, h, rtol=0)

    def test_causality(self):
        h = hidden(1, 3, 6, 8)
        for mode in RoutingMode:
            with self.subTest(mode=mode):
                block = randomize(
                    self.block(mode), np.random.default_rng(12)
                )
                out, routing = block(Tensor(h))
                again, routing_again = block(Tensor(perturbed_after(h, 2)))
                self.assertBitIdentical(
                    again.data[:, :, :3], out.data[:, :, :3]
                )
                if routing is None:
                    continue
                for values in ('selected', 'gates'):
                    early = routing.grid(getattr(routing, values))
                    later = routing_again.grid(getattr(routing_again, values))
                    self.assertBitIdentical(later[:, :3], early[:, :3])

    def ffn_input(self, block, h):
        u = block.attention(F.rms_norm(h, block.attn_norm, block.eps)) + h
        return u, F.rms_norm(u, block.ffn_norm, block.eps)

    def test_one_decision_per_step_for_any_montage(self):
        block = randomize(self.block('temporal'), np.random.default_rng(15))
        for channels in (1, 6, 19, 64):
            with self.subTest(channels=channels):
                h = Tensor(hidden(1, channels, 5, 8, seed=channels))
                out, routing = block(h)
                self.assertEqual(routing.selected.shape, (5, 2))
                self.assertEqual(routing.gates.shape, (5, 2))

                context = block.temporal_former(h).data[0]
                u, x = self.ffn_input(block, h)
                mixed = (out - u).data[0]
                for step in range(5):
                    selected, gates, _ = expected_routing(
                        context[step], block.ffn.router.weight.data, 2
                    )
                    self.assertEqual(
                        routing.selected[step].tolist(), selected.tolist()
                    )
                    self.assertAllClose(
                        routing.gates[step], gates, rtol=1e-10
                    )
                    # all channels of the step through the same experts
                    tokens = Tensor(x.data[0, :, step])
                    expected = block.ffn.shared(tokens).data
                    for e, gate in zip(selected, gates):
                        expected = (
                            expected
                            + gate * block.ffn.experts[e](tokens).data
                        )
                    self.assertAllClose(
                        mixed[:, step], expected, rtol=1e-9, atol=1e-12
                    )

    def test_shared_expert_at_every_step(self):
        block = randomize(self.block('temporal'), np.random.default_rng(16))
        for expert in block.ffn.experts:
            expert.w_out.data[...] = 0.0
        for channels in (1, 6, 19, 64):
            with self.subTest(channels=channels):
                h = Tensor(hidden(1, channels, 5, 8, seed=channels))
                out, _ = block(h)
                u, x = self.ffn_input(block, h)
                mixed = (out - u).data
                shared = block.ffn.shared(x).data
                self.assertAllClose(mixed, shared, rtol=1e-9, atol=1e-12)
                self.assertTrue(
                    (np.abs(shared).sum(axis=(0, 1, 3)) > 0).all()
                )


class BackboneTest(tests.TraceTestCase):
    def backbone(self, mode='temporal', layers=2):
        config = reduced_config(
            mode=mode, extra=['model.layers = {}'.format(layers)]
        )
        return Backbone(config.model, config.routing, init())

    def test_shapes(self):
        backbone = self.backbone()
        for channels in (1, 6, 16):
            with self.subTest(channels=channels):
                out, record = backbone(hidden(1, channels, 5, 8))
                self.assertEqual(out.shape, (1, channels, 5, 8))
                self.assertEqual(len(record), 2)
                self.assertEqual(record.selected().shape, (2, 5, 2))
                self.assertEqual(record.decisions, 10)

    def test_dense_record_is_empty(self):
        _, record = self.backbone('dense')(hidden(1, 2, 3, 8))
        self.assertEqual(len(record), 0)

    def test_causality(self):
        rng = np.random.default_rng(13)
        backbone = randomize(self.backbone(), rng)
        h = hidden(1, 4, 7, 8)
        step = int(rng.integers(0, 6))
        out, _ = backbone(h)
        again, _ = backbone(perturbed_after(h, step))
        self.assertBitIdentical(
            again.data[:, :, : step + 1], out.data[:, :, : step + 1]
        )

    def test_finite_differences(self):
        for mode in RoutingMode:
            with self.subTest(mode=mode):
                rng = np.random.default_rng(14)
                backbone = randomize(
                    self.backbone(mode, layers=1), rng, scale=0.3
                )
                h = Tensor(
                    rng.normal(size=(1, 2, 3, 8)), requires_grad=True
                )
                weights = Tensor(rng.normal(size=(1, 2, 3, 8)))
                names, params = zip(*backbone.named_parameters())
                report = finite_diff_check(
                    lambda: (backbone(h)[0] * weights).sum(),
                    list(params) + [h],
                    names=list(names) + ['h'],
                    max_coords=6,
                    rng=rng,
                )
                self.assertTrue(report.passed, str(report))

    def test_rms_norm_scales(self):
        h = Tensor(hidden(1, 2, 3, 8))
        normed = F.rms_norm(h, Tensor(np.ones(8)), 1e-6).data
        self.assertAllClose(
            np.sqrt((normed ** 2).mean(axis=-1)), np.ones((1, 2, 3)),
            rtol=1e-6,
        )
