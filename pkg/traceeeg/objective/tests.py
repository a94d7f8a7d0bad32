# Copyright (C) <2026> Association Prologin <association@prologin.org>
# SPDX-License-Identifier: GPL-3.0+

import itertools

import numpy as np

from autodiff.gradcheck import finite_diff_check
from autodiff.nn import Initializer
from autodiff.tensor import Tensor
from backbone.routing import LayerRouting, RoutingRecord
from objective.heads import HorizonHeads
from objective.losses import (
    aux_loss,
    ar_loss,
    horizon_targets,
    huber,
    pretrain_loss,
    total_loss,
    valid_positions,
)
from tracelib import tests
from tracelib.exceptions import ParameterError, TrainingDataError
from training.diagnostics import randomize, reduced_config
from training.model import init_params


def routing_layer(selected, probs):
    selected = np.asarray(selected)
    groups, k = selected.shape
    gates = np.full((groups, k), 1.0 / k)
    dense = np.zeros_like(probs)
    np.put_along_axis(dense, selected, gates, axis=1)
    return LayerRouting(
        selected=selected,
        gates=gates,
        dense_gates=dense,
        probs=np.asarray(probs, dtype=float),
        context=np.zeros((groups, 1)),
        layout=(1, groups),
    )


def uniform_record(experts, topk):
    selected = np.arange(experts).reshape(-1, topk)
    probs = np.full((len(selected), experts), 1.0 / experts)
    return RoutingRecord([routing_layer(selected, probs)])


def collapsed_record(experts, topk, decisions=6):
    selected = np.tile(np.arange(topk), (decisions, 1))
    probs = np.zeros((decisions, experts))
    probs[:, :topk] = 1.0 / topk
    return RoutingRecord([routing_layer(selected, probs)])


class HuberTest(tests.TraceTestCase):
    def test_closed_forms(self):
        for r, expected in [(0.0, 0.0), (0.5, 0.125), (2.0, 1.5)]:
            with self.subTest(r=r):
                self.assertEqual(float(huber(np.array([r])).data), expected)
        self.assertEqual(float(huber(np.array([-2.0])).data), 1.5)

    def test_mean_over_elements(self):
        value = huber(np.array([[0.5, 2.0], [0.0, 0.0]])).data
        self.assertAlmostEqual(float(value), (0.125 + 1.5) / 4)

    def test_threshold(self):
        self.assertAlmostEqual(float(huber(np.array([2.0]), 0.5).data), 0.875)
        with self.assertRaises(ParameterError):
            huber(np.array([1.0]), 0.0)


class HorizonTargetTest(tests.TraceTestCase):
    def test_valid_positions(self):
        for steps, expected in [(5, [4, 3, 1]), (4, [3, 2, 0])]:
            self.assertEqual(
                [valid_positions(steps, h) for h in (1, 2, 4)], expected
            )

    def test_targets_follow_each_position(self):
        patches = np.random.default_rng(0).normal(size=(2, 3, 5, 4))
        targets = horizon_targets(patches, 2)
        self.assertEqual(targets.shape, (2, 3, 3, 2, 4))
        for j, k in itertools.product(range(3), range(2)):
            self.assertBitIdentical(
                targets[:, :, j, k], patches[:, :, j + 1 + k]
            )


def exact_predictions(patches, horizons):
    steps = patches.shape[2]
    predictions = {}
    for horizon in horizons:
        shape = patches.shape[:3] + (horizon, patches.shape[3])
        prediction = np.zeros(shape)
        valid = valid_positions(steps, horizon)
        prediction[:, :, :valid] = horizon_targets(patches, horizon)
        predictions[horizon] = Tensor(prediction)
    return predictions


class ARLossTest(tests.TraceTestCase):
    def setUp(self):
        self.patches = np.random.default_rng(1).normal(size=(2, 3, 5, 4))

    def test_exact_predictions(self):
        predictions = exact_predictions(self.patches, (1, 2, 4))
        loss, breakdown = ar_loss(predictions, self.patches, (1, 2, 4))
        self.assertEqual(float(loss.data), 0.0)
        self.assertEqual(breakdown, {1: 0.0, 2: 0.0, 4: 0.0})

    def test_invalid_positions_are_ignored(self):
        predictions = exact_predictions(self.patches, (1, 2))
        for prediction in predictions.values():
            prediction.data[:, :, -1] = 1e6
        loss, _ = ar_loss(predictions, self.patches, (1, 2))
        self.assertEqual(float(loss.data), 0.0)

    def test_empty_horizon_is_skipped(self):
        patches = self.patches[:, :, :4]
        predictions = {
            h: Tensor(np.zeros(patches.shape[:3] + (h, 4)))
            for h in (1, 2, 4)
        }
        loss, breakdown = ar_loss(predictions, patches, (1, 2, 4))
        self.assertEqual(sorted(breakdown), [1, 2])
        self.assertAlmostEqual(
            float(loss.data), (breakdown[1] + breakdown[2]) / 2
        )

    def test_window_too_short(self):
        patches = self.patches[:, :, :1]
        predictions = {1: Tensor(np.zeros(patches.shape[:3] + (1, 4)))}
        with self.assertRaises(TrainingDataError):
            ar_loss(predictions, patches, (1,))


class AuxLossTest(tests.TraceTestCase):
    def test_uniform_routing(self):
        for experts, topk in [(4, 2), (64, 8)]:
            with self.subTest(experts=experts, topk=topk):
                loss, f, p = aux_loss(uniform_record(experts, topk), experts)
                self.assertAlmostEqual(float(loss.data), topk, delta=1e-9)
                self.assertAlmostEqual(f.sum(), topk, delta=1e-9)
                self.assertAlmostEqual(p.sum(), 1.0, delta=1e-9)

    def test_collapsed_routing(self):
        for experts, topk in [(4, 2), (64, 8)]:
            with self.subTest(experts=experts, topk=topk):
                loss, _, _ = aux_loss(collapsed_record(experts, topk), experts)
                self.assertAlmostEqual(float(loss.data), experts, delta=1e-9)

    def test_single_expert(self):
        record = RoutingRecord([routing_layer([[0], [0]], np.ones((2, 1)))])
        loss, f, p = aux_loss(record, 1)
        self.assertEqual(float(loss.data), 1.0)
        self.assertEqual(f.tolist(), [1.0])
        self.assertEqual(p.tolist(), [1.0])

    def test_uniform_usage_is_the_minimum(self):
        experts, topk = 4, 2
        sets = list(itertools.combinations(range(experts), topk))
        for pair in itertools.product(sets, repeat=2):
            record = RoutingRecord(
                [routing_layer(pair, np.zeros((2, experts)))]
            )
            loss, f, _ = aux_loss(record, experts, domain='topk')
            value = float(loss.data)
            if np.allclose(f, topk / experts):
                self.assertAlmostEqual(value, topk, delta=1e-9)
            else:
                self.assertGreater(value, topk + 1e-9)

    def test_pooled_over_layers(self):
        record = uniform_record(4, 2)
        collapsed = collapsed_record(4, 2, decisions=2)
        doubled = RoutingRecord(record.layers + collapsed.layers)
        _, f, _ = aux_loss(doubled, 4)
        self.assertAllClose(f, [0.75, 0.75, 0.25, 0.25])

    def test_dense_record(self):
        self.assertEqual(aux_loss(RoutingRecord([]), 4), (None, None, None))


class TotalLossTest(tests.TraceTestCase):
    def test_weighted_sum(self):
        total = total_loss(Tensor(np.array(0.5)), Tensor(np.array(8.0)), 0.01)
        self.assertAlmostEqual(float(total.data), 0.58)

    def test_without_balancing(self):
        ar = Tensor(np.array(0.5))
        unweighted = total_loss(ar, Tensor(np.array(8.0)), 0)
        self.assertEqual(float(unweighted.data), 0.5)
        self.assertIs(total_loss(ar, None, 0.01), ar)
        with self.assertRaises(ParameterError):
            total_loss(ar, None, -1.0)


class HorizonHeadsTest(tests.TraceTestCase):
    def heads(self, d=200, patch_len=200, horizons=(1, 2, 4)):
        init = Initializer(np.random.default_rng(0), np.float64)
        return HorizonHeads(d, patch_len, horizons, init)

    def test_widths(self):
        heads = self.heads()
        self.assertEqual(
            [head.weight.shape for head in heads.heads],
            [(200, 200), (200, 400), (200, 800)],
        )

    def test_zero_hidden_state(self):
        predictions = self.heads()(Tensor(np.zeros((1, 2, 3, 200))))
        for horizon, prediction in predictions.items():
            self.assertEqual(prediction.shape, (1, 2, 3, horizon, 200))
            self.assertAllClose(prediction.data, np.zeros(prediction.shape))

    def test_positions_are_independent(self):
        heads = randomize(
            self.heads(d=8, patch_len=4), np.random.default_rng(1)
        )
        h = np.random.default_rng(2).normal(size=(1, 3, 4, 8))
        moved = h.copy()
        moved[0, 1, 2] += 1.0
        before, after = heads(Tensor(h)), heads(Tensor(moved))
        for horizon in (1, 2, 4):
            changed = np.abs(after[horizon].data - before[horizon].data)
            changed = changed.sum(axis=(0, 3, 4)) > 0
            self.assertEqual(np.argwhere(changed).tolist(), [[1, 2]])

    def test_unknown_horizon(self):
        with self.assertRaises(KeyError):
            self.heads().head(3)


class PretrainLossTest(tests.TraceTestCase):
    def setUp(self):
        self.config = reduced_config()
        self.model = randomize(
            init_params(self.config, seed=0, dtype=np.float64),
            np.random.default_rng(3),
            scale=0.3,
        )
        self.patches = np.random.default_rng(4).normal(size=(2, 3, 5, 20))

    def loss(self):
        _, predictions, record = self.model(self.patches)
        return pretrain_loss(
            predictions,
            self.patches,
            record,
            self.config.loss,
            self.config.routing.experts,
        )

    def test_report(self):
        total, report = self.loss()
        self.assertEqual(float(total.data), report.total)
        self.assertEqual(report.total, report.ar + 0.01 * report.aux)
        self.assertAlmostEqual(report.f.sum(), 2.0, delta=1e-9)
        self.assertAlmostEqual(report.p.sum(), 1.0, delta=1e-9)
        self.assertEqual(sorted(report.horizon_losses), [1, 2])

        row = report.as_row(7, 1e-3)
        self.assertEqual(row[:2], ['7', '0.001'])
        self.assertEqual(len(row), 2 + 2 + 2)

    def test_finite_differences(self):
        names, params = zip(*self.model.named_parameters())
        report = finite_diff_check(
            lambda: self.loss()[0],
            list(params),
            names=list(names),
            max_coords=4,
            rng=np.random.default_rng(5),
        )
        self.assertTrue(report.passed, str(report))
