# Copyright (C) <2026> Association Prologin <association@prologin.org>
# SPDX-License-Identifier: GPL-3.0+

from io import StringIO

import numpy as np
from django.core.management import call_command
from django.core.management.base import CommandError

from analysis.export import export_rows_as_csv, read_usage_csv
from analysis.stats import (
    collapse_indicators,
    jaccard,
    jaccard_overlap,
    overlap_counts,
    routing_stats,
    top_set,
)
from backbone.routing import LayerRouting, RoutingRecord
from tracelib import tests
from tracelib.exceptions import ParameterError
from training.checkpoint import save_checkpoint
from training.diagnostics import reduced_config
from training.engine import TrainState

DEFAULT_TOP4 = [{6, 3, 5, 15}, {13, 16, 1, 8}, {2, 13, 11, 8}, {13, 6, 5, 3}]
NO_AUX_TOP4 = [{12, 9, 6, 2}, {4, 9, 8, 5}, {9, 8, 12, 10}, {9, 8, 7, 13}]


def layer(selected, experts, gates=None):
    """A routing layer over (batch=1, steps) groups with given selections."""
    selected = np.asarray(selected)
    groups, k = selected.shape
    if gates is None:
        gates = np.full((groups, k), 1.0 / k)
    dense = np.zeros((groups, experts))
    np.put_along_axis(dense, selected, gates, axis=1)
    probs = np.full((groups, experts), 1.0 / experts)
    return LayerRouting(
        selected=selected,
        gates=gates,
        dense_gates=dense,
        probs=probs,
        context=np.zeros((groups, 2)),
        layout=(1, groups),
    )


class RoutingStatsTest(tests.TraceTestCase):
    def test_degenerate_stream(self):
        record = RoutingRecord([layer([[1, 2]] * 6, 4)] * 2)
        summary = routing_stats([record])
        self.assertAllClose(summary.frequency, [0, 1, 1, 0])
        self.assertAllClose(summary.mean_gate, [0, 0.5, 0.5, 0])
        self.assertEqual(summary.decisions, 12)
        self.assertEqual(dict(summary.top_sets), {'all': (1, 2)})

    def test_uniform_stream(self):
        steps = 10
        selected = [[0, 1], [2, 3]] * (steps // 2)
        summary = routing_stats([RoutingRecord([layer(selected, 4)])])
        self.assertAllClose(summary.frequency, [0.5] * 4, atol=1 / steps)
        self.assertAlmostEqual(summary.frequency.sum(), 2.0, delta=1e-9)
        self.assertAlmostEqual(summary.mean_gate.sum(), 1.0, delta=1e-9)
        indicators = summary.collapse
        self.assertAlmostEqual(indicators.entropy, 1.0)
        self.assertEqual(indicators.unused, 0)

    def test_tagged_records(self):
        records = [
            ('sleep', RoutingRecord([layer([[0, 3], [3, 0]], 4)])),
            ('motor', RoutingRecord([layer([[1, 2]], 4)])),
            ('sleep', RoutingRecord([layer([[3, 1]], 4)])),
        ]
        summary = routing_stats(records)
        self.assertEqual(list(summary.top_sets), ['sleep', 'motor'])
        self.assertEqual(summary.top_sets['sleep'], (3, 0))
        self.assertEqual(summary.top_sets['motor'], (1, 2))
        self.assertEqual(summary.decisions, 4)

    def test_ranking_by_gate_or_frequency(self):
        gates = np.array([[0.9, 0.1], [0.9, 0.1], [0.2, 0.8]])
        record = RoutingRecord([layer([[0, 1], [0, 1], [2, 1]], 3, gates)])
        self.assertEqual(routing_stats([record]).top_sets['all'], (0, 1))
        self.assertEqual(
            routing_stats([record], ranking='frequency').top_sets['all'],
            (1, 0),
        )

    def test_empty_or_dense_stream(self):
        with self.assertRaises(ParameterError):
            routing_stats([])
        with self.assertRaises(ParameterError):
            routing_stats([RoutingRecord([])])

    def test_mixed_expert_counts(self):
        records = [
            RoutingRecord([layer([[0, 1]], 4)]),
            RoutingRecord([layer([[0, 1]], 8)]),
        ]
        with self.assertRaises(ParameterError):
            routing_stats(records)

    def test_top_set_ties(self):
        self.assertEqual(top_set(np.array([1.0, 2.0, 2.0, 1.0]), 3), (1, 2, 0))


class CollapseIndicatorsTest(tests.TraceTestCase):
    def test_even_usage(self):
        indicators = collapse_indicators(np.full(8, 0.25), topk=2)
        self.assertAlmostEqual(indicators.max_frequency, 0.25)
        self.assertAlmostEqual(indicators.entropy, 1.0)
        self.assertEqual(indicators.unused, 0)

    def test_collapsed_usage(self):
        indicators = collapse_indicators([1.0, 1.0, 0.0, 0.0], topk=2)
        self.assertEqual(indicators.max_frequency, 1.0)
        self.assertAlmostEqual(indicators.entropy, 0.5)
        self.assertEqual(indicators.unused, 2)


class OverlapTest(tests.TraceTestCase):
    def test_trivial_sets(self):
        self.assertEqual(jaccard({1, 2}, {2, 1}), 1.0)
        self.assertEqual(jaccard({1, 2}, {3, 4}), 0.0)
        with self.assertRaises(ParameterError):
            jaccard(set(), {1})
        with self.assertRaises(ParameterError):
            jaccard_overlap([{1, 2}])

    def test_default_top_sets(self):
        matrix, mean = jaccard_overlap(DEFAULT_TOP4)
        self.assertAlmostEqual(mean, 0.203, delta=1e-3)
        upper = matrix[np.triu_indices(4, k=1)]
        self.assertAllClose(
            sorted(upper), sorted([0, 0, 0.6, 1 / 3, 1 / 7, 1 / 7])
        )
        self.assertAllClose(matrix, matrix.T, rtol=0)
        self.assertAllClose(np.diag(matrix), np.ones(4), rtol=0)
        self.assertTrue(((matrix >= 0) & (matrix <= 1)).all())

        counts = overlap_counts(DEFAULT_TOP4)
        self.assertEqual(counts.universal, set())
        self.assertEqual(counts.shared, {13})
        self.assertEqual(len(counts.single), 5)

    def test_top_sets_without_balancing(self):
        counts = overlap_counts(NO_AUX_TOP4)
        self.assertEqual(counts.universal, {9})
        self.assertEqual(counts.shared, {9, 8})


class ExportTest(tests.WithTempDirMixin, tests.TraceTestCase):
    def test_usage_round_trip(self):
        rng = np.random.default_rng(0)
        selected = np.argsort(rng.random((40, 5)), axis=1)[:, :2]
        gates = rng.dirichlet([1.0, 1.0], size=40)
        records = [
            ('a', RoutingRecord([layer(selected[:20], 5, gates[:20])])),
            ('b', RoutingRecord([layer(selected[20:], 5, gates[20:])])),
        ]
        summary = routing_stats(records)
        path = self.path('usage.csv')
        export_rows_as_csv(summary.export_rows(), path)

        frequency, mean_gate = read_usage_csv(path)
        self.assertBitIdentical(frequency, summary.frequency)
        self.assertBitIdentical(mean_gate, summary.mean_gate)
        with open(path, encoding='utf-8') as f:
            header = f.readline().strip()
        self.assertEqual(header, 'expert,frequency,mean_gate,top:a,top:b')

    def test_unwritable_path(self):
        summary = routing_stats([RoutingRecord([layer([[0, 1]], 2)])])
        path = self.path('missing', 'usage.csv')
        with self.assertRaises(OSError) as cm:
            export_rows_as_csv(summary.export_rows(), path)
        self.assertEqual(cm.exception.filename, path)


class InspectRoutingCommandTest(
    tests.WithSmallCorpusMixin, tests.TraceTestCase
):
    def test_summary_csv(self):
        config = reduced_config(extra=['data.window_s = 1.0'])
        checkpoint = self.path('model.trck')
        save_checkpoint(TrainState.create(config).checkpoint(), checkpoint)
        out = StringIO()
        call_command(
            'inspect_routing',
            checkpoint=checkpoint,
            manifest=self.path('corpus', 'manifest.tsv'),
            out=self.path('usage.csv'),
            stdout=out,
        )
        frequency, mean_gate = read_usage_csv(self.path('usage.csv'))
        self.assertEqual(len(frequency), 4)
        self.assertAlmostEqual(frequency.sum(), 2.0, delta=1e-9)
        self.assertAlmostEqual(mean_gate.sum(), 1.0, delta=1e-6)
        self.assertIn('top-2 by gate [synth]', out.getvalue())

    def test_missing_checkpoint(self):
        with self.assertRaises(CommandError):
            call_command(
                'inspect_routing',
                checkpoint=self.path('absent.trck'),
                manifest=self.path('corpus', 'manifest.tsv'),
                out=self.path('usage.csv'),
                stdout=StringIO(),
            )
