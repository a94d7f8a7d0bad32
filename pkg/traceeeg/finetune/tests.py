# Copyright (C) <2026> Association Prologin <association@prologin.org>
# SPDX-License-Identifier: GPL-3.0+

import itertools

import numpy as np
from django.test import tag
from scipy.signal import welch
from sklearn.linear_model import LogisticRegression
from sklearn import metrics as oracle

from autodiff.nn import Initializer
from autodiff.tensor import Tensor
from finetune.engine import build_classifier, finetune_run
from finetune.head import ClassifierHead, pool_and_classify
from finetune.metrics import auroc, compute_metrics
from recordings.manifest import CorpusManifest, ManifestEntry
from recordings.synth import SynthSpec, synth_corpus
from recordings.windows import load_windows
from tracelib import tests
from tracelib.exceptions import TrainingDataError
from tracelib.utils import save_random_state
from training.checkpoint import load_checkpoint
from training.config import RunConfig
from training.diagnostics import randomize, reduced_config
from training.engine import pretrain_run


def pairwise_auroc(labels, scores):
    """Fraction of (positive, negative) pairs ranked correctly, ties 1/2."""
    positives = scores[labels]
    negatives = scores[~labels]
    wins = 0.0
    for p, n in itertools.product(positives, negatives):
        wins += 1.0 if p > n else 0.5 if p == n else 0.0
    return wins / (len(positives) * len(negatives))


class MetricsTest(tests.TraceTestCase):
    def test_perfect_predictions(self):
        labels = [0, 1, 2, 2, 1, 0]
        report = compute_metrics(labels, labels)
        self.assertEqual(report.balanced_accuracy, 1.0)
        self.assertEqual(report.kappa, 1.0)
        self.assertEqual(report.weighted_f1, 1.0)

    def test_binary_confusion(self):
        # TP=3, FN=1, TN=2, FP=2
        labels = [1, 1, 1, 1, 0, 0, 0, 0]
        predictions = [1, 1, 1, 0, 0, 0, 1, 1]
        report = compute_metrics(labels, predictions)
        self.assertEqual(report.confusion.tolist(), [[2, 2], [1, 3]])
        self.assertAllClose(report.recall, [0.5, 0.75])
        self.assertAlmostEqual(report.balanced_accuracy, 0.625)
        self.assertAlmostEqual(report.kappa, 0.25)
        self.assertEqual(report.support.tolist(), [4, 4])
        self.assertEqual(report.confusion.sum(axis=1).tolist(), [4, 4])

    def test_class_absent_from_labels(self):
        with self.assertWarns(RuntimeWarning):
            report = compute_metrics([0, 0, 1, 1], [0, 2, 1, 1])
        self.assertEqual(report.classes, [0, 1, 2])
        self.assertAlmostEqual(report.balanced_accuracy, 0.75)

    def test_relabeling_invariance(self):
        rng = np.random.default_rng(4)
        labels = rng.integers(0, 3, size=60)
        predictions = rng.integers(0, 3, size=60)
        relabel = np.array([2, 0, 1])
        first = compute_metrics(labels, predictions)
        second = compute_metrics(relabel[labels], relabel[predictions])
        self.assertAlmostEqual(
            first.balanced_accuracy, second.balanced_accuracy
        )
        self.assertAlmostEqual(first.kappa, second.kappa)

    def test_kappa_of_independent_predictions(self):
        rng = np.random.default_rng(5)
        labels = rng.integers(0, 3, size=200)
        kappas = [
            compute_metrics(labels, rng.permutation(labels)).kappa
            for _ in range(1000)
        ]
        self.assertLess(abs(np.mean(kappas)), 0.02)

    def test_ranking_extremes(self):
        labels = np.array([0, 0, 1, 1, 0, 1])
        scores = np.array([0.1, 0.2, 0.8, 0.9, 0.3, 0.7])
        predictions = (scores > 0.5).astype(int)
        report = compute_metrics(labels, predictions, scores=scores)
        self.assertEqual(report.auroc, 1.0)
        self.assertEqual(report.auc_pr, 1.0)
        self.assertEqual(auroc(labels == 1, -scores), 0.0)

    def test_auroc_matches_pairwise_oracle(self):
        rng = np.random.default_rng(6)
        for trial in range(50):
            with self.subTest(trial=trial):
                n = int(rng.integers(2, 201))
                labels = rng.random(n) < 0.4
                labels[:2] = [True, False]
                # rounding creates ties
                scores = np.round(rng.normal(size=n), 1)
                self.assertAlmostEqual(
                    auroc(labels, scores),
                    pairwise_auroc(labels, scores),
                    delta=1e-9,
                )
                self.assertAlmostEqual(
                    auroc(labels, np.exp(3 * scores)),
                    auroc(labels, scores),
                    delta=1e-12,
                )

    def test_agrees_with_sklearn(self):
        rng = np.random.default_rng(7)
        for trial in range(20):
            with self.subTest(trial=trial):
                labels = np.r_[[0, 1, 2], rng.integers(0, 3, size=97)]
                noisy = rng.random(100) < 0.4
                predictions = np.where(
                    noisy, rng.integers(0, 3, size=100), labels
                )
                report = compute_metrics(labels, predictions)
                self.assertAlmostEqual(
                    report.balanced_accuracy,
                    oracle.balanced_accuracy_score(labels, predictions),
                )
                self.assertAlmostEqual(
                    report.kappa,
                    oracle.cohen_kappa_score(labels, predictions),
                )
                self.assertAlmostEqual(
                    report.weighted_f1,
                    oracle.f1_score(
                        labels, predictions, average='weighted',
                        zero_division=0,
                    ),
                )

                binary = labels == 1
                scores = np.round(rng.random(100) + 0.3 * binary, 2)
                ranked = compute_metrics(
                    binary.astype(int),
                    (scores > 0.6).astype(int),
                    scores=scores,
                )
                self.assertAlmostEqual(
                    ranked.auroc, oracle.roc_auc_score(binary, scores)
                )
                self.assertAlmostEqual(
                    ranked.auc_pr,
                    oracle.average_precision_score(binary, scores),
                )

    def test_report_text(self):
        report = compute_metrics([1, 1, 0, 0], [1, 0, 0, 0])
        text = str(report)
        self.assertIn('balanced_accuracy: 0.750000\n', text)
        self.assertIn('confusion (rows: labels, columns: predictions)', text)
        self.assertTrue(text.endswith('1\t1\t1\n'))


class ClassifierHeadTest(tests.TraceTestCase):
    def head(self, d=8, classes=3, dropout=0.1):
        init = Initializer(np.random.default_rng(0), np.float64)
        return ClassifierHead(d, classes, dropout, init)

    def test_widths(self):
        head = self.head(d=8, classes=3)
        self.assertEqual(head.fc1.shape, (8, 8))
        self.assertEqual(head.fc2.shape, (8, 4))
        self.assertEqual(head.fc3.shape, (4, 3))

    def test_zero_states_give_uniform_logits(self):
        head = self.head().eval()
        logits = pool_and_classify(Tensor(np.zeros((2, 3, 4, 8))), head)
        self.assertEqual(logits.shape, (2, 3))
        self.assertAllClose(logits.data, np.zeros((2, 3)), rtol=0)

    def test_dropout_only_in_training(self):
        head = self.head(dropout=0.5)
        x = Tensor(np.random.default_rng(1).normal(size=(4, 8)))
        with save_random_state(3):
            first = head(x).data
        with save_random_state(3):
            again = head(x).data
        with save_random_state(4):
            other = head(x).data
        self.assertBitIdentical(first, again)
        self.assertFalse(np.array_equal(first, other))
        head.eval()
        self.assertBitIdentical(head(x).data, head(x).data)

    def test_channel_permutation_invariance(self):
        config = reduced_config(mode='dense')
        classifier = build_classifier(config, 3, dtype=np.float64)
        randomize(classifier, np.random.default_rng(2))
        for conv in classifier.encoder.chpe:
            conv.weight.data[:] = 0.0
            conv.bias.data[:] = 0.0
        classifier.eval()
        grid = np.random.default_rng(3).normal(size=(2, 5, 4, 20))
        permuted = grid[:, [3, 0, 4, 1, 2]]
        self.assertAllClose(
            classifier(permuted).data, classifier(grid).data, rtol=1e-10
        )


class FinetuneRunTest(tests.WithSmallCorpusMixin, tests.TraceTestCase):
    corpus_spec = SynthSpec(
        seed=3,
        channel_count=4,
        duration_s=2.0,
        class_bands=('delta', 'alpha'),
    )
    corpus_count = 12
    corpus_splits = (('train', 6), ('val', 2), ('test', 4))

    def config(self, *extra):
        return reduced_config(
            extra=[
                'data.window_s = 1.0',
                'finetune.epochs = 2',
                'finetune.batch_size = 4',
            ]
            + list(extra)
        )

    def test_run(self):
        result = finetune_run(None, self.manifest, self.config())
        self.assertIn(result.best_epoch, (1, 2))
        self.assertEqual(len(result.validation), 2)
        self.assertEqual(result.report.classes, [0, 1])
        self.assertEqual(result.report.support.tolist(), [4, 4])
        self.assertIsNotNone(result.report.auroc)
        self.assertGreaterEqual(result.report.balanced_accuracy, 0.0)
        self.assertLessEqual(result.report.balanced_accuracy, 1.0)

    def test_deterministic(self):
        first = finetune_run(None, self.manifest, self.config())
        second = finetune_run(None, self.manifest, self.config())
        self.assertEqual(first.validation, second.validation)
        self.assertEqual(
            first.report.confusion.tolist(), second.report.confusion.tolist()
        )

    def test_frozen_backbone_only_trains_head(self):
        config = self.config('finetune.freeze_backbone = true')
        before = build_classifier(config, 2).state_dict()
        after = finetune_run(None, self.manifest, config).classifier
        changed = {
            name
            for name, p in after.named_parameters()
            if not np.array_equal(p.data, before[name])
        }
        self.assertTrue(changed)
        self.assertTrue(all(name.startswith('head.') for name in changed))

    def test_writes_best_checkpoint(self):
        finetune_run(
            None, self.manifest, self.config(), out_dir=self.path('ft')
        )
        checkpoint = load_checkpoint(self.path('ft', 'best.trck'))
        self.assertIn('head.fc3', checkpoint.params)
        with open(self.path('ft', 'report.txt'), encoding='utf-8') as f:
            self.assertTrue(f.read().startswith('balanced_accuracy: '))

    def test_single_class_training_split(self):
        entries = [
            ManifestEntry(e.path, 0 if e.split == 'train' else e.label,
                          e.source, e.split)
            for e in self.manifest
        ]
        with self.assertRaises(TrainingDataError):
            finetune_run(None, CorpusManifest(entries), self.config())

    def test_unlabeled_manifest(self):
        entries = [
            ManifestEntry(e.path, None, e.source, e.split)
            for e in self.manifest
        ]
        with self.assertRaises(TrainingDataError):
            finetune_run(None, CorpusManifest(entries), self.config())


BANDS_HZ = ((1, 4), (4, 8), (8, 13), (13, 30), (30, 45))


def band_powers(windows, rate_hz=200.0):
    features = []
    for grid in windows.grids:
        samples = grid.reshape(grid.shape[0], -1)
        freqs, power = welch(samples, fs=rate_hz, nperseg=256)
        features.append(
            [
                np.log(power[:, (freqs >= lo) & (freqs < hi)].mean())
                for lo, hi in BANDS_HZ
            ]
        )
    return np.array(features)


@tag('slow')
class DownstreamAcceptanceTest(tests.WithTempDirMixin, tests.TraceTestCase):
    def setUp(self):
        super().setUp()
        spec = SynthSpec(
            seed=21,
            channel_count=8,
            duration_s=10.0,
            class_bands=('delta', 'alpha', 'beta'),
        )
        self.manifest = synth_corpus(
            spec,
            420,
            self.path('corpus'),
            splits=(('train', 300), ('val', 60), ('test', 60)),
        )
        self.config = RunConfig.parse(
            [
                'data.window_s = 10',
                'model.layers = 2',
                'model.d = 32',
                'model.heads = 4',
                'model.ffn_dim = 64',
                'model.tf_queries = 2',
                'model.tf_heads = 4',
                'routing.experts = 8',
                'routing.topk = 2',
                'train.steps = 300',
                'train.warmup = 30',
                'train.log_interval = 50',
                'train.checkpoint_interval = 300',
            ]
        )

    def test_band_power_oracle(self):
        train = load_windows(self.manifest.subset('train'), 10.0, 200)
        test = load_windows(self.manifest.subset('test'), 10.0, 200)
        model = LogisticRegression(max_iter=2000)
        model.fit(band_powers(train), train.label_array())
        predictions = model.predict(band_powers(test))
        self.assertGreaterEqual(
            oracle.balanced_accuracy_score(test.label_array(), predictions),
            0.95,
        )

    def test_pretrained_classifier(self):
        result = pretrain_run(
            self.manifest.subset('train'), self.config, self.path('pretrain')
        )
        checkpoint = load_checkpoint(result.checkpoint_path)

        pretrained, scratch = [], []
        for seed in range(3):
            config = RunConfig.loads(
                self.config.dumps() + 'finetune.seed = {}\n'.format(seed)
            )
            pretrained.append(
                finetune_run(checkpoint, self.manifest, config)
                .report.balanced_accuracy
            )
            scratch.append(
                finetune_run(None, self.manifest, config)
                .report.balanced_accuracy
            )
        self.assertGreaterEqual(pretrained[0], 0.80)
        self.assertGreaterEqual(np.mean(pretrained), np.mean(scratch))
