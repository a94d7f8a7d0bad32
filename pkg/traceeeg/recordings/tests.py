# Copyright (C) <2026> Association Prologin <association@prologin.org>
# SPDX-License-Identifier: GPL-3.0+

from collections import Counter
from io import StringIO
import os

import numpy as np
from django.core.management import call_command
from django.core.management.base import CommandError

from recordings.filters import preprocess, standardize, window_standardize
from recordings.manifest import (
    CorpusManifest,
    ManifestEntry,
    ManifestSampler,
    parse_manifest,
    read_manifest,
)
from recordings.segments import (
    EEGSegment,
    dumps_segment,
    loads_segment,
    read_segment,
    write_segment,
)
from recordings.synth import SynthSpec, synth_corpus, synth_segment
from recordings.windows import load_windows, prepare_corpus
from tracelib import tests
from tracelib.exceptions import FormatError, ParameterError


def file_bytes(path):
    with open(path, 'rb') as f:
        return f.read()


class SynthTest(tests.WithTempDirMixin, tests.TraceTestCase):
    def test_shapes(self):
        spec = SynthSpec(seed=7, channel_count=19, duration_s=30.0)
        manifest = synth_corpus(spec, 4, self.path('a'))
        self.assertEqual(len(manifest), 4)
        for entry in manifest:
            seg = read_segment(entry.path)
            self.assertEqual(seg.samples.shape, (19, 6000))
            self.assertEqual(seg.sample_rate_hz, 200.0)
            self.assertEqual(entry.source, 'synth')
            self.assertIsNone(entry.label)

    def test_regeneration_is_byte_identical(self):
        spec = SynthSpec(seed=7, channel_count=4, duration_s=5.0)
        first = synth_corpus(spec, 3, self.path('a'))
        second = synth_corpus(spec, 3, self.path('b'), workers=2)
        for a, b in zip(first, second):
            self.assertEqual(file_bytes(a.path), file_bytes(b.path))
        spec = SynthSpec(seed=8, channel_count=4, duration_s=5.0)
        other = synth_segment(spec, 2)[0]
        self.assertFalse(
            np.array_equal(other.samples, read_segment(a.path).samples)
        )

    def test_labels_are_balanced(self):
        spec = SynthSpec(class_bands=('theta', 'alpha', 'beta'))
        counts = Counter(spec.label_of(i) for i in range(300))
        self.assertEqual(counts, {0: 100, 1: 100, 2: 100})

        small = SynthSpec(
            seed=1,
            channel_count=2,
            duration_s=1.0,
            class_bands=('theta', 'alpha', 'beta'),
        )
        manifest = synth_corpus(small, 6, self.path('c'))
        self.assertEqual([e.label for e in manifest], [0, 1, 2, 0, 1, 2])

    def test_dominant_band_carries_the_power(self):
        spec = SynthSpec(
            seed=2,
            channel_count=4,
            duration_s=10.0,
            class_bands=('delta', 'alpha'),
            dominance=4.0,
        )

        def alpha_share(index):
            samples = synth_segment(spec, index)[0].samples
            power = np.abs(np.fft.rfft(samples, axis=-1)) ** 2
            freqs = np.fft.rfftfreq(samples.shape[-1], 1 / 200.0)
            alpha = (freqs >= 8) & (freqs < 13)
            return power[:, alpha].sum() / power.sum()

        self.assertGreater(alpha_share(1), 2 * alpha_share(0))

    def test_invalid_specs(self):
        with self.assertRaises(ParameterError):
            SynthSpec(class_bands=('kappa',))
        with self.assertRaises(ParameterError):
            SynthSpec(channel_count=0)
        with self.assertRaises(ParameterError):
            synth_corpus(SynthSpec(), 3, self.path('d'), splits=[('train', 2)])

    def test_splits(self):
        spec = SynthSpec(channel_count=2, duration_s=1.0)
        manifest = synth_corpus(
            spec, 4, self.path('e'), splits=[('train', 3), ('test', 1)]
        )
        self.assertEqual(
            [e.split for e in manifest], ['train', 'train', 'train', 'test']
        )
        reread = read_manifest(self.path('e', 'manifest.tsv'))
        self.assertEqual(reread.entries, manifest.entries)


class SegmentFileTest(tests.WithTempDirMixin, tests.TraceTestCase):
    def segment(self):
        rng = np.random.default_rng(0)
        samples = rng.normal(size=(19, 6000)).astype(np.float32)
        return EEGSegment(samples, 200.0)

    def test_round_trip(self):
        seg = self.segment()
        write_segment(seg, self.path('seg.trce'))
        again = read_segment(self.path('seg.trce'))
        self.assertBitIdentical(again.samples, seg.samples)
        self.assertEqual(again.sample_rate_hz, 200.0)

    def test_bad_magic(self):
        payload = b'XXXX' + dumps_segment(self.segment())[4:]
        with self.assertRaises(FormatError) as cm:
            loads_segment(payload)
        self.assertEqual(cm.exception.field, 'magic')
        self.assertIn('bad magic', str(cm.exception))

    def test_version_mismatch(self):
        payload = bytearray(dumps_segment(self.segment()))
        payload[4] = 2
        with self.assertRaises(FormatError) as cm:
            loads_segment(bytes(payload))
        self.assertEqual(cm.exception.field, 'version')

    def test_truncated_payload(self):
        payload = dumps_segment(self.segment())[:-4]
        with self.assertRaises(FormatError) as cm:
            loads_segment(payload)
        self.assertEqual(cm.exception.field, 'payload')
        self.assertIn('truncated payload', str(cm.exception))

    def test_trailing_bytes(self):
        with self.assertRaises(FormatError):
            loads_segment(dumps_segment(self.segment()) + b'\0')

    def test_read_errors_name_the_file(self):
        path = self.path('bad.trce')
        with open(path, 'wb') as f:
            f.write(b'XXXX')
        with self.assertRaises(FormatError) as cm:
            read_segment(path)
        self.assertIn(path, str(cm.exception))
        with self.assertRaises(OSError) as cm:
            read_segment(self.path('absent.trce'))
        self.assertEqual(cm.exception.filename, self.path('absent.trce'))

    def test_invalid_segments(self):
        with self.assertRaises(ParameterError):
            EEGSegment(np.zeros((0, 10)), 200.0)
        with self.assertRaises(ParameterError):
            EEGSegment(np.zeros((2, 10)), 0.0)


class PreprocessTest(tests.TraceTestCase):
    def tone(self, frequency_hz, rate_hz=200.0, duration_s=10.0, offset=0.0):
        t = np.arange(int(rate_hz * duration_s)) / rate_hz
        samples = offset + np.sin(2 * np.pi * frequency_hz * t)
        return EEGSegment(np.tile(samples, (2, 1)), rate_hz)

    def test_resampling(self):
        seg = EEGSegment(np.zeros((3, 8000)), 400.0)
        out = preprocess(seg, target_rate_hz=200.0)
        self.assertEqual(out.samples.shape, (3, 4000))
        self.assertEqual(out.sample_rate_hz, 200.0)

    def test_notch_removes_mains(self):
        seg = self.tone(60.0)
        out = preprocess(seg, target_rate_hz=200.0)
        tail = out.samples[:, 200:]
        rms_in = np.sqrt(np.mean(seg.samples[:, 200:] ** 2))
        rms_out = np.sqrt(np.mean(tail ** 2))
        self.assertLess(rms_out, 0.05 * rms_in)

    def test_bandpass_removes_offset(self):
        seg = EEGSegment(np.full((2, 4200), 10.0), 200.0)
        out = preprocess(seg, target_rate_hz=200.0)
        self.assertLess(np.abs(out.samples[:, 200:]).mean(), 0.5)

    def test_passband_is_kept(self):
        seg = self.tone(10.0)
        out = preprocess(seg, target_rate_hz=200.0)
        rms_out = np.sqrt(np.mean(out.samples[:, 400:] ** 2))
        self.assertGreater(rms_out, 0.9 * np.sqrt(0.5))

    def test_channels_are_filtered_independently(self):
        rng = np.random.default_rng(1)
        samples = rng.normal(size=(3, 2000))
        both = preprocess(EEGSegment(samples, 200.0)).samples
        alone = preprocess(EEGSegment(samples[1:2], 200.0)).samples
        self.assertAllClose(both[1:2], alone, rtol=0, atol=1e-12)

    def test_invalid_bands(self):
        seg = EEGSegment(np.zeros((1, 400)), 200.0)
        with self.assertRaises(ParameterError):
            preprocess(seg, band=(0.5, 120.0))
        with self.assertRaises(ParameterError):
            preprocess(seg, band=(40.0, 10.0))
        with self.assertRaises(ParameterError):
            preprocess(seg, notch_hz=150.0)


class WindowTest(tests.TraceTestCase):
    def test_partial_window_dropped(self):
        rng = np.random.default_rng(2)
        seg = EEGSegment(rng.normal(size=(2, 6100)), 200.0)
        windows = window_standardize(seg, 30.0, 200)
        self.assertEqual(len(windows), 1)
        self.assertEqual(windows[0].samples.shape, (2, 6000))

    def test_standardized_windows(self):
        rng = np.random.default_rng(3)
        seg = EEGSegment(5.0 + 3.0 * rng.normal(size=(3, 1000)), 200.0)
        windows = window_standardize(seg, 1.0, 20)
        self.assertEqual(len(windows), 5)
        for window in windows:
            self.assertLess(np.abs(window.samples.mean(axis=1)).max(), 1e-10)
            self.assertAllClose(
                window.samples.var(axis=1), np.ones(3), rtol=0, atol=1e-6
            )

    def test_constant_channel(self):
        samples = np.vstack([np.full(400, 7.0), np.arange(400.0)])
        out = standardize(samples)
        self.assertBitIdentical(out[0], np.zeros(400))

    def test_window_shorter_than_patch(self):
        seg = EEGSegment(np.zeros((1, 400)), 200.0)
        with self.assertRaises(ParameterError):
            window_standardize(seg, 0.5, 200)


class CorpusWindowsTest(tests.WithSmallCorpusMixin, tests.TraceTestCase):
    def test_load_windows(self):
        windows = load_windows(self.manifest, 1.0, 20)
        self.assertEqual(len(windows), 8)
        self.assertEqual(windows.grids[0].shape, (4, 10, 20))
        self.assertEqual(windows.entries, [0, 0, 1, 1, 2, 2, 3, 3])
        self.assertEqual(windows.stack([0, 3]).shape, (2, 4, 10, 20))

    def test_prepare_corpus(self):
        prepared = prepare_corpus(self.manifest, self.path('prep'), 1.0, 20)
        self.assertEqual(len(prepared), 8)
        self.assertTrue(os.path.exists(self.path('prep', 'manifest.tsv')))
        seg = read_segment(prepared.entries[0].path)
        self.assertEqual(seg.samples.shape, (4, 200))
        self.assertEqual(
            {e.source for e in prepared}, set(self.manifest.sources())
        )

    def test_prep_command(self):
        out = StringIO()
        call_command(
            'prep',
            manifest=self.path('corpus', 'manifest.tsv'),
            out=self.path('prep'),
            window=1.0,
            patch_len=20,
            stdout=out,
        )
        self.assertIn('wrote 8 windows', out.getvalue())
        reread = read_manifest(self.path('prep', 'manifest.tsv'))
        self.assertEqual(len(reread), 8)

    def test_prep_command_reports_bad_band(self):
        with self.assertRaises(CommandError):
            call_command(
                'prep',
                manifest=self.path('corpus', 'manifest.tsv'),
                out=self.path('prep'),
                high=150.0,
                stdout=StringIO(),
            )


class SynthCommandTest(tests.WithTempDirMixin, tests.TraceTestCase):
    def test_labeled_corpus(self):
        out = StringIO()
        call_command(
            'synth',
            out=self.path('corpus'),
            count=6,
            channels=2,
            duration=2.0,
            class_bands='delta,alpha',
            splits='train:4,test:2',
            stdout=out,
        )
        manifest = read_manifest(self.path('corpus', 'manifest.tsv'))
        self.assertEqual([e.label for e in manifest], [0, 1, 0, 1, 0, 1])
        self.assertEqual(len(manifest.subset('test')), 2)

    def test_bad_splits(self):
        with self.assertRaises(CommandError):
            call_command(
                'synth',
                out=self.path('corpus'),
                count=6,
                splits='train:4,test:1',
                stdout=StringIO(),
            )


class ManifestTest(tests.TraceTestCase):
    def test_parse(self):
        manifest = parse_manifest(
            [
                '# a comment\n',
                '# weight\tsleep\t2.5\n',
                'a.trce\t1\tsleep\ttrain\n',
                'b.trce\t\tmotor\n',
            ],
            base_dir='/data',
        )
        self.assertEqual(manifest.weights, {'sleep': 2.5})
        self.assertEqual(manifest.weight_of('motor'), 1.0)
        self.assertEqual(
            manifest.entries,
            [
                ManifestEntry('/data/a.trce', 1, 'sleep', 'train'),
                ManifestEntry('/data/b.trce', None, 'motor', None),
            ],
        )
        self.assertFalse(manifest.labeled)
        self.assertEqual(
            parse_manifest(manifest.dumps('/data').splitlines(), '/data'),
            manifest,
        )

    def test_malformed_lines(self):
        cases = [
            ('a.trce\t1\n', 'columns'),
            ('a.trce\tx\tsleep\n', 'label'),
            ('a.trce\t1\tsleep\tholdout\n', 'split'),
            ('# weight\tsleep\n', 'weight'),
            ('# weight\tsleep\theavy\n', 'weight'),
        ]
        for line, field in cases:
            with self.subTest(line=line):
                with self.assertRaises(FormatError) as cm:
                    parse_manifest([line])
                self.assertEqual(cm.exception.field, field)

    def test_negative_weight(self):
        with self.assertRaises(ParameterError):
            CorpusManifest([], {'sleep': -1.0})

    def test_sampler_follows_weights(self):
        sources = ['a', 'a', 'b', 'c']
        sampler = ManifestSampler(sources, {'a': 3.0, 'b': 1.0, 'c': 0}, 9)
        drawn = Counter(sources[i] for i in sampler.stream(10000))
        self.assertAlmostEqual(drawn['a'] / 10000, 0.75, delta=0.02)
        self.assertAlmostEqual(drawn['b'] / 10000, 0.25, delta=0.02)
        self.assertEqual(drawn['c'], 0)
        self.assertEqual(sampler.stream(50), sampler.stream(50))

    def test_batches_depend_on_step_only(self):
        sources = ['a'] * 5 + ['b'] * 5
        first = ManifestSampler(sources, {}, 4)
        second = ManifestSampler(sources, {}, 4)
        self.assertEqual(first.batch_indices(7, 6), second.batch_indices(7, 6))
        for step in range(1, 20):
            picked = {sources[i] for i in first.batch_indices(step, 6)}
            self.assertEqual(len(picked), 1)

    def test_all_weights_zero(self):
        with self.assertRaises(ParameterError):
            ManifestSampler(['a', 'b'], {'a': 0, 'b': 0}, 0)
