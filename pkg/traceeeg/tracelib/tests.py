# Copyright (C) <2026> Association Prologin <association@prologin.org>
# SPDX-License-Identifier: GPL-3.0+

"""Base test case and fixtures shared by the apps' test suites."""

import os
import shutil
import tempfile

import numpy as np
from django.test import SimpleTestCase

from recordings.synth import SynthSpec, synth_corpus


class TraceTestCase(SimpleTestCase):
    def assertAllClose(self, actual, expected, rtol=1e-7, atol=0.0):
        np.testing.assert_allclose(actual, expected, rtol=rtol, atol=atol)

    def assertBitIdentical(self, actual, expected):
        actual, expected = np.asarray(actual), np.asarray(expected)
        self.assertEqual(actual.dtype, expected.dtype)
        self.assertEqual(actual.shape, expected.shape)
        self.assertEqual(actual.tobytes(), expected.tobytes())


class WithTempDirMixin:
    def setUp(self):
        super().setUp()
        self.tmp = tempfile.mkdtemp(prefix='traceeeg-')
        self.addCleanup(shutil.rmtree, self.tmp, True)

    def path(self, *parts):
        return os.path.join(self.tmp, *parts)


class WithSmallCorpusMixin(WithTempDirMixin):
    """Four 2-second, 4-channel synthetic segments at 200 Hz."""

    corpus_spec = SynthSpec(seed=3, channel_count=4, duration_s=2.0)
    corpus_count = 4
    corpus_splits = None

    def setUp(self):
        super().setUp()
        self.manifest = synth_corpus(
            self.corpus_spec,
            self.corpus_count,
            self.path('corpus'),
            splits=self.corpus_splits,
        )
