# Copyright (C) <2026> Association Prologin <association@prologin.org>
# SPDX-License-Identifier: GPL-3.0+

from contextlib import redirect_stderr, redirect_stdout
from io import StringIO
import os

from recordings.manifest import read_manifest
from traceeeg.cli import SUBCOMMANDS, cli_dispatch
from tracelib import tests


class CliDispatchTest(tests.WithTempDirMixin, tests.TraceTestCase):
    def dispatch(self, *argv):
        out, err = StringIO(), StringIO()
        with redirect_stdout(out), redirect_stderr(err):
            status = cli_dispatch(list(argv))
        return status, out.getvalue(), err.getvalue()

    def test_unknown_subcommand(self):
        status, _, err = self.dispatch('migrate')
        self.assertEqual(status, 2)
        self.assertIn("unknown subcommand 'migrate'", err)
        self.assertIn('inspect-routing', err)

    def test_no_subcommand(self):
        status, _, err = self.dispatch()
        self.assertEqual(status, 2)
        self.assertTrue(err.startswith('usage: traceeeg'))

    def test_help(self):
        status, out, _ = self.dispatch('--help')
        self.assertEqual(status, 0)
        self.assertIn(', '.join(SUBCOMMANDS), out)

    def test_synth(self):
        corpus = self.path('corpus')
        status, out, _ = self.dispatch(
            'synth',
            '--out',
            corpus,
            '--count',
            '2',
            '--channels',
            '2',
            '--duration',
            '1',
        )
        self.assertEqual(status, 0)
        self.assertIn('wrote 2 segments', out)
        manifest = read_manifest(os.path.join(corpus, 'manifest.tsv'))
        self.assertEqual(len(manifest), 2)

    def test_command_failure(self):
        status, _, err = self.dispatch(
            'synth', '--out', self.path('corpus'), '--splits', 'train'
        )
        self.assertEqual(status, 1)
        self.assertIn('malformed split', err)

    def test_bad_option(self):
        status, _, _ = self.dispatch('gradcheck', '--seed', 'x')
        self.assertEqual(status, 2)
