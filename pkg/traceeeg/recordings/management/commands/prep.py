# Copyright (C) <2026> Association Prologin <association@prologin.org>
# SPDX-License-Identifier: GPL-3.0+

from django.core.management.base import BaseCommand

from recordings.manifest import read_manifest
from recordings.windows import prepare_corpus
from tracelib.commands import reported_errors


class Command(BaseCommand):
    help = "Filter, resample and window a corpus into a new manifest."

    def add_arguments(self, parser):
        parser.add_argument('--manifest', required=True)
        parser.add_argument('--out', required=True)
        parser.add_argument('--window', type=float, default=30.0, help="s")
        parser.add_argument('--patch-len', type=int, default=200)
        parser.add_argument('--low', type=float, default=0.5, help="Hz")
        parser.add_argument('--high', type=float, default=75.0, help="Hz")
        parser.add_argument('--notch', type=float, default=60.0, help="Hz")
        parser.add_argument(
            '--no-notch', action='store_true', help="skip the notch filter"
        )
        parser.add_argument('--rate', type=float, default=200.0, help="Hz")

    def handle(self, *args, **options):
        with reported_errors():
            prepared = prepare_corpus(
                read_manifest(options['manifest']),
                options['out'],
                options['window'],
                options['patch_len'],
                band=(options['low'], options['high']),
                notch_hz=None if options['no_notch'] else options['notch'],
                target_rate_hz=options['rate'],
            )
        self.stdout.write(
            "wrote {} windows to {}".format(len(prepared), options['out'])
        )
