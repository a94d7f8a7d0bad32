# Copyright (C) <2026> Association Prologin <association@prologin.org>
# SPDX-License-Identifier: GPL-3.0+

from django.conf import settings
from django.core.management.base import BaseCommand, CommandError

from recordings.synth import SynthSpec, synth_corpus
from tracelib.commands import reported_errors


def parse_splits(value):
    """'train:300,val:60' -> (('train', 300), ('val', 60))"""
    splits = []
    for item in value.split(','):
        name, _, size = item.partition(':')
        try:
            splits.append((name.strip(), int(size)))
        except ValueError:
            raise CommandError("malformed split {!r}".format(item))
    return tuple(splits)


class Command(BaseCommand):
    help = "Generate a synthetic EEG corpus and its manifest."

    def add_arguments(self, parser):
        parser.add_argument('--out', required=True)
        parser.add_argument('--count', type=int, default=16)
        parser.add_argument('--seed', type=int, default=0)
        parser.add_argument('--channels', type=int, default=19)
        parser.add_argument('--duration', type=float, default=30.0)
        parser.add_argument('--rate', type=float, default=200.0)
        parser.add_argument(
            '--class-bands',
            default='',
            help="comma-separated dominant bands, one per class",
        )
        parser.add_argument('--dominance', type=float, default=4.0)
        parser.add_argument('--source', default='synth')
        parser.add_argument(
            '--splits', help="consecutive split sizes, e.g. train:8,val:4"
        )
        parser.add_argument(
            '--workers', type=int, default=settings.TRACE_DATA_WORKERS
        )

    def handle(self, *args, **options):
        class_bands = tuple(
            name.strip()
            for name in options['class_bands'].split(',')
            if name.strip()
        )
        splits = None
        if options['splits']:
            splits = parse_splits(options['splits'])
        with reported_errors():
            spec = SynthSpec(
                seed=options['seed'],
                channel_count=options['channels'],
                duration_s=options['duration'],
                sample_rate_hz=options['rate'],
                class_bands=class_bands,
                dominance=options['dominance'],
                source=options['source'],
            )
            manifest = synth_corpus(
                spec,
                options['count'],
                options['out'],
                splits=splits,
                workers=options['workers'],
            )
        self.stdout.write(
            "wrote {} segments to {}".format(len(manifest), options['out'])
        )
