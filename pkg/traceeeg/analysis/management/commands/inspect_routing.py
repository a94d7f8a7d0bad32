# Copyright (C) <2026> Association Prologin <association@prologin.org>
# SPDX-License-Identifier: GPL-3.0+

from django.core.management.base import BaseCommand

from analysis.export import export_rows_as_csv, jaccard_rows
from analysis.stats import (
    SetRanking,
    jaccard_overlap,
    model_records,
    overlap_counts,
    routing_stats,
)
from recordings.manifest import read_manifest
from recordings.windows import load_windows
from tracelib.commands import reported_errors
from training.checkpoint import load_checkpoint
from training.engine import TrainState


class Command(BaseCommand):
    help = "Summarize expert routing of a checkpoint over a manifest."

    def add_arguments(self, parser):
        parser.add_argument('--checkpoint', required=True)
        parser.add_argument('--manifest', required=True)
        parser.add_argument('--out', required=True, help="per-expert CSV")
        parser.add_argument('--jaccard-out', help="pairwise overlap CSV")
        parser.add_argument(
            '--ranking',
            choices=SetRanking.choices(),
            default=SetRanking.gate.name,
            help="score used to pick each source's top experts",
        )
        parser.add_argument('--batch-size', type=int, default=8)

    def handle(self, *args, **options):
        with reported_errors():
            state = TrainState.restore(load_checkpoint(options['checkpoint']))
            config = state.config
            windows = load_windows(
                read_manifest(options['manifest']),
                config.data.window_s,
                config.data.patch_len,
            )
            summary = routing_stats(
                model_records(state.model, windows, options['batch_size']),
                ranking=options['ranking'],
            )
            export_rows_as_csv(summary.export_rows(), options['out'])
            for line in summary.lines():
                self.stdout.write(line)

            tags = list(summary.top_sets)
            if len(tags) < 2:
                return
            sets = list(summary.top_sets.values())
            matrix, mean = jaccard_overlap(sets)
            counts = overlap_counts(sets)
            self.stdout.write("mean pairwise Jaccard {:.4f}".format(mean))
            self.stdout.write(
                "universal {}, in >= 3 sets {}, single-set {}".format(
                    len(counts.universal),
                    len(counts.shared),
                    len(counts.single),
                )
            )
            if options['jaccard_out']:
                export_rows_as_csv(
                    jaccard_rows(tags, matrix), options['jaccard_out']
                )
