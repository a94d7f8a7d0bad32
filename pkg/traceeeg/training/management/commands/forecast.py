# Copyright (C) <2026> Association Prologin <association@prologin.org>
# SPDX-License-Identifier: GPL-3.0+

from django.core.management.base import BaseCommand

from recordings.segments import EEGSegment, read_segment, write_segment
from tracelib.commands import reported_errors
from training.checkpoint import load_checkpoint
from training.engine import TrainState
from training.forecast import forecast_segment


class Command(BaseCommand):
    help = "Continue a recording patch by patch with the horizon-1 head."

    def add_arguments(self, parser):
        parser.add_argument('--checkpoint', required=True)
        parser.add_argument('--input', required=True, help="segment file")
        parser.add_argument('--prefix', type=int, default=5, help="patches")
        parser.add_argument('--steps', type=int, default=5, help="patches")
        parser.add_argument('--out', required=True)

    def handle(self, *args, **options):
        with reported_errors():
            state = TrainState.restore(load_checkpoint(options['checkpoint']))
            seg = read_segment(options['input'])
            samples = forecast_segment(
                state.model, seg, options['prefix'], options['steps']
            )
            write_segment(
                EEGSegment(samples, seg.sample_rate_hz), options['out']
            )
        self.stdout.write(
            "wrote {} samples per channel to {}".format(
                samples.shape[1], options['out']
            )
        )
