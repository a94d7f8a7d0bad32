# Copyright (C) <2026> Association Prologin <association@prologin.org>
# SPDX-License-Identifier: GPL-3.0+

from django.core.management.base import BaseCommand

from recordings.manifest import read_manifest
from tracelib.commands import reported_errors
from training.config import RunConfig
from training.engine import pretrain_run


class Command(BaseCommand):
    help = "Pre-train a model on the windows of a corpus manifest."

    def add_arguments(self, parser):
        parser.add_argument('--config', help="run configuration file")
        parser.add_argument('--manifest', required=True)
        parser.add_argument('--out', required=True, help="run directory")
        parser.add_argument('--resume', help="checkpoint of the same run")

    def handle(self, *args, **options):
        with reported_errors():
            config = (
                RunConfig.load(options['config'])
                if options['config']
                else RunConfig().clean()
            )
            manifest = read_manifest(options['manifest'])
            result = pretrain_run(
                manifest, config, options['out'], resume=options['resume']
            )
        losses = result.losses()
        if losses:
            self.stdout.write(
                "{} steps, final loss {:.5f}".format(len(losses), losses[-1])
            )
        self.stdout.write("checkpoint: {}".format(result.checkpoint_path))
