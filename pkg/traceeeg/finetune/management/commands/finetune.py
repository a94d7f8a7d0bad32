# Copyright (C) <2026> Association Prologin <association@prologin.org>
# SPDX-License-Identifier: GPL-3.0+

from django.core.management.base import BaseCommand, CommandError

from finetune.engine import finetune_run
from recordings.manifest import read_manifest
from tracelib.commands import reported_errors
from training.checkpoint import load_checkpoint
from training.config import RunConfig


class Command(BaseCommand):
    help = "Fine-tune a pre-trained model on a labeled manifest."

    def add_arguments(self, parser):
        parser.add_argument(
            '--checkpoint', help="pre-trained model; omit for random init"
        )
        parser.add_argument(
            '--config', help="run configuration (default: the checkpoint's)"
        )
        parser.add_argument('--manifest', required=True)
        parser.add_argument('--out', help="directory for best.trck")

    def handle(self, *args, **options):
        if not options['checkpoint'] and not options['config']:
            raise CommandError("need --checkpoint or --config")
        with reported_errors():
            checkpoint = config = None
            if options['checkpoint']:
                checkpoint = load_checkpoint(options['checkpoint'])
            if options['config']:
                config = RunConfig.load(options['config'])
            result = finetune_run(
                checkpoint,
                read_manifest(options['manifest']),
                config=config,
                out_dir=options['out'],
            )
        self.stdout.write("best epoch: {}".format(result.best_epoch))
        self.stdout.write(str(result.report), ending='')
