# Copyright (C) <2026> Association Prologin <association@prologin.org>
# SPDX-License-Identifier: GPL-3.0+

from django.conf import settings
from django.core.management.base import BaseCommand, CommandError

from tracelib.commands import reported_errors
from training.diagnostics import gradcheck_suite


class Command(BaseCommand):
    help = "Check every component's gradients against finite differences."

    def add_arguments(self, parser):
        parser.add_argument('--seed', type=int, default=0)
        parser.add_argument('--channels', type=int, default=3)
        parser.add_argument('--steps', type=int, default=4)
        parser.add_argument(
            '--coords',
            type=int,
            default=24,
            help="coordinates sampled per tensor",
        )

    def handle(self, *args, **options):
        with reported_errors():
            reports = gradcheck_suite(
                seed=options['seed'],
                channels=options['channels'],
                steps=options['steps'],
                max_coords=options['coords'],
            )
        failed = []
        for name, report in reports.items():
            self.stdout.write(
                "{:<20} {:.3e}{}".format(
                    name,
                    report.max_rel_error,
                    '' if report.passed else '  FAILED',
                )
            )
            if options['verbosity'] > 1:
                self.stdout.write(str(report))
            if not report.passed:
                failed.append(name)
        if failed:
            raise CommandError(
                "relative error above {} in {}".format(
                    settings.TRACE_GRADCHECK_TOL, ', '.join(failed)
                )
            )
