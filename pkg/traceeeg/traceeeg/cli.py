# Copyright (C) <2026> Association Prologin <association@prologin.org>
# SPDX-License-Identifier: GPL-3.0+

"""
Single entry point over the project's management commands:

    python -m traceeeg <subcommand> [options]

Exit status is 0 on success, 1 when the command fails and 2 on a usage
error.
"""

from collections import OrderedDict
import os
import sys

PROG = 'traceeeg'

SUBCOMMANDS = OrderedDict(
    [
        ('synth', 'synth'),
        ('prep', 'prep'),
        ('pretrain', 'pretrain'),
        ('finetune', 'finetune'),
        ('forecast', 'forecast'),
        ('inspect-routing', 'inspect_routing'),
        ('gradcheck', 'gradcheck'),
    ]
)


def usage():
    return (
        "usage: {prog} <subcommand> [options]\n"
        "\n"
        "subcommands: {names}\n"
        "Run '{prog} <subcommand> --help' for the options of one.\n"
    ).format(prog=PROG, names=', '.join(SUBCOMMANDS))


def cli_dispatch(argv=None):
    argv = sys.argv[1:] if argv is None else list(argv)
    if argv and argv[0] in ('-h', '--help'):
        sys.stdout.write(usage())
        return 0
    if not argv or argv[0] not in SUBCOMMANDS:
        if argv:
            sys.stderr.write(
                "{}: unknown subcommand {!r}\n".format(PROG, argv[0])
            )
        sys.stderr.write(usage())
        return 2

    os.environ.setdefault("DJANGO_SETTINGS_MODULE", "traceeeg.settings.dev")
    from django.core.management import execute_from_command_line

    try:
        execute_from_command_line([PROG, SUBCOMMANDS[argv[0]]] + argv[1:])
    except SystemExit as exc:
        # CommandError exits 1, argparse errors exit 2
        if exc.code is None:
            return 0
        return exc.code if isinstance(exc.code, int) else 1
    return 0
