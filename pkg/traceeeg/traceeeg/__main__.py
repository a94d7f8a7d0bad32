# Copyright (C) <2026> Association Prologin <association@prologin.org>
# SPDX-License-Identifier: GPL-3.0+

import sys

from traceeeg.cli import cli_dispatch

if __name__ == "__main__":
    sys.exit(cli_dispatch())
