# Copyright (C) <2026> Association Prologin <association@prologin.org>
# SPDX-License-Identifier: GPL-3.0+

from django.apps import AppConfig


class AutodiffConfig(AppConfig):
    name = 'autodiff'
