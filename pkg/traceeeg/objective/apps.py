# Copyright (C) <2026> Association Prologin <association@prologin.org>
# SPDX-License-Identifier: GPL-3.0+

from django.apps import AppConfig


class ObjectiveConfig(AppConfig):
    name = 'objective'
    verbose_name = 'Pre-training objective'
