# Copyright (C) <2026> Association Prologin <association@prologin.org>
# SPDX-License-Identifier: GPL-3.0+

from django.apps import AppConfig


class BackboneConfig(AppConfig):
    name = 'backbone'
    verbose_name = 'Temporal-routing MoE backbone'
