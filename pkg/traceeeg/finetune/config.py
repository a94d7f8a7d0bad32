# Copyright (C) <2026> Association Prologin <association@prologin.org>
# SPDX-License-Identifier: GPL-3.0+

from dataclasses import dataclass

from tracelib.config import ConfigSection, option


@dataclass
class FinetuneConfig(ConfigSection):
    section = 'finetune'

    epochs: int = option(10, int)
    batch_size: int = option(16, int)
    lr: float = option(2e-3, float)
    weight_decay: float = option(5e-2, float)
    dropout: float = option(0.1, float)
    clip_norm: float = option(1.0, float)
    freeze_backbone: bool = option(False, bool)
    # number of classes; auto counts the labels of the training split
    classes: int = option(None, int, optional=True)
    seed: int = option(0, int)

    def clean(self):
        self.require(self.epochs >= 1, "at least one epoch")
        self.require(self.batch_size >= 1, "batch_size must be positive")
        self.require(self.lr > 0, "lr must be positive")
        self.require(self.weight_decay >= 0, "weight_decay must be >= 0")
        self.require(0 <= self.dropout < 1, "dropout must lie in [0, 1)")
        self.require(self.clip_norm > 0, "clip_norm must be positive")
        self.require(
            self.classes is None or self.classes >= 2,
            "at least two classes",
        )
