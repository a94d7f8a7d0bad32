# Copyright (C) <2026> Association Prologin <association@prologin.org>
# SPDX-License-Identifier: GPL-3.0+

import numpy as np

from autodiff import functional as F
from autodiff.nn import Module
from autodiff.tensor import Tensor
from tracelib.utils import current_generator


class ClassifierHead(Module):
    """d -> d -> d/2 -> classes, GELU and dropout between the layers."""

    def __init__(self, d, classes, dropout, init):
        super().__init__()
        self.classes = classes
        self.dropout = dropout
        hidden = max(1, d // 2)
        self.fc1 = init.uniform((d, d), fan_in=d)
        self.fc1_bias = init.zeros((d,))
        self.fc2 = init.uniform((d, hidden), fan_in=d)
        self.fc2_bias = init.zeros((hidden,))
        self.fc3 = init.uniform((hidden, classes), fan_in=hidden)
        self.fc3_bias = init.zeros((classes,))

    def _dropout(self, x):
        if not self.training or not self.dropout:
            return x
        keep = current_generator().random(x.shape) >= self.dropout
        scale = keep / (1.0 - self.dropout)
        return x * Tensor(scale.astype(x.dtype))

    def forward(self, pooled):
        h = self._dropout(F.gelu(F.linear(pooled, self.fc1, self.fc1_bias)))
        h = self._dropout(F.gelu(F.linear(h, self.fc2, self.fc2_bias)))
        return F.linear(h, self.fc3, self.fc3_bias)


def pool(hidden):
    """(batch, channels, steps, d) hidden states -> (batch, d) means."""
    return hidden.mean(axis=(1, 2))


def pool_and_classify(hidden, head):
    return head(pool(hidden))


class Classifier(Module):
    """Pre-trained encoder and backbone under a classification head."""

    def __init__(self, model, head):
        super().__init__()
        self.encoder = model.encoder
        self.backbone = model.backbone
        self.head = head

    @property
    def dtype(self):
        return self.parameters()[0].dtype

    def freeze_backbone(self):
        for module in (self.encoder, self.backbone):
            for p in module.parameters():
                p.requires_grad = False
                p.zero_grad()

    def trainable_parameters(self):
        return [
            (name, p) for name, p in self.named_parameters() if p.requires_grad
        ]

    def forward(self, patches):
        hidden, _ = self.backbone(
            self.encoder(np.asarray(patches, dtype=self.dtype))
        )
        return pool_and_classify(hidden, self.head)
