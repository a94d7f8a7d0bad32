# Copyright (C) <2026> Association Prologin <association@prologin.org>
# SPDX-License-Identifier: GPL-3.0+

import logging

import numpy as np
from django.conf import settings

from autodiff.nn import Initializer, Module
from autodiff.tensor import as_tensor
from backbone.blocks import Backbone
from encoder.embedding import PatchEncoder
from objective.heads import HorizonHeads
from tracelib.utils import step_generator

logger = logging.getLogger(__name__)

# (seed, step) streams feed the batches; initialization draws from
# (seed, INIT_STREAM, 1), which no step stream can reach
INIT_STREAM = 0x1717


class TraceModel(Module):
    """Patch encoder, TR-MoE backbone and forecasting heads."""

    def __init__(self, config, init):
        super().__init__()
        self.config = config
        d = config.model.d
        self.encoder = PatchEncoder(
            config.encoder, d, config.data.patch_len, init
        )
        self.backbone = Backbone(config.model, config.routing, init)
        self.heads = HorizonHeads(
            d, config.data.patch_len, config.loss.horizons, init
        )

    @property
    def dtype(self):
        return self.parameters()[0].dtype

    def forward(self, patches):
        """
        Encode (batch, channels, steps, t) patches; return the final hidden
        states, the per-horizon predictions and the routing record.
        """
        patches = as_tensor(np.asarray(patches, dtype=self.dtype))
        hidden, record = self.backbone(self.encoder(patches))
        return hidden, self.heads(hidden), record


def run_dtype(config):
    precision = config.train.precision
    return np.dtype(
        precision.value if precision is not None else settings.TRACE_RUN_DTYPE
    )


def init_params(config, seed=None, dtype=None):
    """
    Build a model whose parameters are a pure function of the config and
    `seed` (default train.seed).
    """
    seed = config.train.seed if seed is None else seed
    dtype = run_dtype(config) if dtype is None else np.dtype(dtype)
    rng = step_generator(seed, INIT_STREAM, 1)
    model = TraceModel(config, Initializer(rng, dtype))
    logger.debug(
        "initialized %d parameters (seed %d, %s)",
        count_parameters(model),
        seed,
        dtype,
    )
    return model


def count_parameters(model):
    return sum(p.data.size for p in model.parameters())
