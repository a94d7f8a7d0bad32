# Copyright (C) <2026> Association Prologin <association@prologin.org>
# SPDX-License-Identifier: GPL-3.0+

from autodiff import functional as F
from autodiff.nn import Module
from autodiff.tensor import as_tensor
from backbone.attention import CSTA, TemporalFormer
from backbone.config import RoutingMode
from backbone.routing import CTRFFN, RoutingRecord


class TRMoEBlock(Module):
    """
    u  = CSTA(RMSNorm(h)) + h
    h' = CTRFFN(RMSNorm(u), g(h)) + u

    The TemporalFormer reads the block input h.
    """

    def __init__(self, model, routing, init):
        super().__init__()
        self.eps = model.norm_eps
        self.mode = RoutingMode.parse(routing.mode)
        self.attn_norm = init.ones((model.d,))
        self.attention = CSTA(model.d, model.heads, model.rope_base, init)
        self.ffn_norm = init.ones((model.d,))
        if self.mode == RoutingMode.temporal:
            self.temporal_former = TemporalFormer(
                model.d, model.tf_queries, model.tf_heads, init
            )
        self.ffn = CTRFFN(model, routing, init)

    def forward(self, h):
        u = self.attention(F.rms_norm(h, self.attn_norm, self.eps)) + h
        context = None
        if self.mode == RoutingMode.temporal:
            context = self.temporal_former(h)
        mixed, routing = self.ffn(
            F.rms_norm(u, self.ffn_norm, self.eps), context
        )
        return mixed + u, routing


class Backbone(Module):
    def __init__(self, model, routing, init):
        super().__init__()
        self.blocks = [
            TRMoEBlock(model, routing, init) for _ in range(model.layers)
        ]

    def forward(self, e):
        """Run every block; return H^L and the RoutingRecord."""
        h = as_tensor(e)
        layers = []
        for block in self.blocks:
            h, routing = block(h)
            if routing is not None:
                layers.append(routing)
        return h, RoutingRecord(layers)
