# Copyright (C) <2026> Association Prologin <association@prologin.org>
# SPDX-License-Identifier: GPL-3.0+

from dataclasses import dataclass

from tracelib.config import ConfigSection, option
from tracelib.utils import ChoiceEnum


class RoutingMode(ChoiceEnum):
    # one decision per step from the TemporalFormer context
    temporal = 'temporal'
    # one decision per token from the token itself
    token = 'token'
    # one decision per step from the channel mean
    mean = 'mean'
    # no experts, a single feed-forward network
    dense = 'dense'


@dataclass
class ModelConfig(ConfigSection):
    section = 'model'

    layers: int = option(12, int)
    d: int = option(200, int)
    heads: int = option(8, int)
    ffn_dim: int = option(800, int)
    tf_queries: int = option(4, int)
    tf_heads: int = option(4, int)
    rope_base: float = option(10000.0, float)
    norm_eps: float = option(1e-6, float)

    def clean(self):
        self.require(self.layers >= 1, "at least one layer")
        self.require(self.d >= 1, "d must be positive")
        self.require(
            self.heads >= 1 and self.d % self.heads == 0,
            "d={} is not divisible by {} heads".format(self.d, self.heads),
        )
        self.require(
            self.tf_heads >= 1 and self.d % self.tf_heads == 0,
            "d={} is not divisible by {} TemporalFormer heads".format(
                self.d, self.tf_heads
            ),
        )
        self.require(self.tf_queries >= 1, "at least one query token")
        self.require(self.ffn_dim >= 1, "ffn_dim must be positive")
        self.require(self.norm_eps > 0, "norm_eps must be positive")


@dataclass
class RoutingConfig(ConfigSection):
    section = 'routing'

    mode: RoutingMode = option(RoutingMode.temporal, RoutingMode)
    experts: int = option(64, int)
    topk: int = option(8, int)
    shared: bool = option(True, bool)
    # intermediate width of every expert; auto is ffn_dim // topk
    expert_dim: int = option(None, int, optional=True)

    def clean(self):
        self.require(
            1 <= self.topk <= self.experts,
            "need 1 <= topk ({}) <= experts ({})".format(
                self.topk, self.experts
            ),
        )
        self.require(
            self.expert_dim is None or self.expert_dim >= 1,
            "expert_dim must be positive",
        )

    def expert_width(self, model):
        if self.expert_dim is not None:
            return self.expert_dim
        return max(1, model.ffn_dim // self.topk)
