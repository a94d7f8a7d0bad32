# Copyright (C) <2026> Association Prologin <association@prologin.org>
# SPDX-License-Identifier: GPL-3.0+

"""
Causal spatial-temporal attention and the TemporalFormer routing context.

Hidden states are (batch, channels, steps, d) tensors throughout.
"""

import math

import numpy as np

from autodiff import functional as F
from autodiff.nn import Module


def causal_mask(steps, dtype=np.float64):
    """Additive (steps, steps) mask: 0 where j' <= j, -inf elsewhere."""
    keep = np.tril(np.ones((steps, steps), dtype=bool))
    return np.where(keep, 0.0, -np.inf).astype(dtype)


def prefix_mask(channels, steps, dtype=np.float64):
    """
    Additive (steps, 1, channels * steps) mask over channel-major tokens
    i * steps + j': row j keeps the tokens with j' <= j.
    """
    token_steps = np.tile(np.arange(steps), channels)
    keep = token_steps[None, :] <= np.arange(steps)[:, None]
    return np.where(keep, 0.0, -np.inf).astype(dtype)[:, None, :]


def attention_flops(channels, steps, d):
    """
    Multiply-accumulates of the attention score and mixing products of one
    CSTA layer, per branch.
    """
    return {
        'spatial': 2 * steps * channels * channels * d,
        'temporal': 2 * channels * steps * steps * d,
    }


class CSTA(Module):
    """
    Spatial attention over the channels of each step, causal temporal
    attention over the steps of each channel, both fused by W_o.
    """

    def __init__(self, d, heads, rope_base, init):
        super().__init__()
        self.d = d
        self.heads = heads
        self.head_dim = d // heads
        self.rope_base = rope_base
        self.spatial_q = init.uniform((d, d), fan_in=d)
        self.spatial_k = init.uniform((d, d), fan_in=d)
        self.spatial_v = init.uniform((d, d), fan_in=d)
        self.temporal_q = init.uniform((d, d), fan_in=d)
        self.temporal_k = init.uniform((d, d), fan_in=d)
        self.temporal_v = init.uniform((d, d), fan_in=d)
        self.out_proj = init.zeros((2 * d, d))

    def _split(self, x):
        # (..., tokens, d) -> (..., heads, tokens, head_dim)
        lead = x.shape[:-2]
        tokens = x.shape[-2]
        x = x.reshape(lead + (tokens, self.heads, self.head_dim))
        order = tuple(range(len(lead)))
        k = len(lead)
        return x.permute(*order, k + 1, k, k + 2)

    def _merge(self, x):
        # (..., heads, tokens, head_dim) -> (..., tokens, d)
        lead = x.shape[:-3]
        k = len(lead)
        x = x.permute(*range(k), k + 1, k, k + 2)
        return x.reshape(lead + (x.shape[-3], self.d))

    def _attend(self, q, k, v, mask=None):
        scores = (q @ k.permute(*range(k.ndim - 2), k.ndim - 1, k.ndim - 2))
        scores = scores * (1.0 / math.sqrt(self.head_dim))
        return F.softmax(scores, mask=mask) @ v

    def spatial(self, x):
        # tokens are the channels of one step
        xs = x.permute(0, 2, 1, 3)
        q = self._split(xs @ self.spatial_q)
        k = self._split(xs @ self.spatial_k)
        v = self._split(xs @ self.spatial_v)
        return self._merge(self._attend(q, k, v)).permute(0, 2, 1, 3)

    def temporal(self, x):
        steps = x.shape[2]
        q = F.rope(self._split(x @ self.temporal_q), self.rope_base)
        k = F.rope(self._split(x @ self.temporal_k), self.rope_base)
        v = self._split(x @ self.temporal_v)
        mask = causal_mask(steps, x.dtype)
        return self._merge(self._attend(q, k, v, mask))

    def forward(self, x):
        fused = F.concat([self.spatial(x), self.temporal(x)], axis=-1)
        return fused @ self.out_proj


class TemporalFormer(Module):
    """
    m learnable queries attend over the causal prefix of all channels; the
    query outputs are averaged, layer-normed and passed through a
    feed-forward layer, giving one context vector per step.
    """

    def __init__(self, d, queries, heads, init):
        super().__init__()
        self.d = d
        self.heads = heads
        self.head_dim = d // heads
        self.queries = init.uniform((queries, d), fan_in=d)
        self.q_proj = init.uniform((d, d), fan_in=d)
        self.k_proj = init.uniform((d, d), fan_in=d)
        self.v_proj = init.uniform((d, d), fan_in=d)
        self.out_proj = init.uniform((d, d), fan_in=d)
        self.norm_weight = init.ones((d,))
        self.norm_bias = init.zeros((d,))
        self.ffn_in = init.uniform((d, d), fan_in=d)
        self.ffn_in_bias = init.uniform((d,), fan_in=d)
        self.ffn_out = init.uniform((d, d), fan_in=d)
        self.ffn_out_bias = init.uniform((d,), fan_in=d)

    def forward(self, h):
        batch, channels, steps, d = h.shape
        m = self.queries.shape[0]
        heads, dh = self.heads, self.head_dim
        tokens = channels * steps

        q = (self.queries @ self.q_proj).reshape(m, heads, dh)
        q = q.permute(1, 0, 2)
        flat = h.reshape(batch, tokens, d)
        k = (flat @ self.k_proj).reshape(batch, tokens, heads, dh)
        k = k.permute(0, 2, 3, 1)
        v = (flat @ self.v_proj).reshape(batch, tokens, heads, dh)
        v = v.permute(0, 2, 1, 3).reshape(batch, heads, 1, tokens, dh)

        # (batch, heads, 1, m, tokens), masked per step to the prefix
        scores = (q @ k) * (1.0 / math.sqrt(dh))
        scores = scores.reshape(batch, heads, 1, m, tokens)
        weights = F.softmax(
            scores, mask=prefix_mask(channels, steps, h.dtype)
        )
        out = weights @ v
        out = out.permute(0, 2, 3, 1, 4).reshape(batch, steps, m, d)
        pooled = (out @ self.out_proj).mean(axis=2)
        normed = F.layer_norm(pooled, self.norm_weight, self.norm_bias)
        hidden = F.silu(F.linear(normed, self.ffn_in, self.ffn_in_bias))
        return F.linear(hidden, self.ffn_out, self.ffn_out_bias)
