# Copyright (C) <2026> Association Prologin <association@prologin.org>
# SPDX-License-Identifier: GPL-3.0+

"""
Top-K routing and the cross-channel temporal-routing feed-forward layer.

Tokens are dispatched in *groups*: every token of a group receives the same
expert set and gate values. In temporal and mean modes a group is the C
channels of one (sample, step); in token mode every token is its own group.
"""

from dataclasses import dataclass

import numpy as np

from autodiff import functional as F
from autodiff.nn import Module
from backbone.config import RoutingMode
from tracelib.exceptions import ConfigurationError


@dataclass
class LayerRouting:
    """Routing decisions of one layer, one row per group."""

    # (groups, K) expert indices, decreasing logit order
    selected: np.ndarray
    # (groups, K) gate values over `selected`
    gates: np.ndarray
    # (groups, N) gates scattered over all experts
    dense_gates: np.ndarray
    # (groups, N) softmax over all router logits
    probs: np.ndarray
    # (groups, d) routing contexts
    context: np.ndarray
    # group grid, e.g. (batch, steps) or (batch, steps, channels)
    layout: tuple
    # differentiable versions of probs and dense_gates for the aux loss
    probs_tensor: object = None
    dense_gates_tensor: object = None

    @property
    def experts(self):
        return self.probs.shape[-1]

    @property
    def topk(self):
        return self.selected.shape[-1]

    def grid(self, values):
        """Reshape a per-group array to `layout`."""
        return values.reshape(self.layout + values.shape[1:])


@dataclass
class RoutingRecord:
    """Per-layer routing of one forward pass; empty in dense mode."""

    layers: list

    def __len__(self):
        return len(self.layers)

    def __iter__(self):
        return iter(self.layers)

    @property
    def decisions(self):
        return sum(len(layer.selected) for layer in self.layers)

    def selected(self):
        """(layers, groups, K) expert indices."""
        return np.stack([layer.selected for layer in self.layers])


class Router(Module):
    def __init__(self, d, experts, topk, init):
        super().__init__()
        self.topk = topk
        self.weight = init.uniform((d, experts), fan_in=d)

    def forward(self, context):
        """
        Route (groups, d) contexts; return the top-K gates, the same gates
        scattered over all experts, the full-softmax probabilities and the
        selected indices.
        """
        logits = context @ self.weight
        experts = logits.shape[-1]
        values, selected = F.topk(logits, self.topk)
        gates = F.softmax(values)
        dense = F.put_along(gates, selected, experts)
        probs = F.softmax(logits)
        return gates, dense, probs, selected


class Expert(Module):
    """Two-layer SiLU network without biases; output layer starts at 0."""

    def __init__(self, d, width, init):
        super().__init__()
        self.w_in = init.uniform((d, width), fan_in=d)
        self.w_out = init.zeros((width, d))

    def forward(self, x):
        return F.silu(x @ self.w_in) @ self.w_out


class CTRFFN(Module):
    def __init__(self, model, routing, init):
        super().__init__()
        self.mode = RoutingMode.parse(routing.mode)
        self.d = model.d
        if self.mode == RoutingMode.dense:
            self.ffn = Expert(model.d, model.ffn_dim, init)
            return
        width = routing.expert_width(model)
        self.topk = routing.topk
        self.router = Router(model.d, routing.experts, routing.topk, init)
        self.experts = [
            Expert(model.d, width, init) for _ in range(routing.experts)
        ]
        if routing.shared:
            self.shared = Expert(model.d, width, init)

    def forward(self, u, context=None):
        """
        Mix experts over normalized tokens `u` (batch, channels, steps, d).
        `context` is the (batch, steps, d) TemporalFormer output, required
        in temporal mode. Returns the output and a LayerRouting (None in
        dense mode).
        """
        batch, channels, steps, d = u.shape
        if self.mode == RoutingMode.dense:
            return self.ffn(u), None

        # (groups, members, d)
        if self.mode == RoutingMode.token:
            x = u.permute(0, 2, 1, 3).reshape(batch * steps * channels, 1, d)
            layout = (batch, steps, channels)
            route_on = x.reshape(batch * steps * channels, d)
        else:
            x = u.permute(0, 2, 1, 3).reshape(batch * steps, channels, d)
            layout = (batch, steps)
            if self.mode == RoutingMode.temporal:
                if context is None:
                    raise ConfigurationError(
                        "temporal routing needs a context"
                    )
                route_on = context.reshape(batch * steps, d)
            elif self.mode == RoutingMode.mean:
                route_on = x.mean(axis=1)
            else:
                raise ConfigurationError(
                    "unknown routing mode {!r}".format(self.mode)
                )

        gates, dense, probs, selected = self.router(route_on)
        groups = x.shape[0]
        out = None
        for e, expert in enumerate(self.experts):
            rows = np.flatnonzero((selected == e).any(axis=1))
            if not len(rows):
                continue
            weight = F.take(F.take(dense, rows, axis=0), [e], axis=1)
            contribution = expert(F.take(x, rows, axis=0))
            contribution = contribution * weight.reshape(len(rows), 1, 1)
            contribution = F.scatter_rows(contribution, rows, groups)
            out = contribution if out is None else out + contribution
        if hasattr(self, 'shared'):
            out = self.shared(x) if out is None else out + self.shared(x)

        out = out.reshape(batch, steps, channels, d).permute(0, 2, 1, 3)
        routing = LayerRouting(
            selected=selected,
            gates=gates.data,
            dense_gates=dense.data,
            probs=probs.data,
            context=route_on.data,
            layout=layout,
            probs_tensor=probs,
            dense_gates_tensor=dense,
        )
        return out, routing
