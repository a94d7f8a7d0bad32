# Copyright (C) <2026> Association Prologin <association@prologin.org>
# SPDX-License-Identifier: GPL-3.0+

from autodiff import functional as F
from autodiff.nn import Module


class HorizonHead(Module):
    def __init__(self, d, horizon, patch_len, init):
        super().__init__()
        self.horizon = horizon
        self.patch_len = patch_len
        self.weight = init.uniform((d, horizon * patch_len), fan_in=d)
        self.bias = init.zeros((horizon * patch_len,))

    def forward(self, h):
        batch, channels, steps, _ = h.shape
        out = F.linear(h, self.weight, self.bias)
        return out.reshape(
            batch, channels, steps, self.horizon, self.patch_len
        )


class HorizonHeads(Module):
    """
    One affine head per horizon: position (i, j) predicts the next rho
    patches from h_{i,j} alone.
    """

    def __init__(self, d, patch_len, horizons, init):
        super().__init__()
        self.horizons = tuple(horizons)
        self.heads = [HorizonHead(d, rho, patch_len, init) for rho in horizons]

    def forward(self, h):
        """{rho: (batch, channels, steps, rho, patch_len)} predictions."""
        return {
            head.horizon: head(h) for head in self.heads
        }

    def head(self, horizon):
        for head in self.heads:
            if head.horizon == horizon:
                return head
        raise KeyError(horizon)
