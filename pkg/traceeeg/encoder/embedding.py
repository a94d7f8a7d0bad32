# Copyright (C) <2026> Association Prologin <association@prologin.org>
# SPDX-License-Identifier: GPL-3.0+

"""
Patch embeddings: multi-scale convolutions over the waveform, a masked
magnitude spectrum, their gated fusion, and the channel positional
encoding.

Every forward takes a (batch, channels, steps, patch_len) grid.
"""

from autodiff import functional as F
from autodiff.nn import Module
from autodiff.tensor import as_tensor
from encoder.config import Branches, Fusion
from encoder.patches import conv_length
from tracelib.exceptions import (
    ConfigurationError,
    ContractViolation,
    ParameterError,
)


class ConvBranch(Module):
    """Conv(q, stride) -> GN -> GELU -> Conv(3, pad 1) -> GN -> GELU."""

    def __init__(self, kernel, stride, filters, groups, init):
        super().__init__()
        self.kernel = kernel
        self.stride = stride
        self.groups = groups
        self.conv1 = init.uniform((filters, 1, kernel), fan_in=kernel)
        self.norm1_weight = init.ones((filters,))
        self.norm1_bias = init.zeros((filters,))
        self.conv2 = init.uniform((filters, filters, 3), fan_in=3 * filters)
        self.norm2_weight = init.ones((filters,))
        self.norm2_bias = init.zeros((filters,))

    def forward(self, x):
        h = F.conv1d(x, self.conv1, stride=self.stride)
        h = F.gelu(
            F.group_norm(h, self.norm1_weight, self.norm1_bias, self.groups)
        )
        h = F.conv1d(h, self.conv2, padding=1)
        h = F.gelu(
            F.group_norm(h, self.norm2_weight, self.norm2_bias, self.groups)
        )
        return h.reshape(h.shape[0], -1)


class ChannelConv(Module):
    """Depth-wise convolution along the channel axis, one step at a time."""

    def __init__(self, kernel, d, init):
        super().__init__()
        self.kernel = kernel
        self.weight = init.zeros((d, kernel))
        self.bias = init.zeros((d,))

    def forward(self, x):
        return F.dwconv1d(x, self.weight, self.bias)


class PatchEncoder(Module):
    def __init__(self, config, d, patch_len, init):
        super().__init__()
        self.config = config
        self.d = d
        self.patch_len = patch_len
        self.bins = patch_len // 2 + 1

        if config.branches != Branches.freq:
            largest = max(config.kernels)
            if largest > patch_len:
                raise ParameterError(
                    "patch length {} is shorter than kernel {}".format(
                        patch_len, largest
                    )
                )
            self.branches = [
                ConvBranch(
                    q, config.stride, config.filters, config.groups, init
                )
                for q in config.kernels
            ]
            self.flat_width = sum(
                config.filters * conv_length(patch_len, q, config.stride)
                for q in config.kernels
            )
            self.temporal_proj = init.uniform(
                (self.flat_width, d), fan_in=self.flat_width
            )

        if config.branches != Branches.time:
            self.mask_re = init.ones((self.bins,))
            self.mask_im = init.zeros((self.bins,))
            self.spectral_weight = init.uniform(
                (self.bins, d), fan_in=self.bins
            )
            self.spectral_bias = init.uniform((d,), fan_in=self.bins)

        if config.branches == Branches.both and config.fusion == Fusion.gate:
            self.gate_weight = init.uniform((2 * d, d), fan_in=2 * d)

        self.chpe = [ChannelConv(k, d, init) for k in config.chpe_kernels]

    def _check_grid(self, grid):
        grid = as_tensor(grid)
        if grid.ndim != 4:
            raise ContractViolation(
                "expected a (batch, channels, steps, patch) grid, "
                "got shape {}".format(grid.shape)
            )
        return grid

    def temporal_embed(self, grid):
        grid = self._check_grid(grid)
        batch, channels, steps, t = grid.shape
        if t != self.patch_len:
            raise ParameterError(
                "patch length {} for an encoder built for {}".format(
                    t, self.patch_len
                )
            )
        x = grid.reshape(batch * channels * steps, 1, t)
        flat = F.concat([branch(x) for branch in self.branches], axis=-1)
        e = flat @ self.temporal_proj
        return e.reshape(batch, channels, steps, self.d)

    def spectral_embed(self, grid):
        grid = self._check_grid(grid)
        bins = grid.shape[-1] // 2 + 1
        if bins != self.mask_re.shape[0]:
            raise ConfigurationError(
                "spectral mask has {} bins, patches of length {} have {}"
                .format(self.mask_re.shape[0], grid.shape[-1], bins)
            )
        spectrum = F.rdft_magnitude(grid, self.mask_re, self.mask_im)
        if self.config.spectral_log:
            spectrum = F.log1p(spectrum)
        return F.linear(spectrum, self.spectral_weight, self.spectral_bias)

    def gated_fuse(self, e_temp, e_freq):
        """e = e_temp + z * e_freq with z = sigmoid(W_g [e_temp; e_freq])."""
        if e_temp.shape != e_freq.shape:
            raise ContractViolation(
                "cannot fuse {} with {}".format(e_temp.shape, e_freq.shape)
            )
        if self.config.fusion == Fusion.sum:
            return e_temp + e_freq
        gate = self.gate(e_temp, e_freq)
        return e_temp + gate * e_freq

    def gate(self, e_temp, e_freq):
        both = F.concat([e_temp, e_freq], axis=-1)
        return F.sigmoid(both @ self.gate_weight)

    def ms_chpe(self, e):
        batch, channels, steps, d = e.shape
        x = e.permute(0, 2, 3, 1).reshape(batch * steps, d, channels)
        position = None
        for conv in self.chpe:
            out = conv(x)
            position = out if position is None else position + out
        if position is None:
            return e
        position = position.reshape(batch, steps, d, channels)
        return e + position.permute(0, 3, 1, 2)

    def embed(self, grid):
        """Fused patch embeddings before the positional encoding."""
        grid = self._check_grid(grid)
        if self.config.branches == Branches.time:
            return self.temporal_embed(grid)
        if self.config.branches == Branches.freq:
            return self.spectral_embed(grid)
        return self.gated_fuse(
            self.temporal_embed(grid), self.spectral_embed(grid)
        )

    def forward(self, grid):
        grid = self._check_grid(grid)
        if grid.dtype != self.dtype:
            grid = as_tensor(grid.data.astype(self.dtype))
        return self.ms_chpe(self.embed(grid))

    @property
    def dtype(self):
        return self.parameters()[0].dtype
