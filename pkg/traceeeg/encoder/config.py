# Copyright (C) <2026> Association Prologin <association@prologin.org>
# SPDX-License-Identifier: GPL-3.0+

from dataclasses import dataclass

from tracelib.config import ConfigSection, option
from tracelib.utils import ChoiceEnum


class Branches(ChoiceEnum):
    both = 'both'
    time = 'time'
    freq = 'freq'


class Fusion(ChoiceEnum):
    gate = 'gate'
    sum = 'sum'


@dataclass
class EncoderConfig(ConfigSection):
    section = 'encoder'

    kernels: tuple = option((25, 49, 99), tuple, item=int)
    stride: int = option(25, int)
    filters: int = option(8, int)
    groups: int = option(4, int)
    chpe_kernels: tuple = option((5, 11, 19), tuple, item=int)
    spectral_log: bool = option(True, bool)
    branches: Branches = option(Branches.both, Branches)
    fusion: Fusion = option(Fusion.gate, Fusion)

    def clean(self):
        self.require(self.kernels, "at least one temporal kernel")
        self.require(
            all(k >= 1 for k in self.kernels + self.chpe_kernels),
            "kernel sizes must be positive",
        )
        self.require(self.stride >= 1, "stride must be positive")
        self.require(
            self.filters >= 1 and self.groups >= 1,
            "filters and groups must be positive",
        )
        self.require(
            self.filters % self.groups == 0,
            "{} filters cannot be split into {} groups".format(
                self.filters, self.groups
            ),
        )
