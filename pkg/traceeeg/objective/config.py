# Copyright (C) <2026> Association Prologin <association@prologin.org>
# SPDX-License-Identifier: GPL-3.0+

from dataclasses import dataclass

from tracelib.config import ConfigSection, option
from tracelib.utils import ChoiceEnum


class AuxProbDomain(ChoiceEnum):
    # softmax over every router logit
    all = 'all'
    # gate values of the selected experts only
    topk = 'topk'


@dataclass
class LossConfig(ConfigSection):
    section = 'loss'

    horizons: tuple = option((1, 2, 4), tuple, item=int)
    huber_delta: float = option(1.0, float)
    lambda_aux: float = option(1e-2, float)
    aux_prob_domain: AuxProbDomain = option(AuxProbDomain.all, AuxProbDomain)

    def clean(self):
        self.require(self.horizons, "at least one horizon")
        self.require(
            all(h >= 1 for h in self.horizons), "horizons must be positive"
        )
        self.require(
            len(set(self.horizons)) == len(self.horizons),
            "horizons must be distinct",
        )
        self.require(self.huber_delta > 0, "huber_delta must be positive")
        self.require(self.lambda_aux >= 0, "lambda_aux must be >= 0")
