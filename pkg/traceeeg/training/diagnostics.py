# Copyright (C) <2026> Association Prologin <association@prologin.org>
# SPDX-License-Identifier: GPL-3.0+

"""
Finite-difference checks of every trainable component at a reduced size.

Zero-initialized layers would hide most of the gradient paths, so every
parameter is redrawn from a normal distribution before checking.
"""

from collections import OrderedDict
import logging

import numpy as np
from django.conf import settings

from autodiff.gradcheck import finite_diff_check
from autodiff.nn import Initializer
from autodiff.tensor import Tensor
from backbone.attention import CSTA, TemporalFormer
from backbone.config import RoutingMode
from backbone.routing import CTRFFN
from encoder.embedding import PatchEncoder
from objective.heads import HorizonHeads
from objective.losses import ar_loss, aux_loss, huber
from tracelib.utils import step_generator
from training.config import RunConfig

logger = logging.getLogger(__name__)

CHECK_STREAM = 0x6C6B


def reduced_config(mode=RoutingMode.temporal, extra=()):
    """A small but complete model: d=8, two experts of four, patches of 20."""
    raw = [
        'data.patch_len = 20',
        'encoder.kernels = 5,9',
        'encoder.stride = 5',
        'encoder.filters = 4',
        'encoder.groups = 2',
        'encoder.chpe_kernels = 3,5',
        'model.layers = 1',
        'model.d = 8',
        'model.heads = 2',
        'model.ffn_dim = 16',
        'model.tf_queries = 2',
        'model.tf_heads = 2',
        'routing.mode = {}'.format(RoutingMode.parse(mode)),
        'routing.experts = 4',
        'routing.topk = 2',
        'loss.horizons = 1,2',
    ]
    raw.extend(extra)
    return RunConfig.parse(raw)


def randomize(module, rng, scale=0.5):
    for p in module.parameters():
        p.data = rng.normal(0.0, scale, size=p.shape).astype(p.dtype)
        p.zero_grad()
    return module


class _Case:
    def __init__(self, name, module, inputs, run):
        self.name = name
        self.module = module
        self.inputs = inputs
        self.run = run

    def params(self):
        named = list(self.module.named_parameters()) if self.module else []
        named.extend(
            ('input.{}'.format(i), t) for i, t in enumerate(self.inputs)
        )
        return named


def _cases(config, rng, channels, steps):
    dtype = np.float64
    init = Initializer(rng, dtype)
    d = config.model.d
    t = config.data.patch_len

    def tensor(*shape):
        return Tensor(rng.normal(size=shape), requires_grad=True)

    grid = tensor(2, channels, steps, t)
    encoder = randomize(PatchEncoder(config.encoder, d, t, init), rng)
    weights = rng.normal(size=(2, channels, steps, d))
    yield _Case(
        'encoder',
        encoder,
        [grid],
        lambda: (encoder(grid) * Tensor(weights)).sum(),
    )

    e = tensor(2, channels, steps, d)
    yield _Case(
        'ms_chpe',
        None,
        [e],
        lambda: (encoder.ms_chpe(e) * Tensor(weights)).sum(),
    )

    csta = randomize(
        CSTA(d, config.model.heads, config.model.rope_base, init), rng
    )
    h = tensor(2, channels, steps, d)
    yield _Case(
        'csta', csta, [h], lambda: (csta(h) * Tensor(weights)).sum()
    )

    former = randomize(
        TemporalFormer(
            d, config.model.tf_queries, config.model.tf_heads, init
        ),
        rng,
    )
    context_weights = rng.normal(size=(2, steps, d))
    yield _Case(
        'temporal_former',
        former,
        [h],
        lambda: (former(h) * Tensor(context_weights)).sum(),
    )

    for mode in RoutingMode:
        routing = type(config.routing)(
            mode=mode,
            experts=config.routing.experts,
            topk=config.routing.topk,
            shared=config.routing.shared,
        )
        ffn = randomize(CTRFFN(config.model, routing, init), rng)
        u = tensor(2, channels, steps, d)
        context = tensor(2, steps, d)

        def run(ffn=ffn, u=u, context=context):
            out, _ = ffn(u, context)
            return (out * Tensor(weights)).sum()

        inputs = [u, context] if mode == RoutingMode.temporal else [u]
        yield _Case('ctr_ffn.{}'.format(mode), ffn, inputs, run)

    heads = randomize(HorizonHeads(d, t, config.loss.horizons, init), rng)
    patches = rng.normal(size=(2, channels, steps, t))
    yield _Case(
        'heads',
        heads,
        [h],
        lambda: ar_loss(heads(h), patches, config.loss.horizons)[0],
    )

    residual = tensor(3, 7)
    residual.data *= 2.0
    yield _Case('huber', None, [residual], lambda: huber(residual, 1.0))

    ffn = randomize(CTRFFN(config.model, config.routing, init), rng)
    u = tensor(2, channels, steps, d)
    context = tensor(2, steps, d)

    def balance():
        _, routing = ffn(u, context)
        return aux_loss([routing], config.routing.experts)[0]

    yield _Case('aux_loss', ffn.router, [context], balance)


def gradcheck_suite(seed=0, channels=3, steps=4, max_coords=24):
    """
    {component: GradcheckReport} for every trainable component, in float64.
    """
    config = reduced_config()
    rng = step_generator(seed, CHECK_STREAM)
    reports = OrderedDict()
    for case in _cases(config, rng, channels, steps):
        names, params = zip(*case.params())
        report = finite_diff_check(
            case.run,
            list(params),
            eps=settings.TRACE_GRADCHECK_EPS,
            tol=settings.TRACE_GRADCHECK_TOL,
            names=list(names),
            max_coords=max_coords,
            rng=rng,
        )
        logger.info(
            "%s: max relative error %.3e", case.name, report.max_rel_error
        )
        reports[case.name] = report
    return reports
