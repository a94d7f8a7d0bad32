# Copyright (C) <2026> Association Prologin <association@prologin.org>
# SPDX-License-Identifier: GPL-3.0+

"""AdamW with decoupled weight decay, the learning-rate schedule, clipping."""

from collections import OrderedDict
import math

import numpy as np


def lr_at_step(step, peak, warmup, total, floor=0.0):
    """
    Linear warmup from 0 to `peak` over `warmup` steps, then cosine decay
    to `floor` at step `total`; constant at `floor` afterwards.
    """
    if step < 0:
        raise ValueError("negative step")
    if warmup and step <= warmup:
        return peak * step / warmup
    if step >= total:
        return floor
    progress = (step - warmup) / (total - warmup)
    return floor + 0.5 * (peak - floor) * (1.0 + math.cos(math.pi * progress))


def schedule_lr(step, train_config):
    return lr_at_step(
        step,
        train_config.lr,
        train_config.warmup,
        train_config.steps,
        train_config.lr_floor,
    )


def global_norm(gradients):
    return math.sqrt(sum(float(np.sum(g * g)) for g in gradients))


def clip_grad_norm(params, max_norm):
    """Scale every gradient so the global norm is at most `max_norm`."""
    norm = global_norm([p.grad for p in params])
    if norm > max_norm:
        scale = max_norm / norm
        for p in params:
            p.grad = p.grad * p.dtype.type(scale)
    return norm


class AdamW:
    def __init__(
        self,
        named_params,
        weight_decay=1e-2,
        betas=(0.9, 0.999),
        eps=1e-8,
    ):
        self.params = OrderedDict(named_params)
        self.weight_decay = weight_decay
        self.betas = betas
        self.eps = eps
        self.step_count = 0
        self.exp_avg = OrderedDict(
            (name, np.zeros_like(p.data)) for name, p in self.params.items()
        )
        self.exp_avg_sq = OrderedDict(
            (name, np.zeros_like(p.data)) for name, p in self.params.items()
        )

    def zero_grad(self):
        for p in self.params.values():
            p.zero_grad()

    def step(self, lr):
        self.step_count += 1
        beta1, beta2 = self.betas
        t = self.step_count
        bias_correction1 = 1 - beta1 ** t
        bias_correction2 = 1 - beta2 ** t
        step_size = lr / bias_correction1
        for name, p in self.params.items():
            grad = p.grad
            exp_avg = self.exp_avg[name]
            exp_avg_sq = self.exp_avg_sq[name]
            exp_avg *= beta1
            exp_avg += (1 - beta1) * grad
            exp_avg_sq *= beta2
            exp_avg_sq += (1 - beta2) * grad * grad
            denom = np.sqrt(exp_avg_sq) / math.sqrt(bias_correction2)
            denom += self.eps
            if self.weight_decay:
                p.data *= p.dtype.type(1 - lr * self.weight_decay)
            p.data -= p.dtype.type(step_size) * (exp_avg / denom)

    def state_tables(self):
        """Moments keyed `m/<param>` and `v/<param>`, in parameter order."""
        table = OrderedDict()
        for name in self.params:
            table['m/' + name] = self.exp_avg[name]
        for name in self.params:
            table['v/' + name] = self.exp_avg_sq[name]
        return table

    def load_state_tables(self, table, step):
        for name, p in self.params.items():
            self.exp_avg[name] = np.asarray(
                table['m/' + name], dtype=p.dtype
            ).copy()
            self.exp_avg_sq[name] = np.asarray(
                table['v/' + name], dtype=p.dtype
            ).copy()
        self.step_count = step
