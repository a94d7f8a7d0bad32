# Copyright (C) <2026> Association Prologin <association@prologin.org>
# SPDX-License-Identifier: GPL-3.0+

"""
The pre-training loop.

Batches for step `s` are drawn from `(train.seed, s)` alone and the
parameters from `train.seed`, so a run is a pure function of its config
and manifest, and a checkpoint is enough to resume it.
"""

from dataclasses import dataclass, field
import logging
import os

import numpy as np
from django.conf import settings

from autodiff.tensor import ComputeGraph, backward
from objective.losses import pretrain_loss
from recordings.windows import load_windows
from tracelib.exceptions import (
    ConfigurationError,
    NonFiniteError,
    TrainingDataError,
)
from tracelib.utils import sizeof_fmt
from training.checkpoint import load_checkpoint, save_checkpoint, snapshot
from training.model import init_params
from training.optim import AdamW, clip_grad_norm, schedule_lr

logger = logging.getLogger(__name__)


@dataclass
class TrainState:
    config: object
    model: object
    optimizer: object
    step: int = 0

    @classmethod
    def create(cls, config, dtype=None):
        model = init_params(config, dtype=dtype)
        optimizer = AdamW(
            model.named_parameters(),
            weight_decay=config.train.weight_decay,
        )
        return cls(config, model, optimizer)

    @classmethod
    def restore(cls, checkpoint, dtype=None):
        state = cls.create(checkpoint.config, dtype=dtype)
        state.model.load_state_dict(checkpoint.params)
        state.optimizer.load_state_tables(
            checkpoint.optimizer, checkpoint.step
        )
        state.step = checkpoint.step
        return state

    def checkpoint(self):
        return snapshot(self.config, self.model, self.optimizer, self.step)


@dataclass
class StepResult:
    step: int
    lr: float
    grad_norm: float
    report: object


def _first_non_finite(graph, model):
    for name, p in model.named_parameters():
        if not np.all(np.isfinite(p.data)):
            return name
    for i, node in enumerate(graph.nodes):
        if not np.all(np.isfinite(node.output.data)):
            return 'node {} ({})'.format(i, node.primitive)
    return 'loss'


def compute_loss(model, batch, config):
    """Forward pass under a fresh graph: (graph, loss tensor, LossReport)."""
    with ComputeGraph() as graph:
        _, predictions, record = model(batch)
        loss, report = pretrain_loss(
            predictions,
            np.asarray(batch, dtype=model.dtype),
            record,
            config.loss,
            config.routing.experts,
        )
    return graph, loss, report


def train_step(state, batch):
    """
    One optimizer step on `batch` (batch, channels, steps, patch_len):
    loss, backward, global-norm clip, AdamW at the scheduled rate.
    """
    if len(batch) == 0:
        raise TrainingDataError("empty batch")
    config = state.config
    state.step += 1
    lr = schedule_lr(state.step, config.train)
    state.optimizer.zero_grad()

    graph, loss, report = compute_loss(state.model, batch, config)
    if not np.isfinite(loss.data):
        raise NonFiniteError(
            _first_non_finite(graph, state.model),
            "step {}: non-finite loss".format(state.step),
        )
    backward(graph, loss)
    for name, p in state.model.named_parameters():
        if not np.all(np.isfinite(p.grad)):
            raise NonFiniteError(
                name, "step {}: non-finite gradient".format(state.step)
            )

    norm = clip_grad_norm(state.model.parameters(), config.train.clip_norm)
    state.optimizer.step(lr)
    return StepResult(state.step, lr, norm, report)


@dataclass
class PretrainResult:
    checkpoint_path: str
    log_path: str
    history: list = field(default_factory=list)

    def losses(self):
        return [r.report.total for r in self.history]


def _interval(value, default):
    return default if value is None else value


def _open_log(path, resume):
    try:
        return open(path, 'a' if resume else 'w', encoding='utf-8')
    except OSError as exc:
        raise OSError(
            exc.errno, "cannot open run log: {}".format(exc.strerror), path
        ) from exc


def pretrain_run(manifest, config, out_dir, resume=None, dtype=None):
    """
    Train `config.train.steps` steps on the windows of `manifest`, writing
    `run.log`, `usage.tsv`, periodic `step-<s>.trck` checkpoints and
    `last.trck` under `out_dir`. `resume` is a checkpoint path of the
    same run.
    """
    windows = load_windows(
        manifest, config.data.window_s, config.data.patch_len
    )
    if not len(windows):
        raise TrainingDataError("manifest yields no training window")
    sampler = windows.sampler(manifest.weights, config.train.seed)

    if resume is not None:
        checkpoint = load_checkpoint(resume)
        if checkpoint.config_text != config.dumps():
            raise ConfigurationError(
                "{}: checkpoint was written by another config".format(resume)
            )
        state = TrainState.restore(checkpoint, dtype=dtype)
        logger.info("resuming from %s at step %d", resume, state.step)
    else:
        state = TrainState.create(config, dtype=dtype)

    log_interval = _interval(
        config.train.log_interval, settings.TRACE_LOG_INTERVAL
    )
    checkpoint_interval = _interval(
        config.train.checkpoint_interval, settings.TRACE_CHECKPOINT_INTERVAL
    )
    os.makedirs(out_dir, exist_ok=True)
    log_path = os.path.join(out_dir, 'run.log')
    usage_path = os.path.join(out_dir, 'usage.tsv')
    result = PretrainResult(os.path.join(out_dir, 'last.trck'), log_path)

    with _open_log(log_path, resume) as log, _open_log(
        usage_path, resume
    ) as usage:
        for step in range(state.step + 1, config.train.steps + 1):
            indices = sampler.batch_indices(step, config.train.batch_size)
            batch = windows.stack(indices, dtype=state.model.dtype)
            outcome = train_step(state, batch)
            result.history.append(outcome)
            report = outcome.report

            if step % log_interval == 0:
                log.write('\t'.join(report.as_row(step, outcome.lr)) + '\n')
                if report.f is not None:
                    row = [str(step)] + [repr(float(v)) for v in report.f]
                    usage.write('\t'.join(row) + '\n')
                logger.info(
                    "step %d/%d lr %.3g loss %.5f (ar %.5f) |g| %.3g",
                    step,
                    config.train.steps,
                    outcome.lr,
                    report.total,
                    report.ar,
                    outcome.grad_norm,
                )
            if step % checkpoint_interval == 0:
                path = os.path.join(out_dir, 'step-{}.trck'.format(step))
                size = save_checkpoint(state.checkpoint(), path)
                logger.info("wrote checkpoint %s (%s)", path, sizeof_fmt(size))

    size = save_checkpoint(state.checkpoint(), result.checkpoint_path)
    logger.info(
        "wrote checkpoint %s (%s)", result.checkpoint_path, sizeof_fmt(size)
    )
    return result
