# Copyright (C) <2026> Association Prologin <association@prologin.org>
# SPDX-License-Identifier: GPL-3.0+

"""Multi-horizon forecasting loss, expert balancing loss and their sum."""

from dataclasses import dataclass, field

import numpy as np

from autodiff import functional as F
from autodiff.tensor import Tensor, as_tensor
from objective.config import AuxProbDomain
from tracelib.exceptions import ParameterError, TrainingDataError


def huber(residual, delta=1.0):
    """Mean over elements of 0.5 r^2 (|r| <= delta), delta (|r| - delta/2)."""
    if delta <= 0:
        raise ParameterError("huber delta must be positive")
    return F.huber(as_tensor(residual), delta).mean()


def valid_positions(steps, horizon):
    """Steps j with j + horizon patches still inside the window."""
    return max(steps - horizon, 0)


def horizon_targets(patches, horizon):
    """
    (batch, channels, steps - horizon, horizon, t) targets: position j is
    paired with the patches j+1 .. j+horizon.
    """
    valid = valid_positions(patches.shape[2], horizon)
    return np.stack(
        [patches[:, :, 1 + k : 1 + k + valid] for k in range(horizon)],
        axis=3,
    )


def ar_loss(predictions, patches, horizons, delta=1.0):
    """
    Mean over horizons of the mean Huber loss over valid positions;
    horizons without any valid position are left out. Returns the loss
    tensor and the per-horizon values.
    """
    patches = np.asarray(patches)
    steps = patches.shape[2]
    terms = []
    breakdown = {}
    for horizon in horizons:
        valid = valid_positions(steps, horizon)
        if not valid:
            continue
        prediction = F.take(predictions[horizon], np.arange(valid), axis=2)
        target = horizon_targets(patches, horizon).astype(prediction.dtype)
        term = huber(prediction - Tensor(target), delta)
        terms.append(term)
        breakdown[horizon] = float(term.data)
    if not terms:
        raise TrainingDataError(
            "window too short for any horizon ({} steps, horizons {})".format(
                steps, tuple(horizons)
            )
        )
    total = terms[0]
    for term in terms[1:]:
        total = total + term
    return total * (1.0 / len(terms)), breakdown


def aux_loss(record, experts, domain=AuxProbDomain.all):
    """
    N * sum_k f_k p_k pooled over every decision of every layer: f_k is the
    fraction of decisions selecting k (a constant), p_k the mean routing
    probability of k. Returns (loss, f, p), or (None, None, None) for a
    record without decisions.
    """
    layers = list(record)
    if not layers:
        return None, None, None
    domain = AuxProbDomain.parse(domain)
    selected = np.concatenate([layer.selected for layer in layers])
    counts = np.zeros(experts)
    for column in selected.T:
        counts += np.bincount(column, minlength=experts)
    f = counts / len(selected)

    parts = []
    for layer in layers:
        if domain == AuxProbDomain.all:
            tensor, values = layer.probs_tensor, layer.probs
        else:
            tensor, values = layer.dense_gates_tensor, layer.dense_gates
        parts.append(tensor if tensor is not None else Tensor(values))
    stacked = parts[0] if len(parts) == 1 else F.concat(parts, axis=0)
    p = stacked.mean(axis=0)
    loss = (p * Tensor(f.astype(p.dtype))).sum() * float(experts)
    return loss, f, p.data


def total_loss(ar, aux, lambda_aux):
    if lambda_aux < 0:
        raise ParameterError("lambda_aux must be >= 0")
    if aux is None:
        return ar
    return ar + aux * float(lambda_aux)


@dataclass
class LossReport:
    horizon_losses: dict
    ar: float
    aux: object
    lambda_aux: float
    total: float
    f: object = None
    p: object = None
    horizons: tuple = field(default=())

    def as_row(self, step, lr):
        """Run-log fields: step, lr, L_AR per horizon, L_aux, total."""
        row = [str(step), repr(float(lr))]
        for horizon in self.horizons:
            value = self.horizon_losses.get(horizon)
            row.append('' if value is None else repr(value))
        row.append('' if self.aux is None else repr(self.aux))
        row.append(repr(self.total))
        return row


def pretrain_loss(predictions, patches, record, loss_config, experts):
    """Total loss tensor and its LossReport."""
    ar, breakdown = ar_loss(
        predictions, patches, loss_config.horizons, loss_config.huber_delta
    )
    aux, f, p = aux_loss(record, experts, loss_config.aux_prob_domain)
    total = total_loss(ar, aux, loss_config.lambda_aux)
    report = LossReport(
        horizon_losses=breakdown,
        ar=float(ar.data),
        aux=None if aux is None else float(aux.data),
        lambda_aux=loss_config.lambda_aux,
        total=float(total.data),
        f=f,
        p=p,
        horizons=tuple(loss_config.horizons),
    )
    return total, report
