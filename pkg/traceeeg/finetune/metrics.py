# Copyright (C) <2026> Association Prologin <association@prologin.org>
# SPDX-License-Identifier: GPL-3.0+

"""
Classification metrics: balanced accuracy, Cohen's kappa, weighted F1 and,
for binary tasks, the areas under the ROC and precision-recall curves.
"""

from dataclasses import dataclass, field
import warnings

import numpy as np
from scipy.integrate import trapezoid

from tracelib.exceptions import ParameterError


def confusion_matrix(labels, predictions, classes):
    """Counts indexed [true class, predicted class]."""
    index = {c: i for i, c in enumerate(classes)}
    matrix = np.zeros((len(classes), len(classes)), dtype=np.int64)
    for truth, guess in zip(labels, predictions):
        matrix[index[truth], index[guess]] += 1
    return matrix


def _ratio(numerator, denominator):
    return np.divide(
        numerator,
        denominator,
        out=np.zeros(len(numerator)),
        where=denominator > 0,
    )


def balanced_accuracy(matrix, classes=None):
    """
    Mean recall over the classes present in the labels; absent classes are
    left out with a RuntimeWarning.
    """
    support = matrix.sum(axis=1)
    present = support > 0
    if not np.all(present):
        absent = np.flatnonzero(~present)
        if classes is not None:
            absent = [classes[i] for i in absent]
        warnings.warn(
            "classes {} absent from the labels, left out of the "
            "balanced accuracy".format(list(absent)),
            RuntimeWarning,
        )
    recall = np.diag(matrix)[present] / support[present]
    return float(np.mean(recall))


def cohen_kappa(matrix):
    total = matrix.sum()
    observed = np.trace(matrix) / total
    chance = float(matrix.sum(axis=1) @ matrix.sum(axis=0)) / total ** 2
    if chance == 1.0:
        # a single class in both labels and predictions
        return 1.0 if observed == 1.0 else 0.0
    return float((observed - chance) / (1.0 - chance))


def per_class(matrix):
    """(precision, recall, f1, support) arrays; 0 where undefined."""
    hits = np.diag(matrix).astype(float)
    support = matrix.sum(axis=1)
    precision = _ratio(hits, matrix.sum(axis=0))
    recall = _ratio(hits, support)
    f1 = _ratio(2 * precision * recall, precision + recall)
    return precision, recall, f1, support


def weighted_f1(matrix):
    _, _, f1, support = per_class(matrix)
    return float(f1 @ support / support.sum())


def _ranking_curve(labels, scores):
    """
    Cumulative (true positives, false positives) after each group of tied
    scores, thresholds taken in decreasing order.
    """
    labels = np.asarray(labels, dtype=bool)
    scores = np.asarray(scores, dtype=float)
    if labels.shape != scores.shape or labels.ndim != 1:
        raise ParameterError("labels and scores must be matching vectors")
    if labels.all() or not labels.any():
        raise ParameterError("ranking metrics need both classes")
    order = np.argsort(-scores, kind='stable')
    scores, labels = scores[order], labels[order]
    # last index of every group of equal scores
    ends = np.r_[np.flatnonzero(np.diff(scores)), len(scores) - 1]
    tps = np.cumsum(labels)[ends]
    fps = (ends + 1) - tps
    return tps, fps


def auroc(labels, scores):
    """Trapezoidal area under the ROC curve; tied scores count one half."""
    tps, fps = _ranking_curve(labels, scores)
    tpr = np.r_[0.0, tps / tps[-1]]
    fpr = np.r_[0.0, fps / fps[-1]]
    return float(trapezoid(tpr, fpr))


def auc_pr(labels, scores):
    """Average precision: precision summed over recall increments."""
    tps, fps = _ranking_curve(labels, scores)
    precision = tps / (tps + fps)
    recall = tps / tps[-1]
    return float(np.sum(np.diff(np.r_[0.0, recall]) * precision))


@dataclass
class MetricReport:
    classes: list
    confusion: np.ndarray
    balanced_accuracy: float
    kappa: float
    weighted_f1: float
    precision: np.ndarray = field(repr=False, default=None)
    recall: np.ndarray = field(repr=False, default=None)
    support: np.ndarray = field(repr=False, default=None)
    auroc: object = None
    auc_pr: object = None

    def items(self):
        yield 'balanced_accuracy', self.balanced_accuracy
        yield 'kappa', self.kappa
        yield 'weighted_f1', self.weighted_f1
        if self.auroc is not None:
            yield 'auroc', self.auroc
            yield 'auc_pr', self.auc_pr

    def lines(self):
        for key, value in self.items():
            yield '{}: {:.6f}'.format(key, value)
        yield ''
        yield 'class\tprecision\trecall\tsupport'
        for c, p, r, s in zip(
            self.classes, self.precision, self.recall, self.support
        ):
            yield '{}\t{:.4f}\t{:.4f}\t{}'.format(c, p, r, s)
        yield ''
        yield 'confusion (rows: labels, columns: predictions)'
        yield '\t' + '\t'.join(str(c) for c in self.classes)
        for c, row in zip(self.classes, self.confusion):
            yield '{}\t{}'.format(c, '\t'.join(str(n) for n in row))

    def __str__(self):
        return '\n'.join(self.lines()) + '\n'


def compute_metrics(labels, predictions, scores=None, classes=None):
    """
    `scores` are positive-class scores (or (n, 2) class probabilities) and
    enable the ranking metrics; they need a binary task.
    """
    labels = list(labels)
    predictions = list(predictions)
    if len(labels) != len(predictions):
        raise ParameterError(
            "{} labels for {} predictions".format(
                len(labels), len(predictions)
            )
        )
    if not labels:
        raise ParameterError("no sample to score")
    if classes is None:
        classes = sorted(set(labels) | set(predictions))
    matrix = confusion_matrix(labels, predictions, classes)
    precision, recall, _, support = per_class(matrix)
    report = MetricReport(
        classes=list(classes),
        confusion=matrix,
        balanced_accuracy=balanced_accuracy(matrix, classes),
        kappa=cohen_kappa(matrix),
        weighted_f1=weighted_f1(matrix),
        precision=precision,
        recall=recall,
        support=support,
    )
    if scores is not None:
        if len(classes) != 2:
            raise ParameterError("ranking metrics need a binary task")
        scores = np.asarray(scores, dtype=float)
        if scores.ndim == 2:
            scores = scores[:, 1]
        positive = np.asarray(labels) == classes[1]
        report.auroc = auroc(positive, scores)
        report.auc_pr = auc_pr(positive, scores)
    return report
