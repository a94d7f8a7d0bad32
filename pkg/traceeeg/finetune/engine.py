# Copyright (C) <2026> Association Prologin <association@prologin.org>
# SPDX-License-Identifier: GPL-3.0+

"""
End-to-end fine-tuning of a pre-trained model on labeled windows, with
the best epoch chosen by validation balanced accuracy.
"""

from collections import OrderedDict
from dataclasses import dataclass, field
import logging
import os

import numpy as np
from scipy.special import softmax

from autodiff import functional as F
from autodiff.nn import Initializer
from autodiff.tensor import ComputeGraph, backward
from finetune.head import Classifier, ClassifierHead
from finetune.metrics import compute_metrics
from recordings.windows import load_windows
from tracelib.exceptions import NonFiniteError, TrainingDataError
from tracelib.utils import save_random_state, step_generator
from training.checkpoint import Checkpoint, save_checkpoint
from training.model import init_params
from training.optim import AdamW, clip_grad_norm, lr_at_step

logger = logging.getLogger(__name__)

HEAD_STREAM = 0x4EAD
SHUFFLE_STREAM = 0x5F1F
DROPOUT_STREAM = 0xD209


def build_classifier(config, classes, checkpoint=None, dtype=None):
    """
    Classifier over the encoder and backbone of `checkpoint` (a fresh
    initialization without one) and a new head seeded by finetune.seed.
    """
    model = init_params(config, dtype=dtype)
    if checkpoint is not None:
        model.load_state_dict(checkpoint.params)
    init = Initializer(
        step_generator(config.finetune.seed, HEAD_STREAM, 1), model.dtype
    )
    head = ClassifierHead(
        config.model.d, classes, config.finetune.dropout, init
    )
    classifier = Classifier(model, head)
    if config.finetune.freeze_backbone:
        classifier.freeze_backbone()
    return classifier


def predict(classifier, windows, batch_size):
    """(predicted classes, class probabilities) over every window."""
    classifier.eval()
    probabilities = []
    for start in range(0, len(windows), batch_size):
        indices = range(start, min(start + batch_size, len(windows)))
        logits = classifier(windows.stack(indices, dtype=classifier.dtype))
        probabilities.append(softmax(logits.data, axis=-1))
    probabilities = np.concatenate(probabilities)
    return probabilities.argmax(axis=-1), probabilities


def evaluate(classifier, windows, batch_size, classes):
    predictions, probabilities = predict(classifier, windows, batch_size)
    return compute_metrics(
        windows.label_array(),
        predictions,
        scores=probabilities if classes == 2 else None,
        classes=list(range(classes)),
    )


@dataclass
class FinetuneResult:
    report: object
    best_epoch: int
    validation: list = field(default_factory=list)
    classifier: object = None


def _split_windows(manifest, config, split):
    subset = manifest.subset(split)
    if not len(subset):
        raise TrainingDataError("no segment in the {} split".format(split))
    windows = load_windows(
        subset, config.data.window_s, config.data.patch_len
    )
    for label in windows.labels:
        if not isinstance(label, (int, np.integer)) or label < 0:
            raise TrainingDataError(
                "{} split: label {!r} is not a class index".format(
                    split, label
                )
            )
    return windows


def finetune_run(checkpoint, manifest, config=None, out_dir=None, dtype=None):
    """
    Fine-tune on the `train` split of a labeled manifest, keep the epoch
    with the best `val` balanced accuracy and score it on `test`.
    `checkpoint` is None for a randomly initialized model.
    """
    if config is None:
        config = checkpoint.config
    ft = config.finetune
    if not manifest.labeled:
        raise TrainingDataError("fine-tuning needs a labeled manifest")
    train = _split_windows(manifest, config, 'train')
    val = _split_windows(manifest, config, 'val')
    test = _split_windows(manifest, config, 'test')

    seen = set(train.labels)
    if len(seen) < 2:
        raise TrainingDataError(
            "single-class training split (class {})".format(seen.pop())
        )
    classes = ft.classes or max(seen) + 1
    if max(seen | set(val.labels) | set(test.labels)) >= classes:
        raise TrainingDataError(
            "labels exceed the {} configured classes".format(classes)
        )

    classifier = build_classifier(config, classes, checkpoint, dtype=dtype)
    optimizer = AdamW(
        classifier.trainable_parameters(), weight_decay=ft.weight_decay
    )
    params = [p for _, p in classifier.trainable_parameters()]
    labels = train.label_array()
    per_epoch = -(-len(train) // ft.batch_size)
    total = ft.epochs * per_epoch

    best, best_epoch, history, step = None, 0, [], 0
    for epoch in range(1, ft.epochs + 1):
        order = step_generator(ft.seed, SHUFFLE_STREAM, epoch).permutation(
            len(train)
        )
        classifier.train()
        for start in range(0, len(train), ft.batch_size):
            step += 1
            indices = order[start : start + ft.batch_size]
            batch = train.stack(indices, dtype=classifier.dtype)
            optimizer.zero_grad()
            with save_random_state([ft.seed, DROPOUT_STREAM, step]):
                with ComputeGraph() as graph:
                    logits = classifier(batch)
                    loss = F.cross_entropy(logits, labels[indices])
            if not np.isfinite(loss.data):
                raise NonFiniteError(
                    'loss', "fine-tuning step {}".format(step)
                )
            backward(graph, loss)
            clip_grad_norm(params, ft.clip_norm)
            optimizer.step(lr_at_step(step, ft.lr, 0, total))

        score = evaluate(classifier, val, ft.batch_size, classes)
        history.append(score.balanced_accuracy)
        logger.info(
            "epoch %d/%d: validation balanced accuracy %.4f",
            epoch,
            ft.epochs,
            score.balanced_accuracy,
        )
        if best is None or score.balanced_accuracy > max(history[:-1]):
            best, best_epoch = classifier.state_dict(), epoch

    classifier.load_state_dict(best)
    report = evaluate(classifier, test, ft.batch_size, classes)
    logger.info(
        "epoch %d kept, test balanced accuracy %.4f",
        best_epoch,
        report.balanced_accuracy,
    )
    if out_dir is not None:
        _write_outputs(out_dir, config, classifier, best_epoch, report)
    return FinetuneResult(report, best_epoch, history, classifier)


def _write_outputs(out_dir, config, classifier, epoch, report):
    os.makedirs(out_dir, exist_ok=True)
    params = OrderedDict(
        (name, p.data) for name, p in classifier.named_parameters()
    )
    save_checkpoint(
        Checkpoint(config.dumps(), params, step=epoch),
        os.path.join(out_dir, 'best.trck'),
    )
    path = os.path.join(out_dir, 'report.txt')
    try:
        with open(path, 'w', encoding='utf-8') as f:
            f.write(str(report))
    except OSError as exc:
        raise OSError(
            exc.errno, "cannot write report: {}".format(exc.strerror), path
        ) from exc
