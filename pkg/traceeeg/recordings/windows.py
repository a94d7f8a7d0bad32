# Copyright (C) <2026> Association Prologin <association@prologin.org>
# SPDX-License-Identifier: GPL-3.0+

from dataclasses import dataclass
import logging
import os

import numpy as np

from encoder.patches import patchify
from recordings.filters import preprocess, window_standardize
from recordings.manifest import (
    CorpusManifest,
    ManifestEntry,
    ManifestSampler,
)
from recordings.segments import read_segment, write_segment
from tracelib.exceptions import TrainingDataError

logger = logging.getLogger(__name__)


@dataclass
class WindowSet:
    """Patch grids cut from a manifest, in manifest order."""

    grids: list
    labels: list
    sources: list
    entries: list

    def __len__(self):
        return len(self.grids)

    def stack(self, indices, dtype=np.float64):
        grids = [self.grids[i] for i in indices]
        shapes = {g.shape for g in grids}
        if len(shapes) != 1:
            raise TrainingDataError(
                "cannot batch windows of shapes {}".format(sorted(shapes))
            )
        return np.stack(grids).astype(dtype)

    def label_array(self, indices=None):
        indices = range(len(self)) if indices is None else indices
        return np.array([self.labels[i] for i in indices])

    def sampler(self, weights, seed):
        return ManifestSampler(self.sources, weights, seed)


def load_windows(manifest, window_s, patch_len):
    grids, labels, sources, entries = [], [], [], []
    for index, entry in enumerate(manifest):
        seg = read_segment(entry.path)
        for window in window_standardize(seg, window_s, patch_len):
            grids.append(patchify(window.samples, patch_len))
            labels.append(entry.label)
            sources.append(entry.source)
            entries.append(index)
    logger.info(
        "loaded %d windows from %d segments", len(grids), len(manifest)
    )
    return WindowSet(grids, labels, sources, entries)


def prepare_corpus(
    manifest,
    out_dir,
    window_s,
    patch_len,
    band=(0.5, 75.0),
    notch_hz=60.0,
    target_rate_hz=200.0,
):
    """
    Preprocess every segment of `manifest`, cut it into standardized
    windows and write one segment file per window to `out_dir`, with a
    manifest that keeps each window's label, source, split and the source
    weights.
    """
    os.makedirs(out_dir, exist_ok=True)
    entries = []
    for index, entry in enumerate(manifest):
        seg = preprocess(
            read_segment(entry.path),
            band=band,
            notch_hz=notch_hz,
            target_rate_hz=target_rate_hz,
        )
        windows = window_standardize(seg, window_s, patch_len)
        if not windows:
            logger.warning(
                "%s: %.1f s is shorter than one window, skipped",
                entry.path,
                seg.duration_s,
            )
        for k, window in enumerate(windows):
            path = os.path.join(
                out_dir, 'win-{:05d}-{:03d}.trce'.format(index, k)
            )
            write_segment(window, path)
            logger.debug("wrote %s", path)
            entries.append(
                ManifestEntry(path, entry.label, entry.source, entry.split)
            )
    prepared = CorpusManifest(entries, dict(manifest.weights))
    prepared.write(os.path.join(out_dir, 'manifest.tsv'))
    logger.info(
        "prepared %d windows from %d segments in %s",
        len(entries),
        len(manifest),
        out_dir,
    )
    return prepared
