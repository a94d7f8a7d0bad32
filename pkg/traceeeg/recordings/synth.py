# Copyright (C) <2026> Association Prologin <association@prologin.org>
# SPDX-License-Identifier: GPL-3.0+

"""
Deterministic synthetic EEG: band-limited oscillations mixed across
channels, plus white noise.
"""

from collections import namedtuple
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
import logging
import os

import numpy as np

from recordings.manifest import CorpusManifest, ManifestEntry
from recordings.segments import EEGSegment, write_segment
from tracelib.exceptions import ParameterError
from tracelib.utils import step_generator

logger = logging.getLogger(__name__)

Band = namedtuple('Band', 'name center_hz amplitude')

DEFAULT_BANDS = (
    Band('delta', 2.0, 20.0),
    Band('theta', 6.0, 10.0),
    Band('alpha', 10.0, 15.0),
    Band('beta', 20.0, 5.0),
    Band('gamma', 40.0, 2.0),
)


@dataclass(frozen=True)
class SynthSpec:
    seed: int = 0
    channel_count: int = 19
    duration_s: float = 30.0
    sample_rate_hz: float = 200.0
    bands: tuple = DEFAULT_BANDS
    mixing: float = 0.3
    noise_std: float = 2.0
    # relative spread of each channel's band frequency around the center
    frequency_jitter: float = 0.1
    # names of the bands whose dominance defines the label, in label order
    class_bands: tuple = ()
    dominance: float = 4.0
    source: str = 'synth'

    def __post_init__(self):
        if self.channel_count < 1:
            raise ParameterError("channel_count must be positive")
        if not self.duration_s > 0 or not self.sample_rate_hz > 0:
            raise ParameterError("duration and sample rate must be positive")
        if not 0 <= self.mixing <= 1:
            raise ParameterError("mixing must lie in [0, 1]")
        if not 0 <= self.frequency_jitter < 1:
            raise ParameterError("frequency_jitter must lie in [0, 1)")
        names = [band.name for band in self.bands]
        for name in self.class_bands:
            if name not in names:
                raise ParameterError("unknown class band {!r}".format(name))

    @property
    def sample_count(self):
        return int(round(self.duration_s * self.sample_rate_hz))

    @property
    def class_count(self):
        return len(self.class_bands)

    def label_of(self, index):
        if not self.class_bands:
            return None
        return index % self.class_count

    def mixing_matrix(self):
        c = self.channel_count
        return (1.0 - self.mixing) * np.eye(c) + self.mixing / c


def synth_segment(spec, index):
    """The `index`-th segment of the corpus described by `spec`."""
    rng = step_generator(spec.seed, index)
    label = spec.label_of(index)
    dominant = spec.class_bands[label] if label is not None else None
    c = spec.channel_count
    t = np.arange(spec.sample_count) / spec.sample_rate_hz

    sources = np.zeros((c, len(t)))
    for band in spec.bands:
        amplitude = band.amplitude * rng.uniform(0.5, 1.5, size=(c, 1))
        if band.name == dominant:
            amplitude = amplitude * spec.dominance
        frequency = band.center_hz * rng.uniform(
            1.0 - spec.frequency_jitter,
            1.0 + spec.frequency_jitter,
            size=(c, 1),
        )
        phase = rng.uniform(0.0, 2.0 * np.pi, size=(c, 1))
        sources += amplitude * np.sin(2.0 * np.pi * frequency * t + phase)

    samples = spec.mixing_matrix() @ sources
    samples += rng.normal(0.0, spec.noise_std, size=samples.shape)
    return EEGSegment(samples.astype(np.float32), spec.sample_rate_hz), label


def _write_one(job):
    spec, index, path = job
    seg, label = synth_segment(spec, index)
    write_segment(seg, path)
    logger.debug("wrote %s (%r)", path, seg)
    return label


def synth_corpus(spec, count, out_dir, splits=None, workers=1):
    """
    Write `count` segment files and their manifest to `out_dir`.

    `splits` is an ordered sequence of (split name, segment count) pairs
    assigned to consecutive segments; with round-robin labels, each split
    whose size is a multiple of the class count is exactly balanced.
    Segments are generated on `workers` processes; the output does not
    depend on the worker count.
    """
    if count < 1:
        raise ParameterError("count must be positive")
    split_names = [None] * count
    if splits:
        if sum(size for _, size in splits) != count:
            raise ParameterError("split sizes must add up to count")
        position = 0
        for name, size in splits:
            split_names[position : position + size] = [name] * size
            position += size

    os.makedirs(out_dir, exist_ok=True)
    paths = [
        os.path.join(out_dir, 'seg-{:05d}.trce'.format(i))
        for i in range(count)
    ]
    jobs = [(spec, i, path) for i, path in enumerate(paths)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            labels = list(pool.map(_write_one, jobs, chunksize=8))
    else:
        labels = [_write_one(job) for job in jobs]

    manifest = CorpusManifest(
        [
            ManifestEntry(path, label, spec.source, split)
            for path, label, split in zip(paths, labels, split_names)
        ]
    )
    manifest.write(os.path.join(out_dir, 'manifest.tsv'))
    logger.info("generated %d segments in %s", count, out_dir)
    return manifest
