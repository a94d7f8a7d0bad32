# Copyright (C) <2026> Association Prologin <association@prologin.org>
# SPDX-License-Identifier: GPL-3.0+

"""
Corpus manifests: one tab-separated line per segment file,

    path <TAB> label <TAB> source [<TAB> split]

with an empty label for unlabeled segments. Lines starting with `#` are
comments, except `# weight <TAB> source <TAB> value` directives which set
the sampling weight of a source (1 by default).
"""

from collections import OrderedDict
from dataclasses import dataclass, field
import os

import numpy as np

from recordings.segments import read_segment
from tracelib.exceptions import FormatError, ParameterError
from tracelib.utils import step_generator

SPLITS = ('train', 'val', 'test')


@dataclass(frozen=True)
class ManifestEntry:
    path: str
    label: object = None
    source: str = 'default'
    split: object = None


@dataclass
class CorpusManifest:
    entries: list
    weights: dict = field(default_factory=dict)

    def __post_init__(self):
        for source, weight in self.weights.items():
            if not weight >= 0:
                raise ParameterError(
                    "negative weight {} for source {!r}".format(
                        weight, source
                    )
                )

    def __len__(self):
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def sources(self):
        """Source tags in order of first appearance."""
        return list(OrderedDict.fromkeys(e.source for e in self.entries))

    def weight_of(self, source):
        return self.weights.get(source, 1.0)

    def subset(self, split):
        return CorpusManifest(
            [e for e in self.entries if e.split == split], dict(self.weights)
        )

    @property
    def labeled(self):
        return all(e.label is not None for e in self.entries)

    def validate(self):
        """Check that every file exists and parses as a segment."""
        for entry in self.entries:
            read_segment(entry.path)
        if self.entries and not any(
            self.weight_of(s) > 0 for s in self.sources()
        ):
            raise ParameterError("all source weights are zero")

    def dumps(self, base_dir=None):
        lines = []
        for source, weight in self.weights.items():
            lines.append('# weight\t{}\t{!r}'.format(source, float(weight)))
        for e in self.entries:
            path = e.path
            if base_dir is not None:
                path = os.path.relpath(path, base_dir)
            row = [path, '' if e.label is None else str(e.label), e.source]
            if e.split is not None:
                row.append(e.split)
            lines.append('\t'.join(row))
        return ''.join(line + '\n' for line in lines)

    def write(self, path):
        base_dir = os.path.dirname(os.path.abspath(path))
        with open(path, 'w', encoding='utf-8') as f:
            f.write(self.dumps(base_dir))


def parse_manifest(lines, base_dir='.'):
    entries = []
    weights = OrderedDict()
    for lineno, line in enumerate(lines, 1):
        line = line.rstrip('\n')
        if not line.strip():
            continue
        if line.startswith('#'):
            fields = line[1:].strip().split('\t')
            if fields[0].strip() == 'weight':
                if len(fields) != 3:
                    raise FormatError(
                        'weight', "line {}: malformed weight".format(lineno)
                    )
                try:
                    weights[fields[1]] = float(fields[2])
                except ValueError:
                    raise FormatError(
                        'weight',
                        "line {}: {!r} is not a number".format(
                            lineno, fields[2]
                        ),
                    )
            continue
        fields = line.split('\t')
        if len(fields) not in (3, 4):
            raise FormatError(
                'columns',
                "line {}: expected 3 or 4 tab-separated columns".format(
                    lineno
                ),
            )
        path, label, source = fields[:3]
        split = fields[3] if len(fields) == 4 and fields[3] else None
        if split is not None and split not in SPLITS:
            raise FormatError(
                'split', "line {}: unknown split {!r}".format(lineno, split)
            )
        if label:
            try:
                label = int(label)
            except ValueError:
                raise FormatError(
                    'label',
                    "line {}: label {!r} is not an integer".format(
                        lineno, label
                    ),
                )
        else:
            label = None
        entries.append(
            ManifestEntry(os.path.join(base_dir, path), label, source, split)
        )
    return CorpusManifest(entries, dict(weights))


def read_manifest(path):
    """Read a manifest; relative paths are resolved against its directory."""
    try:
        with open(path, encoding='utf-8') as f:
            lines = f.readlines()
    except OSError as exc:
        raise OSError(
            exc.errno, "cannot read manifest: {}".format(exc.strerror), path
        ) from exc
    return parse_manifest(lines, os.path.dirname(os.path.abspath(path)))


class ManifestSampler:
    """
    Seeded draws over items tagged with a source: pick a source with
    probability proportional to its weight, then an item uniformly within
    it.

    `items_sources[i]` is the source of item `i`; items are manifest
    entries or the windows cut from them.
    """

    def __init__(self, items_sources, weights, seed):
        self.seed = seed
        by_source = OrderedDict()
        for i, source in enumerate(items_sources):
            by_source.setdefault(source, []).append(i)
        self.sources = list(by_source)
        self.members = [np.array(by_source[s]) for s in self.sources]
        raw = np.array(
            [float(weights.get(s, 1.0)) for s in self.sources], dtype=float
        )
        if np.any(raw < 0):
            raise ParameterError("source weights must be non-negative")
        if raw.sum() <= 0:
            raise ParameterError("all source weights are zero")
        self.probabilities = raw / raw.sum()

    @classmethod
    def for_manifest(cls, manifest, seed):
        return cls([e.source for e in manifest], manifest.weights, seed)

    def draw(self, rng):
        """One (source index, item index) pair."""
        source = rng.choice(len(self.sources), p=self.probabilities)
        return source, int(rng.choice(self.members[source]))

    def stream(self, count):
        """`count` item indices drawn from the seed alone."""
        rng = step_generator(self.seed, 0)
        return [self.draw(rng)[1] for _ in range(count)]

    def batch_indices(self, step, batch_size):
        """
        Items of the batch for training step `step`: one source per batch,
        so batches never mix montages. Depends on (seed, step) only.
        """
        rng = step_generator(self.seed, step)
        source = rng.choice(len(self.sources), p=self.probabilities)
        picked = rng.choice(self.members[source], size=batch_size)
        return [int(i) for i in picked]
