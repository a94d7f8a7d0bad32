# Copyright (C) <2026> Association Prologin <association@prologin.org>
# SPDX-License-Identifier: GPL-3.0+

"""
Expert utilization over routing records: selection frequencies, mean gates,
per-dataset top sets and how much those sets overlap.
"""

from collections import Counter, OrderedDict, namedtuple
from dataclasses import dataclass, field
import itertools

import numpy as np

from tracelib.exceptions import ParameterError
from tracelib.utils import ChoiceEnum
from tracelib.utils.scoring import Scoreboard

ALL_TAG = 'all'


class SetRanking(ChoiceEnum):
    # mean gate weight over time, layers and samples
    gate = 'gate'
    frequency = 'frequency'


CollapseIndicators = namedtuple(
    'CollapseIndicators', 'max_frequency entropy unused'
)


def collapse_indicators(f, topk):
    """
    `f` are per-expert selection frequencies summing to `topk`. The entropy
    of f / topk is normalized by log N, so 1 is perfectly even usage.
    """
    f = np.asarray(f, dtype=float)
    if f.ndim != 1 or not len(f):
        raise ParameterError("frequencies must be a non-empty vector")
    share = f / topk
    used = share[share > 0]
    entropy = float(-(used * np.log(used)).sum())
    if len(f) > 1:
        entropy /= np.log(len(f))
    return CollapseIndicators(
        max_frequency=float(f.max()),
        entropy=entropy,
        unused=int(np.count_nonzero(f == 0)),
    )


class _Usage:
    def __init__(self, experts):
        self.counts = np.zeros(experts)
        self.gates = np.zeros(experts)
        self.decisions = 0

    def add(self, layer):
        self.counts += np.bincount(
            layer.selected.ravel(), minlength=len(self.counts)
        )
        self.gates += layer.dense_gates.sum(axis=0)
        self.decisions += len(layer.selected)

    @property
    def frequency(self):
        return self.counts / self.decisions

    @property
    def mean_gate(self):
        return self.gates / self.decisions


@dataclass
class RoutingSummary:
    experts: int
    topk: int
    decisions: int
    # fraction of decisions selecting each expert, sums to topk
    frequency: np.ndarray
    # dense gate averaged over decisions, sums to 1
    mean_gate: np.ndarray
    top_sets: OrderedDict = field(default_factory=OrderedDict)
    ranking: SetRanking = SetRanking.gate

    @property
    def collapse(self):
        return collapse_indicators(self.frequency, self.topk)

    def export_rows(self):
        return [ExpertRow(self, expert) for expert in range(self.experts)]

    def lines(self):
        indicators = self.collapse
        yield "{} decisions, {} of {} experts per decision".format(
            self.decisions, self.topk, self.experts
        )
        yield "max frequency {:.4f}, usage entropy {:.4f}, {} unused".format(
            indicators.max_frequency, indicators.entropy, indicators.unused
        )
        for tag, top in self.top_sets.items():
            yield "top-{} by {} [{}]: {}".format(
                self.topk, self.ranking, tag, ' '.join(map(str, top))
            )


class ExpertRow:
    def __init__(self, summary, expert):
        self.summary = summary
        self.expert = expert

    def get_export_data(self):
        data = OrderedDict()
        data['expert'] = self.expert
        data['frequency'] = repr(float(self.summary.frequency[self.expert]))
        data['mean_gate'] = repr(float(self.summary.mean_gate[self.expert]))
        for tag, top in self.summary.top_sets.items():
            data['top:{}'.format(tag)] = int(self.expert in top)
        return data


def top_set(scores, k):
    """
    Indices of the `k` highest scores in rank order; ties go to the lowest
    index.
    """
    board = Scoreboard(range(len(scores)), lambda i: scores[i])
    return tuple(int(i) for i in board.top(k))


def routing_stats(records, ranking=SetRanking.gate):
    """
    Pool routing decisions over layers, steps and samples. `records` yields
    RoutingRecords or (dataset tag, RoutingRecord) pairs; untagged records
    count under 'all'. Dense-mode (empty) records are skipped.
    """
    ranking = SetRanking.parse(ranking)
    pooled, per_tag, topk = None, OrderedDict(), None
    for item in records:
        tag, record = item if isinstance(item, tuple) else (ALL_TAG, item)
        for layer in record:
            if pooled is None:
                pooled = _Usage(layer.experts)
                topk = layer.topk
            elif (layer.experts, layer.topk) != (len(pooled.counts), topk):
                raise ParameterError(
                    "records mix different expert or top-k counts"
                )
            if tag not in per_tag:
                per_tag[tag] = _Usage(layer.experts)
            pooled.add(layer)
            per_tag[tag].add(layer)
    if pooled is None:
        raise ParameterError("no routing decision to summarize")

    top_sets = OrderedDict()
    for tag, usage in per_tag.items():
        scores = (
            usage.mean_gate
            if ranking == SetRanking.gate
            else usage.frequency
        )
        top_sets[tag] = top_set(scores, topk)
    return RoutingSummary(
        experts=len(pooled.counts),
        topk=topk,
        decisions=pooled.decisions,
        frequency=pooled.frequency,
        mean_gate=pooled.mean_gate,
        top_sets=top_sets,
        ranking=ranking,
    )


def jaccard(a, b):
    a, b = set(a), set(b)
    if not a or not b:
        raise ParameterError("Jaccard similarity of an empty set")
    return len(a & b) / len(a | b)


def jaccard_overlap(sets):
    """(symmetric pairwise matrix, mean over distinct pairs)."""
    sets = [set(s) for s in sets]
    if len(sets) < 2:
        raise ParameterError("overlap needs at least two sets")
    matrix = np.eye(len(sets))
    for i, j in itertools.combinations(range(len(sets)), 2):
        matrix[i, j] = matrix[j, i] = jaccard(sets[i], sets[j])
    upper = matrix[np.triu_indices(len(sets), k=1)]
    return matrix, float(upper.mean())


OverlapCounts = namedtuple('OverlapCounts', 'universal shared single')


def overlap_counts(sets, m=3):
    """
    Experts found in every set, in at least `m` sets and in exactly one.
    """
    sets = [set(s) for s in sets]
    if not sets:
        raise ParameterError("no set to count")
    seen = Counter(itertools.chain.from_iterable(sets))
    return OverlapCounts(
        universal={e for e, n in seen.items() if n == len(sets)},
        shared={e for e, n in seen.items() if n >= m},
        single={e for e, n in seen.items() if n == 1},
    )


def model_records(model, windows, batch_size=8):
    """
    Yield (source, RoutingRecord) for batches of `windows`, each batch drawn
    from a single source.
    """
    model.eval()
    by_source = OrderedDict()
    for index, source in enumerate(windows.sources):
        by_source.setdefault(source, []).append(index)
    for source, indices in by_source.items():
        for start in range(0, len(indices), batch_size):
            batch = windows.stack(
                indices[start : start + batch_size], dtype=model.dtype
            )
            _, _, record = model(batch)
            yield source, record
