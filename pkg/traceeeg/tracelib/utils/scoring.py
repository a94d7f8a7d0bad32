# Copyright (C) <2026> Association Prologin <association@prologin.org>
# SPDX-License-Identifier: GPL-3.0+

from collections import namedtuple


class Scoreboard:
    """
    Iterate over items sorted by decreasing score, with their rank.

    Items with equal scores share a rank (ex aequo) and keep their input
    order, so an index-ordered input breaks ties by lowest index.
    """

    ScoreboardItem = namedtuple('ScoreboardItem', 'rank ex_aequo item')

    def __init__(self, iterable, score_getter):
        assert callable(score_getter)
        self.score_getter = score_getter
        self.iterable = sorted(
            iterable, key=lambda item: -score_getter(item)
        )

    def __len__(self):
        return len(self.iterable)

    def __iter__(self):
        rank = 1
        previous_score = None
        for i, item in enumerate(self.iterable, 1):
            score = self.score_getter(item)
            ex_aequo = True
            if previous_score is None or previous_score != score:
                rank = i
                ex_aequo = False
                previous_score = score
            yield Scoreboard.ScoreboardItem(
                rank=rank, ex_aequo=ex_aequo, item=item
            )

    def top(self, count):
        """The first `count` items; ties at the cut go to earlier items."""
        return [entry.item for entry in self][:count]
