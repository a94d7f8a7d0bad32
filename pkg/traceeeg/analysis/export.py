# Copyright (C) <2026> Association Prologin <association@prologin.org>
# SPDX-License-Identifier: GPL-3.0+

import csv
from collections import OrderedDict

import numpy as np

from tracelib.exceptions import FormatError


def export_rows_as_csv(objects, path):
    """
    Write one CSV row per object from its `get_export_data()`; the columns
    are the union of the keys in order of first appearance.
    """
    fieldnames = []
    all_keys = set()
    datas = []
    for obj in objects:
        data = obj.get_export_data()
        datas.append(data)
        for key in data:
            if key not in all_keys:
                fieldnames.append(key)
                all_keys.add(key)

    try:
        with open(path, 'w', newline='', encoding='utf-8') as f:
            writer = csv.DictWriter(f, fieldnames=fieldnames)
            writer.writeheader()
            for data in datas:
                writer.writerow(data)
    except OSError as exc:
        raise OSError(
            exc.errno, "cannot write CSV: {}".format(exc.strerror), path
        ) from exc


class JaccardRow:
    def __init__(self, tags, matrix, index):
        self.tags = tags
        self.matrix = matrix
        self.index = index

    def get_export_data(self):
        data = OrderedDict(tag=self.tags[self.index])
        for tag, value in zip(self.tags, self.matrix[self.index]):
            data[tag] = repr(float(value))
        return data


def jaccard_rows(tags, matrix):
    return [JaccardRow(list(tags), matrix, i) for i in range(len(tags))]


def read_usage_csv(path):
    """(frequency, mean_gate) vectors of a routing summary export."""
    try:
        with open(path, newline='', encoding='utf-8') as f:
            rows = list(csv.DictReader(f))
    except OSError as exc:
        raise OSError(
            exc.errno, "cannot read CSV: {}".format(exc.strerror), path
        ) from exc
    try:
        rows.sort(key=lambda row: int(row['expert']))
        frequency = np.array([float(row['frequency']) for row in rows])
        mean_gate = np.array([float(row['mean_gate']) for row in rows])
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(
            'row', "{}: malformed usage row ({})".format(path, exc)
        ) from exc
    return frequency, mean_gate
