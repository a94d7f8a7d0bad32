# Copyright (C) <2026> Association Prologin <association@prologin.org>
# SPDX-License-Identifier: GPL-3.0+

import numpy as np

from tracelib.exceptions import ParameterError


def patchify(samples, patch_len):
    """
    Split a (C, T) window into a (C, n, t) grid of non-overlapping patches,
    n = T // t; the trailing remainder is dropped.
    """
    samples = np.asarray(samples)
    channels, count = samples.shape
    if count < patch_len:
        raise ParameterError(
            "window of {} samples is shorter than a patch ({})".format(
                count, patch_len
            )
        )
    steps = count // patch_len
    return samples[:, : steps * patch_len].reshape(channels, steps, patch_len)


def unpatchify(grid):
    """The first n * t samples of the window `grid` was cut from."""
    grid = np.asarray(grid)
    return grid.reshape(grid.shape[:-2] + (-1,))


def conv_length(length, kernel, stride):
    return (length - kernel) // stride + 1
