# Copyright (C) <2026> Association Prologin <association@prologin.org>
# SPDX-License-Identifier: GPL-3.0+

import logging

import numpy as np

from encoder.patches import patchify, unpatchify
from recordings.filters import standardize
from tracelib.exceptions import ConfigurationError, ParameterError

logger = logging.getLogger(__name__)


def rollout(model, prefix, steps):
    """
    Autoregressive continuation of a (channels, n, t) patch grid: the
    horizon-1 prediction at the last position becomes the next patch.
    Returns the (channels, steps, t) generated patches.
    """
    if 1 not in model.heads.horizons:
        raise ConfigurationError("forecasting needs a horizon-1 head")
    if steps < 1:
        raise ParameterError("at least one step to forecast")
    grid = np.asarray(prefix, dtype=model.dtype)
    generated = []
    for _ in range(steps):
        _, predictions, _ = model(grid[None])
        # (channels, t): position n-1 predicts step n
        patch = predictions[1].data[0, :, -1, 0, :]
        generated.append(patch)
        grid = np.concatenate([grid, patch[:, None, :]], axis=1)
    return np.stack(generated, axis=1)


def forecast_segment(model, seg, prefix_steps, steps):
    """Standardize `seg`, keep its first patches and continue them."""
    patch_len = model.heads.heads[0].patch_len
    grid = patchify(standardize(seg.samples), patch_len)
    if prefix_steps > grid.shape[1]:
        raise ParameterError(
            "segment has {} patches, prefix needs {}".format(
                grid.shape[1], prefix_steps
            )
        )
    logger.info(
        "forecasting %d patches from a %d-patch prefix", steps, prefix_steps
    )
    return unpatchify(rollout(model, grid[:, :prefix_steps], steps))
