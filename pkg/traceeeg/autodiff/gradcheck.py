# Copyright (C) <2026> Association Prologin <association@prologin.org>
# SPDX-License-Identifier: GPL-3.0+

"""
Central finite-difference verification of analytic gradients.
"""

from dataclasses import dataclass, field
import logging
import math

import numpy as np

from autodiff.tensor import ComputeGraph, Tensor, backward

logger = logging.getLogger(__name__)

NON_DIFFERENTIABLE = "non-differentiable point"
NON_FINITE = "non-finite function value"


@dataclass
class ParameterCheck:
    name: str
    checked: int = 0
    max_rel_error: float = 0.0
    failures: list = field(default_factory=list)
    skipped: list = field(default_factory=list)

    @property
    def passed(self):
        return not self.failures


@dataclass
class GradcheckReport:
    eps: float
    tol: float
    parameters: list = field(default_factory=list)

    @property
    def passed(self):
        return all(p.passed for p in self.parameters)

    @property
    def max_rel_error(self):
        return max((p.max_rel_error for p in self.parameters), default=0.0)

    def __iter__(self):
        return iter(self.parameters)

    def __str__(self):
        lines = []
        for p in self.parameters:
            lines.append(
                '{:<40} {:>6} coords  max rel err {:.3e}{}{}'.format(
                    p.name,
                    p.checked,
                    p.max_rel_error,
                    '  FAILED {}'.format(len(p.failures))
                    if p.failures
                    else '',
                    '  skipped {}'.format(len(p.skipped))
                    if p.skipped
                    else '',
                )
            )
        return '\n'.join(lines)


def relative_error(analytic, numeric):
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), 1e-8)


def _evaluate(f):
    value = f()
    if isinstance(value, Tensor):
        value = value.data
    return float(value)


def finite_diff_check(
    f, params, eps=1e-5, tol=1e-4, atol=1e-9, names=None, max_coords=None,
    rng=None,
):
    """
    Compare the gradient `backward` computes for `f()` with respect to each
    tensor of `params` to central differences of step `eps`.

    `f` takes no argument and reads the current parameter values; it is
    called once under a `ComputeGraph` and then twice per coordinate with
    one entry perturbed in place. A coordinate fails when its relative error
    exceeds `tol`, unless the absolute difference is below `atol`
    (round-off of the difference quotient). Coordinates where the two
    one-sided quotients disagree without converging as the step halves sit
    on a kink and are skipped. With `max_coords`, a sample of at most that
    many coordinates per tensor (drawn from `rng`) is checked.
    """
    names = names or ['param{}'.format(i) for i in range(len(params))]
    for p in params:
        p.zero_grad()
    with ComputeGraph() as graph:
        loss = f()
    backward(graph, loss)
    center = float(loss.data)

    report = GradcheckReport(eps=eps, tol=tol)
    for name, param in zip(names, params):
        analytic = param.grad.copy()
        check = ParameterCheck(name=name)
        report.parameters.append(check)
        coords = list(np.ndindex(param.shape))
        if max_coords is not None and len(coords) > max_coords:
            rng = rng or np.random.default_rng(0)
            picked = rng.choice(len(coords), size=max_coords, replace=False)
            coords = [coords[i] for i in sorted(picked)]
        for index in coords:
            _check_coordinate(
                f, param, index, analytic[index], center, eps, tol, atol,
                check,
            )
        logger.debug(
            "%s: %d coordinates, max relative error %.3e",
            name,
            check.checked,
            check.max_rel_error,
        )
    return report


def _shifted(f, param, index, delta):
    original = param.data[index]
    param.data[index] = original + delta
    try:
        return _evaluate(f)
    finally:
        param.data[index] = original


def _check_coordinate(
    f, param, index, analytic, center, eps, tol, atol, check
):
    plus = _shifted(f, param, index, eps)
    minus = _shifted(f, param, index, -eps)
    if not (math.isfinite(plus) and math.isfinite(minus)):
        check.failures.append((index, NON_FINITE))
        return

    right = (plus - center) / eps
    left = (center - minus) / eps
    gap = abs(right - left)
    if gap > max(0.5 * max(abs(right), abs(left)), 1e-6):
        half = eps / 2
        half_right = (_shifted(f, param, index, half) - center) / half
        half_left = (center - _shifted(f, param, index, -half)) / half
        if abs(half_right - half_left) > 0.75 * gap:
            logger.debug("%s%s: %s", check.name, index, NON_DIFFERENTIABLE)
            check.skipped.append((index, NON_DIFFERENTIABLE))
            return

    numeric = (plus - minus) / (2 * eps)
    check.checked += 1
    if abs(analytic - numeric) <= atol:
        return
    error = relative_error(analytic, numeric)
    check.max_rel_error = max(check.max_rel_error, error)
    if error > tol:
        check.failures.append((index, error))
