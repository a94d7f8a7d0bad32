# Copyright (C) <2026> Association Prologin <association@prologin.org>
# SPDX-License-Identifier: GPL-3.0+

import math

import numpy as np

from autodiff.tensor import Tensor
from tracelib.exceptions import ContractViolation


class Module:
    """
    Container of named parameters and sub-modules.

    Attributes holding a `Tensor` with `requires_grad`, a `Module` or a list
    of modules are registered in assignment order, which gives every
    parameter a stable dotted name (`blocks.3.router.weight`).
    """

    def __init__(self):
        object.__setattr__(self, '_children', {})
        object.__setattr__(self, 'training', True)

    def __setattr__(self, name, value):
        children = self.__dict__.get('_children')
        if children is None:
            raise RuntimeError("Module.__init__() was not called")
        if (
            (isinstance(value, Tensor) and value.requires_grad)
            or isinstance(value, Module)
            or (
                isinstance(value, (list, tuple))
                and value
                and all(isinstance(v, Module) for v in value)
            )
        ):
            children[name] = value
        object.__setattr__(self, name, value)

    def named_parameters(self, prefix=''):
        for name, child in self._children.items():
            full = prefix + name
            if isinstance(child, Tensor):
                yield full, child
            elif isinstance(child, Module):
                yield from child.named_parameters(full + '.')
            else:
                for i, module in enumerate(child):
                    yield from module.named_parameters(
                        '{}.{}.'.format(full, i)
                    )

    def parameters(self):
        return [p for _, p in self.named_parameters()]

    def modules(self):
        yield self
        for child in self._children.values():
            if isinstance(child, Module):
                yield from child.modules()
            elif not isinstance(child, Tensor):
                for module in child:
                    yield from module.modules()

    def zero_grad(self):
        for p in self.parameters():
            p.zero_grad()

    def train(self, mode=True):
        for module in self.modules():
            object.__setattr__(module, 'training', mode)
        return self

    def eval(self):
        return self.train(False)

    def state_dict(self):
        return {name: p.data.copy() for name, p in self.named_parameters()}

    def load_state_dict(self, state):
        own = dict(self.named_parameters())
        missing = set(own) - set(state)
        unexpected = set(state) - set(own)
        if missing or unexpected:
            raise ContractViolation(
                "state mismatch: missing {}, unexpected {}".format(
                    sorted(missing), sorted(unexpected)
                )
            )
        for name, p in own.items():
            value = np.asarray(state[name])
            if value.shape != p.shape:
                raise ContractViolation(
                    "{}: shape {} for parameter of shape {}".format(
                        name, value.shape, p.shape
                    )
                )
            p.data = value.astype(p.dtype, copy=True)

    def astype(self, dtype):
        for p in self.parameters():
            p.data = p.data.astype(dtype)
            p.zero_grad()
        return self

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)


class Initializer:
    """Draws parameters from one seeded generator, in call order."""

    def __init__(self, rng, dtype=np.float64):
        self.rng = rng
        self.dtype = np.dtype(dtype)

    def uniform(self, shape, fan_in):
        bound = 1.0 / math.sqrt(fan_in)
        data = self.rng.uniform(-bound, bound, size=shape)
        return Tensor(data.astype(self.dtype), requires_grad=True)

    def zeros(self, shape):
        return Tensor(np.zeros(shape, dtype=self.dtype), requires_grad=True)

    def ones(self, shape):
        return Tensor(np.ones(shape, dtype=self.dtype), requires_grad=True)

    def constant(self, data):
        return Tensor(np.asarray(data, dtype=self.dtype), requires_grad=True)
