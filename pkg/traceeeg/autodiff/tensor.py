# Copyright (C) <2026> Association Prologin <association@prologin.org>
# SPDX-License-Identifier: GPL-3.0+

"""
Dense tensors and the reverse-mode tape.

A `ComputeGraph` is a context manager: every primitive applied while it is
active, with at least one input requiring a gradient, is appended to its
node list. Creation order is a topological order, so `backward` simply walks
the list in reverse.
"""

import threading

import numpy as np

from autodiff.primitives import PRIMITIVES
from tracelib.exceptions import ContractViolation


class Tensor:
    def __init__(self, data, requires_grad=False, name=None):
        self.data = np.asarray(data)
        self.requires_grad = requires_grad
        self.name = name
        self.node = None
        self._grad = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def grad(self):
        """Accumulated gradient; a zero buffer until something flows in."""
        if self._grad is None:
            self._grad = np.zeros_like(self.data)
        return self._grad

    @grad.setter
    def grad(self, value):
        value = np.asarray(value, dtype=self.data.dtype)
        if value.shape != self.data.shape:
            raise ContractViolation(
                "gradient of shape {} for tensor of shape {}".format(
                    value.shape, self.data.shape
                )
            )
        self._grad = value

    def zero_grad(self):
        self._grad = None

    def accumulate(self, gradient):
        if gradient.shape != self.data.shape:
            raise ContractViolation(
                "gradient of shape {} for tensor of shape {}".format(
                    gradient.shape, self.data.shape
                )
            )
        if self._grad is None:
            self._grad = np.array(gradient, dtype=self.data.dtype)
        else:
            self._grad = self._grad + gradient

    def item(self):
        return self.data.item()

    def numpy(self):
        return self.data

    def __repr__(self):
        return '<Tensor{} shape={} dtype={}{}>'.format(
            ' ' + self.name if self.name else '',
            self.shape,
            self.dtype,
            ' requires_grad' if self.requires_grad else '',
        )

    def _coerce(self, other):
        return as_tensor(other, dtype=self.dtype)

    def __add__(self, other):
        return apply_primitive('add', [self, self._coerce(other)])

    def __radd__(self, other):
        return apply_primitive('add', [self._coerce(other), self])

    def __sub__(self, other):
        return apply_primitive('sub', [self, self._coerce(other)])

    def __rsub__(self, other):
        return apply_primitive('sub', [self._coerce(other), self])

    def __mul__(self, other):
        if np.isscalar(other):
            return apply_primitive('scale', [self], {'factor': other})
        return apply_primitive('mul', [self, self._coerce(other)])

    def __rmul__(self, other):
        return self.__mul__(other)

    def __truediv__(self, other):
        if not np.isscalar(other):
            raise ContractViolation("tensors are only divided by scalars")
        return apply_primitive('scale', [self], {'factor': 1.0 / other})

    def __neg__(self):
        return apply_primitive('scale', [self], {'factor': -1.0})

    def __matmul__(self, other):
        return apply_primitive('matmul', [self, self._coerce(other)])

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = shape[0]
        return apply_primitive('reshape', [self], {'shape': tuple(shape)})

    def permute(self, *axes):
        return apply_primitive('permute', [self], {'axes': tuple(axes)})

    def sum(self, axis=None, keepdims=False):
        return apply_primitive(
            'sum', [self], {'axis': axis, 'keepdims': keepdims}
        )

    def mean(self, axis=None, keepdims=False):
        return apply_primitive(
            'mean', [self], {'axis': axis, 'keepdims': keepdims}
        )


def as_tensor(value, dtype=None):
    if isinstance(value, Tensor):
        return value
    return Tensor(np.asarray(value, dtype=dtype))


class Node:
    __slots__ = ('primitive', 'inputs', 'output', 'vjp')

    def __init__(self, primitive, inputs, output, vjp):
        self.primitive = primitive
        self.inputs = inputs
        self.output = output
        self.vjp = vjp

    def __repr__(self):
        return '<Node {}>'.format(self.primitive)


_recording = threading.local()


def _graph_stack():
    stack = getattr(_recording, 'stack', None)
    if stack is None:
        stack = _recording.stack = []
    return stack


def active_graph():
    stack = _graph_stack()
    return stack[-1] if stack else None


class ComputeGraph:
    def __init__(self):
        self.nodes = []

    def __enter__(self):
        _graph_stack().append(self)
        return self

    def __exit__(self, *exc_info):
        _graph_stack().pop()

    def __len__(self):
        return len(self.nodes)

    def record(self, node):
        self.nodes.append(node)


def apply_primitive(name, inputs, attrs=None):
    try:
        primitive = PRIMITIVES[name]
    except KeyError:
        raise ContractViolation("unknown primitive {!r}".format(name))
    inputs = [as_tensor(t) for t in inputs]
    if primitive.arity is not None and len(inputs) != primitive.arity:
        raise ContractViolation(
            "{} takes {} inputs, got {}".format(
                name, primitive.arity, len(inputs)
            )
        )
    result = primitive.forward([t.data for t in inputs], **(attrs or {}))
    out_data, vjp = result[0], result[1]
    out = Tensor(out_data)
    if len(result) > 2:
        for key, value in result[2].items():
            setattr(out, key, value)

    graph = active_graph()
    if (
        graph is not None
        and primitive.differentiable
        and any(t.requires_grad for t in inputs)
    ):
        out.requires_grad = True
        out.node = Node(name, inputs, out, vjp)
        graph.record(out.node)
    return out


def backward(graph, loss):
    """
    Accumulate d(loss)/d(leaf) into the `grad` buffer of every leaf tensor
    that requires a gradient and was recorded by `graph`.
    """
    if loss.data.ndim != 0:
        raise ContractViolation(
            "backward needs a scalar loss, got shape {}".format(loss.shape)
        )
    seed = np.ones_like(loss.data)
    if loss.node is None:
        if loss.requires_grad:
            loss.accumulate(seed)
        return

    pending = {id(loss): seed}
    for node in reversed(graph.nodes):
        gradient = pending.pop(id(node.output), None)
        if gradient is None:
            continue
        for tensor, input_grad in zip(node.inputs, node.vjp(gradient)):
            if input_grad is None or not tensor.requires_grad:
                continue
            if tensor.node is None:
                tensor.accumulate(input_grad)
                continue
            key = id(tensor)
            if key in pending:
                pending[key] = pending[key] + input_grad
            else:
                pending[key] = input_grad
