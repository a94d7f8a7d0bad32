# Copyright (C) <2026> Association Prologin <association@prologin.org>
# SPDX-License-Identifier: GPL-3.0+

"""Function-style entry points over `apply_primitive`."""

from autodiff.tensor import apply_primitive


def linear(x, weight, bias=None):
    """x @ weight (+ bias), weight stored as (in, out)."""
    out = apply_primitive('matmul', [x, weight])
    if bias is not None:
        out = apply_primitive('add', [out, bias])
    return out


def add(a, b):
    return apply_primitive('add', [a, b])


def mul(a, b):
    return apply_primitive('mul', [a, b])


def scale(x, factor):
    return apply_primitive('scale', [x], {'factor': factor})


def log1p(x):
    return apply_primitive('log1p', [x])


def sigmoid(x):
    return apply_primitive('sigmoid', [x])


def gelu(x):
    return apply_primitive('gelu', [x])


def silu(x):
    return apply_primitive('silu', [x])


def softmax(x, axis=-1, mask=None):
    return apply_primitive('softmax', [x], {'axis': axis, 'mask': mask})


def cross_entropy(logits, labels):
    return apply_primitive('cross_entropy', [logits], {'labels': labels})


def huber(residual, delta=1.0):
    return apply_primitive('huber', [residual], {'delta': delta})


def concat(tensors, axis=-1):
    return apply_primitive('concat', list(tensors), {'axis': axis})


def take(x, indices, axis=0):
    return apply_primitive('take', [x], {'indices': indices, 'axis': axis})


def put_along(values, indices, size):
    return apply_primitive(
        'put_along', [values], {'indices': indices, 'size': size}
    )


def scatter_rows(values, rows, size):
    return apply_primitive(
        'scatter_rows', [values], {'rows': rows, 'size': size}
    )


def topk(x, k):
    """Return (values, indices) of the k largest entries of the last axis."""
    values = apply_primitive('topk', [x], {'k': k})
    return values, values.indices


def group_norm(x, gamma, beta, groups, eps=1e-5):
    return apply_primitive(
        'group_norm', [x, gamma, beta], {'groups': groups, 'eps': eps}
    )


def layer_norm(x, gamma, beta, eps=1e-5):
    return apply_primitive('layer_norm', [x, gamma, beta], {'eps': eps})


def rms_norm(x, weight, eps=1e-6):
    return apply_primitive('rms_norm', [x, weight], {'eps': eps})


def conv1d(x, weight, stride=1, padding=0):
    return apply_primitive(
        'conv1d', [x, weight], {'stride': stride, 'padding': padding}
    )


def dwconv1d(x, weight, bias):
    return apply_primitive('dwconv1d', [x, weight, bias])


def rdft_magnitude(x, mask_re, mask_im):
    return apply_primitive('rdft_magnitude', [x, mask_re, mask_im])


def rope(x, base=10000.0):
    return apply_primitive('rope', [x], {'base': base})
