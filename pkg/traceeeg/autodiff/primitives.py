# Copyright (C) <2026> Association Prologin <association@prologin.org>
# SPDX-License-Identifier: GPL-3.0+

"""
Forward kernels and vector-Jacobian products of every primitive.

A primitive is a function `forward(arrays, **attrs)` returning
`(output, vjp)` or `(output, vjp, aux)`, where `vjp(g)` maps the gradient of
the output to one gradient (or None) per input and `aux` holds
non-differentiable by-products (e.g. top-k indices) attached to the output
tensor. Kernels only use fixed-order numpy reductions, so two evaluations on
the same inputs are bit-identical.
"""

from collections import namedtuple
import functools
import math

import numpy as np
from scipy import special

from tracelib.exceptions import ContractViolation

Primitive = namedtuple('Primitive', 'name forward arity differentiable')

PRIMITIVES = {}

def primitive(name, arity=None, differentiable=True):
    def register(func):
        PRIMITIVES[name] = Primitive(name, func, arity, differentiable)
        return func

    return register


def unbroadcast(gradient, shape):
    """Sum `gradient` over the axes that were broadcast to reach it."""
    while gradient.ndim > len(shape):
        gradient = gradient.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and gradient.shape[axis] != 1:
            gradient = gradient.sum(axis=axis, keepdims=True)
    return gradient


def _broadcast_shape(a, b, name):
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ContractViolation(
            "{}: shapes {} and {} do not broadcast".format(
                name, a.shape, b.shape
            )
        )


def _normalize_axis(axis, ndim):
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(sorted(a % ndim for a in axis))


# Linear algebra


@primitive('matmul', arity=2)
def matmul(arrays):
    a, b = arrays
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ContractViolation(
            "matmul: cannot multiply {} by {}".format(a.shape, b.shape)
        )
    out = np.matmul(a, b)

    def vjp(g):
        if b.ndim == 2:
            ga = g @ b.T
            gb = a.reshape(-1, a.shape[-1]).T @ g.reshape(-1, g.shape[-1])
        else:
            ga = unbroadcast(g @ np.swapaxes(b, -1, -2), a.shape)
            gb = unbroadcast(np.swapaxes(a, -1, -2) @ g, b.shape)
        return [unbroadcast(ga, a.shape), gb]

    return out, vjp


# Element-wise arithmetic


@primitive('add', arity=2)
def add(arrays):
    a, b = arrays
    _broadcast_shape(a, b, 'add')

    def vjp(g):
        return [unbroadcast(g, a.shape), unbroadcast(g, b.shape)]

    return a + b, vjp


@primitive('sub', arity=2)
def sub(arrays):
    a, b = arrays
    _broadcast_shape(a, b, 'sub')

    def vjp(g):
        return [unbroadcast(g, a.shape), unbroadcast(-g, b.shape)]

    return a - b, vjp


@primitive('mul', arity=2)
def mul(arrays):
    a, b = arrays
    _broadcast_shape(a, b, 'mul')

    def vjp(g):
        return [unbroadcast(g * b, a.shape), unbroadcast(g * a, b.shape)]

    return a * b, vjp


@primitive('scale', arity=1)
def scale(arrays, factor):
    (x,) = arrays
    factor = x.dtype.type(factor)
    return x * factor, lambda g: [g * factor]


@primitive('log1p', arity=1)
def log1p(arrays):
    (x,) = arrays
    return np.log1p(x), lambda g: [g / (1.0 + x)]


# Activations


@primitive('sigmoid', arity=1)
def sigmoid(arrays):
    (x,) = arrays
    s = special.expit(x)
    return s, lambda g: [g * s * (1.0 - s)]


@primitive('gelu', arity=1)
def gelu(arrays):
    (x,) = arrays
    cdf = 0.5 * (1.0 + special.erf(x / math.sqrt(2.0)))
    pdf = np.exp(-0.5 * x * x) / math.sqrt(2.0 * math.pi)
    return x * cdf, lambda g: [g * (cdf + x * pdf)]


@primitive('silu', arity=1)
def silu(arrays):
    (x,) = arrays
    s = special.expit(x)
    return x * s, lambda g: [g * (s + x * s * (1.0 - s))]


@primitive('softmax', arity=1)
def softmax(arrays, axis=-1, mask=None):
    """
    Softmax with an optional additive mask (0 to keep, -inf to drop). The
    input may broadcast against the mask; its gradient is summed back.
    """
    (x,) = arrays
    z = x if mask is None else x + np.asarray(mask, dtype=x.dtype)
    if mask is not None and np.any(np.all(np.isneginf(z), axis=axis)):
        raise ContractViolation("softmax over an all-masked axis")
    e = np.exp(z - np.max(z, axis=axis, keepdims=True))
    s = e / np.sum(e, axis=axis, keepdims=True)

    def vjp(g):
        gx = s * (g - np.sum(g * s, axis=axis, keepdims=True))
        return [unbroadcast(gx, x.shape)]

    return s, vjp


@primitive('cross_entropy', arity=1)
def cross_entropy(arrays, labels):
    """Mean softmax cross-entropy of (B, K) logits against integer labels."""
    (logits,) = arrays
    labels = np.asarray(labels)
    if logits.ndim != 2 or labels.shape != logits.shape[:1]:
        raise ContractViolation(
            "cross_entropy: logits {} and labels {}".format(
                logits.shape, labels.shape
            )
        )
    shifted = logits - np.max(logits, axis=-1, keepdims=True)
    log_norm = np.log(np.sum(np.exp(shifted), axis=-1))
    rows = np.arange(len(labels))
    out = np.mean(log_norm - shifted[rows, labels])

    def vjp(g):
        probs = np.exp(shifted - log_norm[:, None])
        probs[rows, labels] -= 1.0
        return [g * probs / len(labels)]

    return out, vjp


@primitive('huber', arity=1)
def huber(arrays, delta=1.0):
    """Element-wise Huber penalty of a residual."""
    (r,) = arrays
    if delta <= 0:
        raise ContractViolation("huber: delta must be positive")
    magnitude = np.abs(r)
    out = np.where(
        magnitude <= delta, 0.5 * r * r, delta * (magnitude - 0.5 * delta)
    )
    return out, lambda g: [g * np.clip(r, -delta, delta)]


# Reductions and layout


@primitive('sum', arity=1)
def reduce_sum(arrays, axis=None, keepdims=False):
    (x,) = arrays
    axes = _normalize_axis(axis, x.ndim)
    out = np.sum(x, axis=axes, keepdims=keepdims)

    def vjp(g):
        if not keepdims:
            g = np.expand_dims(g, axes)
        return [np.broadcast_to(g, x.shape).copy()]

    return out, vjp


@primitive('mean', arity=1)
def reduce_mean(arrays, axis=None, keepdims=False):
    (x,) = arrays
    axes = _normalize_axis(axis, x.ndim)
    count = int(np.prod([x.shape[a] for a in axes]))
    out = np.mean(x, axis=axes, keepdims=keepdims)

    def vjp(g):
        if not keepdims:
            g = np.expand_dims(g, axes)
        return [np.broadcast_to(g / count, x.shape).copy()]

    return out, vjp


@primitive('reshape', arity=1)
def reshape(arrays, shape):
    (x,) = arrays
    try:
        out = x.reshape(shape)
    except ValueError:
        raise ContractViolation(
            "reshape: cannot view {} as {}".format(x.shape, shape)
        )
    return out, lambda g: [g.reshape(x.shape)]


@primitive('permute', arity=1)
def permute(arrays, axes):
    (x,) = arrays
    if sorted(axes) != list(range(x.ndim)):
        raise ContractViolation(
            "permute: {} is not a permutation of {} axes".format(axes, x.ndim)
        )
    inverse = tuple(np.argsort(axes))
    return np.transpose(x, axes), lambda g: [np.transpose(g, inverse)]


@primitive('concat')
def concat(arrays, axis=-1):
    if not arrays:
        raise ContractViolation("concat needs at least one input")
    try:
        out = np.concatenate(arrays, axis=axis)
    except ValueError as exc:
        raise ContractViolation("concat: {}".format(exc))
    bounds = np.cumsum([a.shape[axis] for a in arrays])[:-1]
    return out, lambda g: np.split(g, bounds, axis=axis)


@primitive('take', arity=1)
def take(arrays, indices, axis=0):
    """Select `indices` along `axis`; repeated indices accumulate."""
    (x,) = arrays
    indices = np.asarray(indices, dtype=np.intp)
    out = np.take(x, indices, axis=axis)

    def vjp(g):
        gx = np.zeros_like(x)
        index = [slice(None)] * x.ndim
        index[axis] = indices
        np.add.at(gx, tuple(index), g)
        return [gx]

    return out, vjp


@primitive('put_along', arity=1)
def put_along(arrays, indices, size):
    """Scatter (..., k) values at their indices into zeros of (..., size)."""
    (values,) = arrays
    indices = np.asarray(indices, dtype=np.intp)
    if indices.shape != values.shape:
        raise ContractViolation(
            "put_along: indices {} for values {}".format(
                indices.shape, values.shape
            )
        )
    out = np.zeros(values.shape[:-1] + (size,), dtype=values.dtype)
    np.put_along_axis(out, indices, values, axis=-1)
    return out, lambda g: [np.take_along_axis(g, indices, axis=-1)]


@primitive('scatter_rows', arity=1)
def scatter_rows(arrays, rows, size):
    """Place row `s` of the input at row `rows[s]` of a zero (size, ...)."""
    (values,) = arrays
    rows = np.asarray(rows, dtype=np.intp)
    if len(np.unique(rows)) != len(rows) or len(rows) != len(values):
        raise ContractViolation("scatter_rows: rows must be unique")
    out = np.zeros((size,) + values.shape[1:], dtype=values.dtype)
    out[rows] = values
    return out, lambda g: [g[rows]]


@primitive('topk', arity=1)
def topk(arrays, k):
    """
    The k largest entries of the last axis, in decreasing order, ties going
    to the lowest index. The gradient of the values flows back to the
    selected positions only; `indices` is a constant of the forward pass.
    """
    (x,) = arrays
    if not 1 <= k <= x.shape[-1]:
        raise ContractViolation(
            "topk: k={} over an axis of {}".format(k, x.shape[-1])
        )
    indices = np.argsort(-x, axis=-1, kind='stable')[..., :k]
    values = np.take_along_axis(x, indices, axis=-1)

    def vjp(g):
        gx = np.zeros_like(x)
        np.put_along_axis(gx, indices, g, axis=-1)
        return [gx]

    return values, vjp, {'indices': indices}


# Normalization


@primitive('group_norm', arity=3)
def group_norm(arrays, groups, eps=1e-5):
    """Group normalization of (B, channels, length) with per-channel affine."""
    x, gamma, beta = arrays
    batch, channels, length = x.shape
    if channels % groups:
        raise ContractViolation(
            "group_norm: {} channels not divisible into {} groups".format(
                channels, groups
            )
        )
    xg = x.reshape(batch, groups, -1)
    mean = xg.mean(axis=-1, keepdims=True)
    centered = xg - mean
    var = (centered * centered).mean(-1, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = (centered * inv_std).reshape(x.shape)
    out = xhat * gamma[:, None] + beta[:, None]

    def vjp(g):
        gxhat = (g * gamma[:, None]).reshape(batch, groups, -1)
        xh = xhat.reshape(batch, groups, -1)
        size = xh.shape[-1]
        gx = (
            inv_std
            / size
            * (
                size * gxhat
                - gxhat.sum(-1, keepdims=True)
                - xh * (gxhat * xh).sum(-1, keepdims=True)
            )
        )
        return [
            gx.reshape(x.shape),
            (g * xhat).sum(axis=(0, 2)),
            g.sum(axis=(0, 2)),
        ]

    return out, vjp


@primitive('layer_norm', arity=3)
def layer_norm(arrays, eps=1e-5):
    x, gamma, beta = arrays
    mean = x.mean(axis=-1, keepdims=True)
    centered = x - mean
    var = (centered * centered).mean(-1, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = centered * inv_std

    def vjp(g):
        gxhat = g * gamma
        size = x.shape[-1]
        gx = (
            inv_std
            / size
            * (
                size * gxhat
                - gxhat.sum(-1, keepdims=True)
                - xhat * (gxhat * xhat).sum(-1, keepdims=True)
            )
        )
        lead = tuple(range(x.ndim - 1))
        return [gx, (g * xhat).sum(axis=lead), g.sum(axis=lead)]

    return xhat * gamma + beta, vjp


@primitive('rms_norm', arity=2)
def rms_norm(arrays, eps=1e-6):
    x, weight = arrays
    rms = np.sqrt((x * x).mean(axis=-1, keepdims=True) + eps)
    normed = x / rms

    def vjp(g):
        gn = g * weight
        size = x.shape[-1]
        gx = gn / rms - x * (gn * x).sum(-1, keepdims=True) / (
            size * rms ** 3
        )
        return [gx, (g * normed).sum(axis=tuple(range(x.ndim - 1)))]

    return normed * weight, vjp


# Convolutions


def _windows(length, kernel, stride):
    out_length = (length - kernel) // stride + 1
    if out_length < 1:
        raise ContractViolation(
            "convolution: kernel {} does not fit a length of {}".format(
                kernel, length
            )
        )
    return (
        np.arange(kernel)[None, :] + stride * np.arange(out_length)[:, None]
    )


@primitive('conv1d', arity=2)
def conv1d(arrays, stride=1, padding=0):
    """Cross-correlation of (B, Cin, L) with (Cout, Cin, k), no bias."""
    x, w = arrays
    if x.ndim != 3 or w.ndim != 3 or x.shape[1] != w.shape[1]:
        raise ContractViolation(
            "conv1d: input {} and weight {}".format(x.shape, w.shape)
        )
    batch, cin, length = x.shape
    cout, _, kernel = w.shape
    xp = np.pad(x, ((0, 0), (0, 0), (padding, padding)))
    index = _windows(length + 2 * padding, kernel, stride)
    out_length = len(index)
    cols = xp[:, :, index].transpose(0, 2, 1, 3).reshape(-1, cin * kernel)
    w2 = w.reshape(cout, cin * kernel)
    out = (cols @ w2.T).reshape(batch, out_length, cout).transpose(0, 2, 1)

    def vjp(g):
        g2 = g.transpose(0, 2, 1).reshape(-1, cout)
        gw = (g2.T @ cols).reshape(w.shape)
        gcols = (g2 @ w2).reshape(batch, out_length, cin, kernel)
        gxp = np.zeros_like(xp)
        np.add.at(
            gxp,
            (slice(None), slice(None), index),
            gcols.transpose(0, 2, 1, 3),
        )
        return [gxp[:, :, padding : padding + length], gw]

    return out, vjp


@primitive('dwconv1d', arity=3)
def dwconv1d(arrays):
    """
    Depth-wise convolution of (B, D, L) with (D, k) kernels and (D,) bias,
    zero-padded so the output keeps length L.
    """
    x, w, b = arrays
    if x.ndim != 3 or w.shape[0] != x.shape[1] or b.shape != (x.shape[1],):
        raise ContractViolation(
            "dwconv1d: input {}, kernel {}, bias {}".format(
                x.shape, w.shape, b.shape
            )
        )
    length = x.shape[2]
    kernel = w.shape[1]
    left = (kernel - 1) // 2
    xp = np.pad(x, ((0, 0), (0, 0), (left, kernel - 1 - left)))
    index = _windows(length + kernel - 1, kernel, 1)
    cols = xp[:, :, index]
    out = (cols * w[None, :, None, :]).sum(-1) + b[None, :, None]

    def vjp(g):
        gw = (g[..., None] * cols).sum(axis=(0, 2))
        gxp = np.zeros_like(xp)
        np.add.at(
            gxp,
            (slice(None), slice(None), index),
            g[..., None] * w[None, :, None, :],
        )
        return [gxp[:, :, left : left + length], gw, g.sum(axis=(0, 2))]

    return out, vjp


# Spectral and positional


@functools.lru_cache(maxsize=16)
def dft_tables(length, dtype_name):
    """Cosine and (negated) sine matrices of the one-sided real DFT."""
    n = np.arange(length)[:, None]
    k = np.arange(length // 2 + 1)[None, :]
    angle = 2.0 * np.pi * ((n * k) % length) / length
    return (
        np.cos(angle).astype(dtype_name),
        (-np.sin(angle)).astype(dtype_name),
    )


@primitive('rdft_magnitude', arity=3)
def rdft_magnitude(arrays):
    """
    |M ⊙ DFT(x)| over the last axis, M = mask_re + i·mask_im per bin.
    Silent bins (zero magnitude) pass no gradient.
    """
    x, mask_re, mask_im = arrays
    bins = x.shape[-1] // 2 + 1
    if mask_re.shape != (bins,) or mask_im.shape != (bins,):
        raise ContractViolation(
            "rdft_magnitude: mask of {} for {} bins".format(
                mask_re.shape, bins
            )
        )
    cos, sin = dft_tables(x.shape[-1], x.dtype.name)
    re = x @ cos
    im = x @ sin
    pr = mask_re * re - mask_im * im
    pi = mask_re * im + mask_im * re
    power = pr * pr + pi * pi
    out = np.sqrt(power)

    def vjp(g):
        live = out > 0
        scale = np.where(live, g, 0.0) / np.where(live, out, 1.0)
        gpr = scale * pr
        gpi = scale * pi
        gre = gpr * mask_re + gpi * mask_im
        gim = gpi * mask_re - gpr * mask_im
        lead = tuple(range(x.ndim - 1))
        return [
            gre @ cos.T + gim @ sin.T,
            (gpr * re + gpi * im).sum(axis=lead),
            (gpi * re - gpr * im).sum(axis=lead),
        ]

    return out, vjp


def rope_angles(length, dim, base, dtype):
    half = dim // 2
    inv_freq = base ** (-np.arange(half) / half)
    angles = np.outer(np.arange(length), inv_freq)
    return np.cos(angles).astype(dtype), np.sin(angles).astype(dtype)


@primitive('rope', arity=1)
def rope(arrays, base=10000.0):
    """
    Rotary position rotation of (..., n, dim) along the n axis. With an odd
    dim, the last feature is left unrotated.
    """
    (x,) = arrays
    length, dim = x.shape[-2:]
    half = dim // 2
    cos, sin = rope_angles(length, dim, base, x.dtype)
    x1 = x[..., :half]
    x2 = x[..., half : 2 * half]
    out = x.copy()
    out[..., :half] = x1 * cos - x2 * sin
    out[..., half : 2 * half] = x2 * cos + x1 * sin

    def vjp(g):
        g1 = g[..., :half]
        g2 = g[..., half : 2 * half]
        gx = g.copy()
        gx[..., :half] = g1 * cos + g2 * sin
        gx[..., half : 2 * half] = g2 * cos - g1 * sin
        return [gx]

    return out, vjp
