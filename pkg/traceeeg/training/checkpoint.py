# Copyright (C) <2026> Association Prologin <association@prologin.org>
# SPDX-License-Identifier: GPL-3.0+

"""
The `.trck` checkpoint file.

    magic b"TRCK" | version u32 | config length u32 | config text (UTF-8)
    | parameter table | optimizer table | step u64

A table is a u32 entry count followed, per entry, by the name length
(u32), the UTF-8 name, the rank (u32), one u64 per dimension and the
float32 values. The optimizer table names its moments `m/<param>` and
`v/<param>`. Everything is little-endian.
"""

from collections import OrderedDict
from dataclasses import dataclass, field
import struct

import numpy as np

from tracelib.exceptions import FormatError
from training.config import RunConfig

MAGIC = b'TRCK'
VERSION = 1
VALUE_DTYPE = np.dtype('<f4')

_u32 = struct.Struct('<I')
_u64 = struct.Struct('<Q')


@dataclass
class Checkpoint:
    config_text: str
    params: OrderedDict
    optimizer: OrderedDict = field(default_factory=OrderedDict)
    step: int = 0

    @property
    def config(self):
        return RunConfig.loads(self.config_text)

    @property
    def seed(self):
        return self.config.train.seed


def _dump_table(table):
    chunks = [_u32.pack(len(table))]
    for name, value in table.items():
        encoded = name.encode('utf-8')
        value = np.ascontiguousarray(value, dtype=VALUE_DTYPE)
        chunks.append(_u32.pack(len(encoded)))
        chunks.append(encoded)
        chunks.append(_u32.pack(value.ndim))
        chunks.extend(_u64.pack(dim) for dim in value.shape)
        chunks.append(value.tobytes())
    return b''.join(chunks)


class _Reader:
    def __init__(self, payload):
        self.payload = memoryview(payload)
        self.offset = 0

    def take(self, size, what):
        end = self.offset + size
        if end > len(self.payload):
            raise FormatError(what, "truncated {}".format(what))
        chunk = self.payload[self.offset : end]
        self.offset = end
        return chunk

    def unpack(self, fmt, what):
        return fmt.unpack(self.take(fmt.size, what))[0]

    def table(self, what):
        table = OrderedDict()
        for _ in range(self.unpack(_u32, what)):
            length = self.unpack(_u32, what)
            try:
                name = bytes(self.take(length, what)).decode('utf-8')
            except UnicodeDecodeError as exc:
                raise FormatError(what, "bad entry name") from exc
            if name in table:
                raise FormatError(what, "duplicate entry {!r}".format(name))
            rank = self.unpack(_u32, what)
            shape = tuple(self.unpack(_u64, what) for _ in range(rank))
            count = int(np.prod(shape, dtype=np.int64))
            raw = self.take(count * VALUE_DTYPE.itemsize, what)
            table[name] = (
                np.frombuffer(raw, dtype=VALUE_DTYPE).reshape(shape).copy()
            )
        return table


def dumps_checkpoint(checkpoint):
    config = checkpoint.config_text.encode('utf-8')
    return b''.join(
        [
            MAGIC,
            _u32.pack(VERSION),
            _u32.pack(len(config)),
            config,
            _dump_table(checkpoint.params),
            _dump_table(checkpoint.optimizer),
            _u64.pack(checkpoint.step),
        ]
    )


def loads_checkpoint(payload):
    reader = _Reader(payload)
    magic = bytes(reader.take(4, 'header'))
    if magic != MAGIC:
        raise FormatError('magic', "bad magic {!r}".format(magic))
    version = reader.unpack(_u32, 'header')
    if version != VERSION:
        raise FormatError(
            'version',
            "version mismatch: file has {}, expected {}".format(
                version, VERSION
            ),
        )
    length = reader.unpack(_u32, 'config')
    try:
        config_text = bytes(reader.take(length, 'config')).decode('utf-8')
    except UnicodeDecodeError as exc:
        raise FormatError('config', "config is not UTF-8") from exc
    params = reader.table('params')
    optimizer = reader.table('optimizer')
    step = reader.unpack(_u64, 'step')
    if reader.offset != len(reader.payload):
        raise FormatError('step', "trailing bytes after step counter")
    return Checkpoint(config_text, params, optimizer, step)


def snapshot(config, model, optimizer, step):
    return Checkpoint(
        config.dumps(),
        OrderedDict(
            (name, p.data) for name, p in model.named_parameters()
        ),
        optimizer.state_tables() if optimizer is not None else OrderedDict(),
        step,
    )


def save_checkpoint(checkpoint, path):
    """Write `checkpoint` to `path`; return the number of bytes written."""
    payload = dumps_checkpoint(checkpoint)
    try:
        with open(path, 'wb') as f:
            f.write(payload)
    except OSError as exc:
        raise OSError(
            exc.errno,
            "cannot write checkpoint: {}".format(exc.strerror),
            path,
        ) from exc
    return len(payload)


def load_checkpoint(path):
    try:
        with open(path, 'rb') as f:
            payload = f.read()
    except OSError as exc:
        raise OSError(
            exc.errno,
            "cannot read checkpoint: {}".format(exc.strerror),
            path,
        ) from exc
    try:
        return loads_checkpoint(payload)
    except FormatError as exc:
        raise FormatError(exc.field, "{}: {}".format(path, exc)) from exc
