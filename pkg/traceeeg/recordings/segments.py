# Copyright (C) <2026> Association Prologin <association@prologin.org>
# SPDX-License-Identifier: GPL-3.0+

"""
The `.trce` segment file.

    magic b"TRCE" | version u32 | channels u32 | samples u64 | rate f32
    | channels * samples float32, channel-major

All integers and floats are little-endian.
"""

from dataclasses import dataclass
import struct

import numpy as np

from tracelib.exceptions import FormatError, ParameterError

MAGIC = b'TRCE'
VERSION = 1
HEADER = struct.Struct('<4sIIQf')
SAMPLE_DTYPE = np.dtype('<f4')


@dataclass(eq=False)
class EEGSegment:
    samples: np.ndarray
    sample_rate_hz: float

    def __post_init__(self):
        self.samples = np.asarray(self.samples)
        if self.samples.ndim != 2 or 0 in self.samples.shape:
            raise ParameterError(
                "samples must be a non-empty channels x time matrix, "
                "got shape {}".format(self.samples.shape)
            )
        if not self.sample_rate_hz > 0:
            raise ParameterError(
                "sample rate must be positive, got {}".format(
                    self.sample_rate_hz
                )
            )

    @property
    def channel_count(self):
        return self.samples.shape[0]

    @property
    def sample_count(self):
        return self.samples.shape[1]

    @property
    def duration_s(self):
        return self.sample_count / self.sample_rate_hz

    def __repr__(self):
        return '<EEGSegment {}x{} @ {:g} Hz>'.format(
            self.channel_count, self.sample_count, self.sample_rate_hz
        )


def dumps_segment(seg):
    header = HEADER.pack(
        MAGIC,
        VERSION,
        seg.channel_count,
        seg.sample_count,
        seg.sample_rate_hz,
    )
    return header + np.ascontiguousarray(seg.samples, SAMPLE_DTYPE).tobytes()


def loads_segment(payload):
    if len(payload) < HEADER.size:
        raise FormatError('header', "truncated header")
    magic, version, channels, samples, rate = HEADER.unpack_from(payload)
    if magic != MAGIC:
        raise FormatError('magic', "bad magic {!r}".format(magic))
    if version != VERSION:
        raise FormatError(
            'version',
            "version mismatch: file has {}, expected {}".format(
                version, VERSION
            ),
        )
    if channels == 0 or samples == 0:
        raise FormatError('shape', "empty segment")
    if not rate > 0:
        raise FormatError('sample_rate', "non-positive sample rate")
    expected = channels * samples * SAMPLE_DTYPE.itemsize
    body = memoryview(payload)[HEADER.size :]
    if len(body) < expected:
        raise FormatError(
            'payload',
            "truncated payload: {} bytes for {} values".format(
                len(body), channels * samples
            ),
        )
    if len(body) > expected:
        raise FormatError('payload', "trailing bytes after payload")
    values = np.frombuffer(body, dtype=SAMPLE_DTYPE, count=channels * samples)
    return EEGSegment(
        values.reshape(channels, samples).astype(np.float32), float(rate)
    )


def write_segment(seg, path):
    try:
        with open(path, 'wb') as f:
            f.write(dumps_segment(seg))
    except OSError as exc:
        raise OSError(
            exc.errno, "cannot write segment: {}".format(exc.strerror), path
        ) from exc


def read_segment(path):
    try:
        with open(path, 'rb') as f:
            payload = f.read()
    except OSError as exc:
        raise OSError(
            exc.errno, "cannot read segment: {}".format(exc.strerror), path
        ) from exc
    try:
        return loads_segment(payload)
    except FormatError as exc:
        raise FormatError(exc.field, "{}: {}".format(path, exc)) from exc
