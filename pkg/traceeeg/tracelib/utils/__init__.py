# Copyright (C) <2026> Association Prologin <association@prologin.org>
# SPDX-License-Identifier: GPL-3.0+

from contextlib import contextmanager
import enum
import threading

import numpy as np

from tracelib.exceptions import ConfigurationError


def sizeof_fmt(num: int, suffix='B'):
    for unit in ('', 'Ki', 'Mi', 'Gi', 'Ti', 'Pi', 'Ei', 'Zi'):
        if abs(num) < 1024.0:
            return "%3.1f%s%s" % (num, unit, suffix)
        num /= 1024.0
    return "%.1f%s%s" % (num, 'Yi', suffix)


class ChoiceEnum(enum.Enum):
    """
    Enum whose members are selected by name from configuration files and
    command-line flags.

        class RoutingMode(ChoiceEnum):
            temporal = 'temporal'
            token = 'token'

        RoutingMode.parse('token')  # RoutingMode.token
    """

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        try:
            return cls[str(value).strip()]
        except KeyError:
            raise ConfigurationError(
                "{!r} is not a valid {} (choose from {})".format(
                    value, cls.__name__, ', '.join(cls.names())
                )
            )

    @classmethod
    def names(cls):
        return tuple(m.name for m in cls)

    @classmethod
    def choices(cls):
        """Names usable as argparse `choices`."""
        return cls.names()

    def __str__(self):
        return self.name


def read_props(lines, separator='='):
    """
    Parse `section.key = value` lines into an ordered list of
    ((section, key), raw value, line number) triples.

    Blank lines and lines starting with `#` are ignored. Values are kept
    as stripped strings: typing them is the job of the caller, which knows
    the expected field types.
    """
    props = []
    for lineno, line in enumerate(lines, 1):
        line = line.strip()
        if not line or line.startswith('#'):
            continue
        if separator not in line:
            raise ConfigurationError(
                "line {}: expected 'section.key {} value'".format(
                    lineno, separator
                )
            )
        name, value = line.split(separator, 1)
        name = name.strip()
        if name.count('.') != 1:
            raise ConfigurationError(
                "line {}: {!r} is not of the form section.key".format(
                    lineno, name
                )
            )
        section, key = name.split('.')
        props.append(((section, key), value.strip(), lineno))
    return props


def parse_bool(value):
    value_lower = str(value).strip().lower()
    if value_lower in ('true', 'on', 'yes', '1'):
        return True
    if value_lower in ('false', 'off', 'no', '0'):
        return False
    raise ConfigurationError("{!r} is not a boolean".format(value))


def step_generator(seed, *stream):
    """
    Random generator that is a pure function of `seed` and the `stream`
    integers (segment index, training step, ...).
    """
    return np.random.default_rng([int(seed)] + [int(s) for s in stream])


_random_state = threading.local()


@contextmanager
def save_random_state(seed=None):
    """
    Run a block with its own numpy generator, reachable through
    `current_generator()`, and restore the previous one afterwards.
    """
    previous = getattr(_random_state, 'generator', None)
    _random_state.generator = np.random.default_rng(seed)
    try:
        yield _random_state.generator
    finally:
        _random_state.generator = previous


def current_generator():
    generator = getattr(_random_state, 'generator', None)
    if generator is None:
        raise RuntimeError("no active random state")
    return generator
