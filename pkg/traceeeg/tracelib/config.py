# Copyright (C) <2026> Association Prologin <association@prologin.org>
# SPDX-License-Identifier: GPL-3.0+

"""
Typed configuration sections read from `section.key = value` files.

A section is a dataclass deriving from `ConfigSection` whose fields are
declared with `option()`, which records how the raw text is parsed:

    @dataclass
    class LossConfig(ConfigSection):
        section = 'loss'
        horizons: tuple = option((1, 2, 4), tuple, item=int)
        huber_delta: float = option(1.0, float)
"""

import dataclasses

from tracelib.exceptions import ConfigurationError
from tracelib.utils import ChoiceEnum, parse_bool


def option(default, kind, item=None, optional=False):
    return dataclasses.field(
        default=default,
        metadata={'kind': kind, 'item': item, 'optional': optional},
    )


def _parse_scalar(kind, raw):
    if kind is bool:
        return parse_bool(raw)
    if isinstance(kind, type) and issubclass(kind, ChoiceEnum):
        return kind.parse(raw)
    try:
        return kind(raw)
    except ValueError:
        raise ConfigurationError(
            "{!r} is not a valid {}".format(raw, kind.__name__)
        )


def _render_scalar(value):
    if isinstance(value, bool):
        return 'true' if value else 'false'
    if isinstance(value, float):
        return repr(value)
    return str(value)


class ConfigSection:
    section = None

    @classmethod
    def keys(cls):
        return [f.name for f in dataclasses.fields(cls)]

    def set_raw(self, key, raw):
        fields = {f.name: f for f in dataclasses.fields(self)}
        if key not in fields:
            raise ConfigurationError(
                "unknown key {}.{}".format(self.section, key)
            )
        meta = fields[key].metadata
        try:
            if meta['optional'] and raw in ('', 'auto'):
                value = None
            elif meta['kind'] is tuple:
                value = tuple(
                    _parse_scalar(meta['item'], part.strip())
                    for part in raw.split(',')
                    if part.strip()
                )
            else:
                value = _parse_scalar(meta['kind'], raw)
        except ConfigurationError as exc:
            raise ConfigurationError(
                "{}.{}: {}".format(self.section, key, exc)
            ) from exc
        setattr(self, key, value)

    def clean(self):
        """Check cross-field constraints; raise ConfigurationError."""

    def require(self, condition, message):
        if not condition:
            raise ConfigurationError("{}: {}".format(self.section, message))

    def lines(self):
        for f in dataclasses.fields(self):
            value = getattr(self, f.name)
            if value is None:
                text = 'auto'
            elif isinstance(value, tuple):
                text = ','.join(_render_scalar(v) for v in value)
            else:
                text = _render_scalar(value)
            yield '{}.{} = {}'.format(self.section, f.name, text)
