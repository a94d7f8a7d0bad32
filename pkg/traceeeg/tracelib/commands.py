# Copyright (C) <2026> Association Prologin <association@prologin.org>
# SPDX-License-Identifier: GPL-3.0+

from contextlib import contextmanager

from django.core.exceptions import ImproperlyConfigured
from django.core.management.base import CommandError

from tracelib.exceptions import NonFiniteError

DOMAIN_ERRORS = (ValueError, ArithmeticError, ImproperlyConfigured, OSError)


@contextmanager
def reported_errors():
    """Turn domain and I/O failures into a one-line CommandError."""
    try:
        yield
    except NonFiniteError as exc:
        raise CommandError("training diverged: {}".format(exc)) from exc
    except OSError as exc:
        where = ' ({})'.format(exc.filename) if exc.filename else ''
        raise CommandError(
            '{}{}'.format(exc.strerror or exc, where)
        ) from exc
    except DOMAIN_ERRORS as exc:
        raise CommandError(str(exc)) from exc
