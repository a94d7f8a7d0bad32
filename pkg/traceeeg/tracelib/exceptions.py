# Copyright (C) <2026> Association Prologin <association@prologin.org>
# SPDX-License-Identifier: GPL-3.0+

from django.core.exceptions import ImproperlyConfigured


class ContractViolation(ValueError):
    """Inputs do not satisfy the shape or arity contract of a primitive."""


class ParameterError(ValueError):
    """An operation received a parameter outside of its valid range."""


class ConfigurationError(ImproperlyConfigured):
    pass


class FormatError(ValueError):
    """
    A binary or text file does not follow its format.

    `field` names the offending header field or record so that callers can
    report it without parsing the message.
    """

    def __init__(self, field, message=None):
        self.field = field
        super().__init__(message or field)


class NonFiniteError(ArithmeticError):
    def __init__(self, tensor_name, message=None):
        self.tensor_name = tensor_name
        if message is None:
            message = "non-finite values in {}".format(tensor_name)
        else:
            message = "{} (first at {})".format(message, tensor_name)
        super().__init__(message)


class TrainingDataError(ValueError):
    """The data handed to a training or evaluation loop cannot be used."""
