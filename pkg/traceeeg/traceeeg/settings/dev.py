# Copyright (C) <2026> Association Prologin <association@prologin.org>
# SPDX-License-Identifier: GPL-3.0+

from .common import *

# You can use $ pwgen -y 64
SECRET_KEY = 'CHANGEME'

DEBUG = True

# Logging
# https://docs.djangoproject.com/en/3.2/topics/logging/

LOGGING = {
    'version': 1,
    'disable_existing_loggers': False,
    'formatters': {
        'run': {'format': '%(asctime)s %(levelname)s %(name)s: %(message)s'}
    },
    'handlers': {
        'console': {
            'level': 'DEBUG',
            'class': 'logging.StreamHandler',
            'formatter': 'run',
        }
    },
    'loggers': {
        app: {'handlers': ['console'], 'level': 'INFO', 'propagate': False}
        for app in TRACE_APPS
    },
}
