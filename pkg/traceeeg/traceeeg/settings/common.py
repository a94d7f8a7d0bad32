# Copyright (C) <2026> Association Prologin <association@prologin.org>
# SPDX-License-Identifier: GPL-3.0+

"""
Django common settings for the TRACE EEG project.

Local settings (dev.py) import this module and add the secret key and the
logging configuration.
"""
import os

# Build paths inside the project like this: os.path.join(BASE_DIR, ...)
BASE_DIR = os.path.dirname(
    os.path.dirname(os.path.dirname(os.path.realpath(__file__)))
)
PROJECT_ROOT_DIR = os.path.dirname(BASE_DIR)

DEBUG = False

ALLOWED_HOSTS = []

# Application definition

TRACE_APPS = (
    'autodiff',
    'recordings',
    'encoder',
    'backbone',
    'objective',
    'training',
    'finetune',
    'analysis',
)

INSTALLED_APPS = TRACE_APPS

# Nothing is stored in a database
DATABASES = {}

USE_TZ = True

# Numerics

# Precision of training and inference runs; tests and gradient checks run
# in TRACE_TEST_DTYPE
TRACE_RUN_DTYPE = 'float32'
TRACE_TEST_DTYPE = 'float64'

# Central-difference step and relative tolerance of gradcheck
TRACE_GRADCHECK_EPS = 1e-5
TRACE_GRADCHECK_TOL = 1e-4

# Runs

# Processes generating synthetic segments
TRACE_DATA_WORKERS = 1

TRACE_RUNS_ROOT = os.path.join(PROJECT_ROOT_DIR, 'runs')

# In optimizer steps
TRACE_LOG_INTERVAL = 10
TRACE_CHECKPOINT_INTERVAL = 500
