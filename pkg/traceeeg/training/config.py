# Copyright (C) <2026> Association Prologin <association@prologin.org>
# SPDX-License-Identifier: GPL-3.0+

"""
Run configuration: every section of a `section.key = value` file.

    model.layers = 4
    routing.mode = mean
    loss.horizons = 1,2
"""

from dataclasses import dataclass, field

from backbone.config import ModelConfig, RoutingConfig
from encoder.config import Branches, EncoderConfig
from finetune.config import FinetuneConfig
from objective.config import LossConfig
from tracelib.config import ConfigSection, option
from tracelib.exceptions import ConfigurationError
from tracelib.utils import ChoiceEnum, read_props


class Precision(ChoiceEnum):
    float32 = 'float32'
    float64 = 'float64'


@dataclass
class TrainConfig(ConfigSection):
    section = 'train'

    steps: int = option(2000, int)
    batch_size: int = option(8, int)
    lr: float = option(1e-3, float)
    weight_decay: float = option(1e-2, float)
    warmup: int = option(100, int)
    lr_floor: float = option(0.0, float)
    clip_norm: float = option(1.0, float)
    seed: int = option(0, int)
    # auto: TRACE_LOG_INTERVAL / TRACE_CHECKPOINT_INTERVAL / TRACE_RUN_DTYPE
    log_interval: int = option(None, int, optional=True)
    checkpoint_interval: int = option(None, int, optional=True)
    precision: Precision = option(None, Precision, optional=True)

    def clean(self):
        self.require(self.steps >= 1, "at least one step")
        self.require(
            0 <= self.warmup < self.steps,
            "warmup ({}) must be below steps ({})".format(
                self.warmup, self.steps
            ),
        )
        self.require(self.batch_size >= 1, "batch_size must be positive")
        self.require(self.lr > 0, "lr must be positive")
        self.require(
            0 <= self.lr_floor <= self.lr, "lr_floor must lie in [0, lr]"
        )
        self.require(self.clip_norm > 0, "clip_norm must be positive")
        self.require(self.weight_decay >= 0, "weight_decay must be >= 0")
        for name in ('log_interval', 'checkpoint_interval'):
            value = getattr(self, name)
            self.require(
                value is None or value >= 1, "{} must be positive".format(name)
            )


@dataclass
class DataConfig(ConfigSection):
    section = 'data'

    window_s: float = option(30.0, float)
    patch_len: int = option(200, int)

    def clean(self):
        self.require(self.window_s > 0, "window_s must be positive")
        self.require(self.patch_len >= 2, "patch_len must be at least 2")


SECTIONS = (
    ('data', DataConfig),
    ('encoder', EncoderConfig),
    ('finetune', FinetuneConfig),
    ('loss', LossConfig),
    ('model', ModelConfig),
    ('routing', RoutingConfig),
    ('train', TrainConfig),
)


@dataclass
class RunConfig:
    data: DataConfig = field(default_factory=DataConfig)
    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    finetune: FinetuneConfig = field(default_factory=FinetuneConfig)
    loss: LossConfig = field(default_factory=LossConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    routing: RoutingConfig = field(default_factory=RoutingConfig)
    train: TrainConfig = field(default_factory=TrainConfig)

    def sections(self):
        return [getattr(self, name) for name, _ in SECTIONS]

    def clean(self):
        for section in self.sections():
            section.clean()
        if (
            self.encoder.branches != Branches.freq
            and max(self.encoder.kernels) > self.data.patch_len
        ):
            raise ConfigurationError(
                "encoder: kernel {} does not fit patches of {}".format(
                    max(self.encoder.kernels), self.data.patch_len
                )
            )
        return self

    @classmethod
    def parse(cls, lines):
        config = cls()
        sections = dict(zip((name for name, _ in SECTIONS), config.sections()))
        for (section, key), raw, lineno in read_props(lines):
            if section not in sections:
                raise ConfigurationError(
                    "line {}: unknown section {!r}".format(lineno, section)
                )
            try:
                sections[section].set_raw(key, raw)
            except ConfigurationError as exc:
                raise ConfigurationError(
                    "line {}: {}".format(lineno, exc)
                ) from exc
        return config.clean()

    @classmethod
    def loads(cls, text):
        return cls.parse(text.splitlines())

    @classmethod
    def load(cls, path):
        try:
            with open(path, encoding='utf-8') as f:
                return cls.parse(f.readlines())
        except OSError as exc:
            raise OSError(
                exc.errno,
                "cannot read config: {}".format(exc.strerror),
                path,
            ) from exc

    def dumps(self):
        """Canonical text form; parsing it back gives the same config."""
        lines = []
        for section in self.sections():
            lines.extend(section.lines())
        return ''.join(line + '\n' for line in lines)
