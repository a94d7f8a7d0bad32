# Copyright (C) <2026> Association Prologin <association@prologin.org>
# SPDX-License-Identifier: GPL-3.0+

import os

import numpy as np
from django.test import tag

from analysis.stats import collapse_indicators
from autodiff.tensor import Tensor
from recordings.synth import Band, SynthSpec, synth_corpus
from recordings.windows import load_windows
from tracelib import tests
from tracelib.exceptions import (
    ConfigurationError,
    FormatError,
    NonFiniteError,
)
from tracelib.utils import step_generator
from training.checkpoint import (
    dumps_checkpoint,
    load_checkpoint,
    loads_checkpoint,
    save_checkpoint,
)
from training.config import RunConfig
from training.diagnostics import gradcheck_suite, randomize, reduced_config
from training.engine import (
    TrainState,
    compute_loss,
    pretrain_run,
    train_step,
)
from training.forecast import rollout
from training.model import count_parameters, init_params
from training.optim import AdamW, clip_grad_norm, global_norm, lr_at_step


def small_config(*extra):
    return reduced_config(
        extra=[
            'data.window_s = 1.0',
            'train.steps = 20',
            'train.warmup = 2',
            'train.batch_size = 2',
        ]
        + list(extra)
    )


def random_batch(seed, step, channels=3, steps=5, patch_len=20):
    rng = step_generator(seed, step)
    shape = (2, channels, steps, patch_len)
    return rng.normal(size=shape).astype(np.float32)


def huber_baseline(values, delta=1.0):
    magnitude = np.abs(values)
    return float(
        np.mean(
            np.where(
                magnitude <= delta,
                0.5 * values ** 2,
                delta * (magnitude - 0.5 * delta),
            )
        )
    )


class ScheduleTest(tests.TraceTestCase):
    def test_endpoints(self):
        self.assertEqual(lr_at_step(0, 1e-3, 100, 2000), 0.0)
        self.assertEqual(lr_at_step(100, 1e-3, 100, 2000), 1e-3)
        self.assertEqual(lr_at_step(2000, 1e-3, 100, 2000), 0.0)
        self.assertEqual(lr_at_step(2500, 1e-3, 100, 2000), 0.0)

    def test_linear_warmup(self):
        self.assertAlmostEqual(lr_at_step(25, 1e-3, 100, 2000), 2.5e-4)

    def test_cosine_midpoint(self):
        self.assertAlmostEqual(
            lr_at_step(100 + 950, 1e-3, 100, 2000), 5e-4, places=15
        )

    def test_floor(self):
        self.assertEqual(lr_at_step(2000, 1e-3, 100, 2000, floor=1e-5), 1e-5)
        self.assertGreater(lr_at_step(1999, 1e-3, 100, 2000, floor=1e-5), 1e-5)

    def test_negative_step(self):
        with self.assertRaises(ValueError):
            lr_at_step(-1, 1e-3, 100, 2000)


class ClipTest(tests.TraceTestCase):
    def params(self):
        a = Tensor(np.zeros(2), requires_grad=True)
        b = Tensor(np.zeros(1), requires_grad=True)
        a.grad = np.array([3.0, 4.0])
        b.grad = np.array([12.0])
        return [a, b]

    def test_clips_to_max_norm(self):
        params = self.params()
        self.assertEqual(clip_grad_norm(params, 1.0), 13.0)
        self.assertAlmostEqual(
            global_norm([p.grad for p in params]), 1.0, delta=1e-9
        )
        self.assertAllClose(params[0].grad, [3.0 / 13, 4.0 / 13])

    def test_small_gradients_untouched(self):
        params = self.params()
        clip_grad_norm(params, 20.0)
        self.assertAllClose(params[1].grad, [12.0], rtol=0)


class AdamWTest(tests.TraceTestCase):
    def test_converges_on_quadratic(self):
        curvature = np.array([0.5, 1.0, 2.0])
        optimum = np.array([3.0, -1.0, 0.5])
        x = Tensor(np.zeros(3), requires_grad=True)
        optimizer = AdamW([('x', x)], weight_decay=0.0)
        for step in range(1, 5001):
            x.grad = curvature * (x.data - optimum)
            optimizer.step(1e-2)
            if np.max(np.abs(x.data - optimum)) < 1e-6:
                break
        self.assertLess(np.max(np.abs(x.data - optimum)), 1e-6)
        self.assertLessEqual(step, 5000)

    def test_decoupled_weight_decay(self):
        w = Tensor(np.array([2.0, -4.0]), requires_grad=True)
        optimizer = AdamW([('w', w)], weight_decay=0.1)
        optimizer.step(0.5)
        self.assertBitIdentical(w.data, np.array([2.0, -4.0]) * 0.95)

    def test_moments_follow_parameters(self):
        model = init_params(small_config())
        optimizer = AdamW(model.named_parameters())
        table = optimizer.state_tables()
        self.assertEqual(len(table), 2 * len(model.parameters()))
        for name, p in model.named_parameters():
            self.assertEqual(table['m/' + name].shape, p.shape)
            self.assertEqual(table['v/' + name].dtype, p.dtype)


class ModelTest(tests.TraceTestCase):
    def test_default_parameter_count(self):
        model = init_params(RunConfig().clean(), dtype=np.float32)
        self.assertEqual(count_parameters(model.encoder), 142258)
        self.assertEqual(count_parameters(model.backbone), 38097600)
        self.assertEqual(count_parameters(model.heads), 281400)
        self.assertEqual(count_parameters(model), 38521258)

    def test_same_seed_same_parameters(self):
        config = small_config()
        first = init_params(config).state_dict()
        second = init_params(config).state_dict()
        self.assertEqual(list(first), list(second))
        for name in first:
            self.assertBitIdentical(first[name], second[name])
        other = init_params(config, seed=1).state_dict()
        name = 'backbone.blocks.0.ffn.router.weight'
        self.assertFalse(np.array_equal(other[name], first[name]))

    def test_backbone_is_identity_at_init(self):
        for mode in ('temporal', 'token', 'mean', 'dense'):
            with self.subTest(mode=mode):
                config = small_config(
                    'routing.mode = {}'.format(mode), 'model.layers = 2'
                )
                model = init_params(config, dtype=np.float64)
                e = model.encoder(random_batch(0, 1))
                hidden, _ = model.backbone(e)
                self.assertAllClose(hidden.data, e.data, rtol=0)

    def test_prediction_shapes(self):
        model = init_params(small_config(), dtype=np.float64)
        hidden, predictions, record = model(random_batch(0, 1))
        self.assertEqual(hidden.shape, (2, 3, 5, 8))
        self.assertEqual(sorted(predictions), [1, 2])
        self.assertEqual(predictions[2].shape, (2, 3, 5, 2, 20))
        self.assertEqual(len(record), 1)

    def test_no_step_reads_later_patches(self):
        model = randomize(
            init_params(small_config('model.layers = 2'), dtype=np.float64),
            np.random.default_rng(20),
            scale=0.3,
        )
        rng = np.random.default_rng(21)
        for trial in range(100):
            channels = int(rng.integers(1, 7))
            steps = int(rng.integers(3, 8))
            # patches from step `cut` on are redrawn
            cut = int(rng.integers(1, steps))
            patches = rng.normal(size=(1, channels, steps, 20))
            changed = patches.copy()
            changed[:, :, cut:] = rng.normal(size=changed[:, :, cut:].shape)
            with self.subTest(trial=trial, channels=channels, cut=cut):
                hidden, predictions, record = model(patches)
                hidden_, predictions_, record_ = model(changed)
                self.assertBitIdentical(
                    hidden_.data[:, :, :cut], hidden.data[:, :, :cut]
                )
                for horizon in predictions:
                    self.assertBitIdentical(
                        predictions_[horizon].data[:, :, :cut],
                        predictions[horizon].data[:, :, :cut],
                    )
                self.assertEqual(len(record_), len(record))
                for layer, layer_ in zip(record, record_):
                    self.assertBitIdentical(
                        layer_.grid(layer_.selected)[:, :cut],
                        layer.grid(layer.selected)[:, :cut],
                    )
                    self.assertBitIdentical(
                        layer_.grid(layer_.gates)[:, :cut],
                        layer.grid(layer.gates)[:, :cut],
                    )

    def test_one_model_for_every_montage(self):
        model = randomize(
            init_params(small_config(), dtype=np.float64),
            np.random.default_rng(22),
            scale=0.3,
        )
        count = count_parameters(model)
        shapes = [p.shape for p in model.parameters()]
        rng = np.random.default_rng(23)
        for channels in (6, 16, 19, 32, 64):
            for steps in (4, 10, 30):
                with self.subTest(channels=channels, steps=steps):
                    patches = rng.normal(size=(1, channels, steps, 20))
                    hidden, predictions, record = model(patches)
                    self.assertEqual(hidden.shape, (1, channels, steps, 8))
                    self.assertTrue(np.isfinite(hidden.data).all())
                    for horizon, prediction in predictions.items():
                        self.assertEqual(
                            prediction.shape,
                            (1, channels, steps, horizon, 20),
                        )
                        self.assertTrue(np.isfinite(prediction.data).all())
                    self.assertEqual(record.selected().shape, (1, steps, 2))
        self.assertEqual(count_parameters(model), count)
        self.assertEqual([p.shape for p in model.parameters()], shapes)


class TrainStepTest(tests.TraceTestCase):
    def run_steps(self, config, count):
        state = TrainState.create(config)
        return [
            train_step(state, random_batch(5, step)).report.total
            for step in range(1, count + 1)
        ]

    def test_same_seed_same_losses(self):
        config = small_config()
        first = self.run_steps(config, 10)
        self.assertEqual(first, self.run_steps(config, 10))

    def test_step_advances_schedule(self):
        state = TrainState.create(small_config())
        first = train_step(state, random_batch(5, 1))
        second = train_step(state, random_batch(5, 2))
        self.assertEqual((first.step, second.step), (1, 2))
        self.assertEqual(first.lr, 0.5e-3)
        self.assertEqual(second.lr, 1e-3)
        self.assertEqual(state.optimizer.step_count, 2)

    def test_gradients_are_clipped(self):
        config = small_config('train.clip_norm = 0.01')
        state = TrainState.create(config, dtype=np.float64)
        result = train_step(state, random_batch(5, 1))
        clipped = global_norm([p.grad for p in state.model.parameters()])
        self.assertGreater(result.grad_norm, 0.01)
        self.assertAlmostEqual(clipped, 0.01, delta=1e-9)

    def test_lambda_aux_enters_linearly(self):
        config = small_config()
        without = small_config('loss.lambda_aux = 0')
        model = init_params(config, dtype=np.float64)
        batch = random_batch(5, 1)
        _, _, report = compute_loss(model, batch, config)
        _, _, bare = compute_loss(model, batch, without)
        self.assertGreater(report.aux, 0)
        self.assertEqual(report.ar, bare.ar)
        self.assertAlmostEqual(
            report.total - bare.total, 1e-2 * report.aux, places=12
        )

    def test_non_finite_loss_names_first_tensor(self):
        state = TrainState.create(small_config())
        batch = random_batch(5, 1)
        batch[0, 1, 2, 3] = np.nan
        with self.assertRaises(NonFiniteError) as cm:
            train_step(state, batch)
        self.assertTrue(cm.exception.tensor_name.startswith('node 0 '))

    def test_forecast_rollout(self):
        model = init_params(small_config(), dtype=np.float64)
        prefix = random_batch(5, 1)[0]
        generated = rollout(model, prefix, 3)
        self.assertEqual(generated.shape, (3, 3, 20))
        # the first generated patch is the horizon-1 prediction of the prefix
        _, predictions, _ = model(prefix[None])
        self.assertAllClose(generated[:, 0], predictions[1].data[0, :, -1, 0])


class CheckpointTest(tests.WithTempDirMixin, tests.TraceTestCase):
    def trained_state(self):
        state = TrainState.create(small_config())
        for step in (1, 2):
            train_step(state, random_batch(5, step))
        return state

    def test_save_load_save_is_byte_identical(self):
        state = self.trained_state()
        payload = dumps_checkpoint(state.checkpoint())
        path = self.path('state.trck')
        size = save_checkpoint(state.checkpoint(), path)
        self.assertEqual(size, len(payload))
        with open(path, 'rb') as f:
            self.assertEqual(f.read(), payload)
        loaded = load_checkpoint(path)
        self.assertEqual(loaded.step, 2)
        self.assertEqual(dumps_checkpoint(loaded), payload)
        restored = TrainState.restore(loaded)
        self.assertEqual(dumps_checkpoint(restored.checkpoint()), payload)

    def test_restored_state_continues_identically(self):
        state = self.trained_state()
        restored = TrainState.restore(
            loads_checkpoint(dumps_checkpoint(state.checkpoint()))
        )
        for step in range(3, 6):
            batch = random_batch(5, step)
            self.assertEqual(
                train_step(state, batch).report.total,
                train_step(restored, batch).report.total,
            )

    def test_config_round_trip(self):
        config = small_config('routing.mode = token')
        text = config.dumps()
        self.assertEqual(RunConfig.loads(text).dumps(), text)
        self.assertEqual(
            loads_checkpoint(
                dumps_checkpoint(self.trained_state().checkpoint())
            ).config.dumps(),
            small_config().dumps(),
        )

    def test_corrupted_files(self):
        payload = dumps_checkpoint(self.trained_state().checkpoint())
        with self.assertRaises(FormatError) as cm:
            loads_checkpoint(b'XXXX' + payload[4:])
        self.assertEqual(cm.exception.field, 'magic')
        with self.assertRaises(FormatError) as cm:
            loads_checkpoint(payload[:-3])
        self.assertEqual(cm.exception.field, 'step')
        with self.assertRaises(FormatError):
            loads_checkpoint(payload + b'\0')
        with self.assertRaises(FormatError) as cm:
            loads_checkpoint(payload[:4] + b'\x02' + payload[5:])
        self.assertEqual(cm.exception.field, 'version')

    def test_missing_file(self):
        with self.assertRaises(OSError) as cm:
            load_checkpoint(self.path('nope.trck'))
        self.assertEqual(cm.exception.filename, self.path('nope.trck'))


class PretrainRunTest(tests.WithSmallCorpusMixin, tests.TraceTestCase):
    def config(self, *extra):
        return reduced_config(
            extra=[
                'data.window_s = 1.0',
                'train.steps = 6',
                'train.warmup = 1',
                'train.batch_size = 2',
                'train.log_interval = 2',
                'train.checkpoint_interval = 3',
            ]
            + list(extra)
        )

    def read(self, *parts):
        with open(self.path(*parts), 'rb') as f:
            return f.read()

    def test_run_directory(self):
        pretrain_run(self.manifest, self.config(), self.path('run'))
        with open(self.path('run', 'run.log'), encoding='utf-8') as f:
            rows = [line.rstrip('\n').split('\t') for line in f]
        self.assertEqual([row[0] for row in rows], ['2', '4', '6'])
        # step, lr, two horizons, aux, total
        self.assertEqual({len(row) for row in rows}, {6})
        with open(self.path('run', 'usage.tsv'), encoding='utf-8') as f:
            usage = [line.split('\t') for line in f]
        self.assertEqual(len(usage), 3)
        self.assertEqual({len(row) for row in usage}, {1 + 4})
        for row in usage:
            self.assertAlmostEqual(sum(map(float, row[1:])), 2.0)
        for name in ('step-3.trck', 'step-6.trck', 'last.trck'):
            self.assertTrue(os.path.exists(self.path('run', name)), name)

    def test_runs_are_deterministic(self):
        first = pretrain_run(self.manifest, self.config(), self.path('a'))
        second = pretrain_run(self.manifest, self.config(), self.path('b'))
        self.assertEqual(first.losses(), second.losses())
        self.assertEqual(
            self.read('a', 'last.trck'), self.read('b', 'last.trck')
        )

    def test_resume_reproduces_trajectory(self):
        full = pretrain_run(self.manifest, self.config(), self.path('full'))
        resumed = pretrain_run(
            self.manifest,
            self.config(),
            self.path('resumed'),
            resume=self.path('full', 'step-3.trck'),
        )
        self.assertEqual([r.step for r in resumed.history], [4, 5, 6])
        self.assertEqual(resumed.losses(), full.losses()[3:])
        self.assertEqual(
            self.read('full', 'last.trck'), self.read('resumed', 'last.trck')
        )

    def test_resume_needs_the_same_config(self):
        pretrain_run(self.manifest, self.config(), self.path('run'))
        with self.assertRaises(ConfigurationError):
            pretrain_run(
                self.manifest,
                self.config('train.lr = 0.002'),
                self.path('other'),
                resume=self.path('run', 'last.trck'),
            )


class GradcheckSuiteTest(tests.TraceTestCase):
    def test_every_component_passes(self):
        reports = gradcheck_suite(seed=3)
        self.assertEqual(
            list(reports),
            [
                'encoder',
                'ms_chpe',
                'csta',
                'temporal_former',
                'ctr_ffn.temporal',
                'ctr_ffn.token',
                'ctr_ffn.mean',
                'ctr_ffn.dense',
                'heads',
                'huber',
                'aux_loss',
            ],
        )
        for name, report in reports.items():
            self.assertTrue(report.passed, '{}\n{}'.format(name, report))
            self.assertLess(report.max_rel_error, 1e-4)

    @tag('slow')
    def test_seeds_and_montages(self):
        for seed in range(10):
            for channels in (3, 6):
                for steps in (4, 6):
                    reports = gradcheck_suite(
                        seed=seed, channels=channels, steps=steps
                    )
                    for name, report in reports.items():
                        with self.subTest(
                            seed=seed,
                            channels=channels,
                            steps=steps,
                            component=name,
                        ):
                            self.assertTrue(report.passed, str(report))
                            self.assertLess(report.max_rel_error, 1e-4)


SINUSOID_BANDS = (Band('delta', 2.0, 20.0), Band('alpha', 10.0, 15.0))


def acceptance_config(*extra):
    return RunConfig.parse(
        [
            'data.window_s = 10',
            'model.layers = 2',
            'model.d = 32',
            'model.heads = 4',
            'model.ffn_dim = 64',
            'model.tf_queries = 2',
            'model.tf_heads = 4',
            'routing.experts = 8',
            'routing.topk = 2',
            'train.steps = 2000',
            'train.warmup = 100',
            'train.lr = 0.002',
            'train.log_interval = 100',
            'train.checkpoint_interval = 1000',
        ]
        + list(extra)
    )


@tag('slow')
class TrainingAcceptanceTest(tests.WithTempDirMixin, tests.TraceTestCase):
    def corpus(self, **kwargs):
        spec = SynthSpec(
            seed=11,
            channel_count=8,
            duration_s=20.0,
            **kwargs,
        )
        return synth_corpus(spec, 16, self.path('corpus'))

    def test_forecasting_beats_predict_zero(self):
        manifest = self.corpus(
            bands=SINUSOID_BANDS, frequency_jitter=0.0, noise_std=0.5
        )
        config = acceptance_config()
        windows = load_windows(manifest, 10.0, 200)
        baseline = huber_baseline(np.stack(windows.grids)[:, :, 1:])

        result = pretrain_run(manifest, config, self.path('run'))
        horizon1 = [r.report.horizon_losses[1] for r in result.history]
        ar = [r.report.ar for r in result.history]
        self.assertLess(np.mean(horizon1[-100:]), 0.7 * baseline)
        self.assertLess(np.mean(ar[-100:]), np.mean(ar[:100]))

    def test_longer_horizons_cost_more(self):
        manifest = self.corpus()
        losses = {}
        for horizons in ('1', '1,2', '1,2,4'):
            config = acceptance_config(
                'loss.horizons = {}'.format(horizons), 'train.steps = 600'
            )
            result = pretrain_run(
                manifest, config, self.path('h' + horizons.replace(',', ''))
            )
            losses[horizons] = np.mean(
                [r.report.ar for r in result.history[-100:]]
            )
        self.assertGreaterEqual(losses['1,2,4'], losses['1,2'])
        self.assertGreaterEqual(losses['1,2'], losses['1'])

    def test_balance_loss_spreads_routing(self):
        manifest = self.corpus()
        indicators = {}
        for weight in ('0.01', '0'):
            config = acceptance_config(
                'loss.lambda_aux = {}'.format(weight), 'train.steps = 600'
            )
            result = pretrain_run(manifest, config, self.path('aux' + weight))
            f = np.mean([r.report.f for r in result.history[-100:]], axis=0)
            indicators[weight] = collapse_indicators(f, topk=2)
        balanced, free = indicators['0.01'], indicators['0']
        self.assertLessEqual(balanced.max_frequency, free.max_frequency)
        self.assertGreaterEqual(balanced.entropy, free.entropy)
