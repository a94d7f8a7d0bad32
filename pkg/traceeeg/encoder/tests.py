# Copyright (C) <2026> Association Prologin <association@prologin.org>
# SPDX-License-Identifier: GPL-3.0+

import numpy as np

from autodiff import functional as F
from autodiff.gradcheck import finite_diff_check
from autodiff.nn import Initializer
from autodiff.tensor import Tensor
from encoder.config import Branches, EncoderConfig, Fusion
from encoder.embedding import PatchEncoder
from encoder.patches import conv_length, patchify, unpatchify
from tracelib import tests
from tracelib.exceptions import ConfigurationError, ParameterError
from training.diagnostics import randomize


def encoder(config=None, d=200, patch_len=200, seed=0):
    init = Initializer(np.random.default_rng(seed), np.float64)
    return PatchEncoder(config or EncoderConfig(), d, patch_len, init)


def small_config(**fields):
    values = dict(
        kernels=(5, 9),
        stride=5,
        filters=4,
        groups=2,
        chpe_kernels=(3, 5),
    )
    values.update(fields)
    return EncoderConfig(**values)


class PatchifyTest(tests.TraceTestCase):
    def test_shapes(self):
        grid = patchify(np.zeros((19, 6000)), 200)
        self.assertEqual(grid.shape, (19, 30, 200))
        self.assertEqual(patchify(np.zeros((2, 200)), 200).shape, (2, 1, 200))
        self.assertEqual(patchify(np.zeros((2, 399)), 200).shape, (2, 1, 200))

    def test_window_shorter_than_patch(self):
        with self.assertRaises(ParameterError):
            patchify(np.zeros((2, 199)), 200)

    def test_unpatchify_restores_samples(self):
        samples = np.random.default_rng(0).normal(size=(3, 1050))
        grid = patchify(samples, 100)
        self.assertBitIdentical(unpatchify(grid), samples[:, :1000])
        self.assertEqual(grid[1, 2, 5], samples[1, 205])


class TemporalEmbedTest(tests.TraceTestCase):
    def test_branch_widths(self):
        self.assertEqual(
            [conv_length(200, q, 25) for q in (25, 49, 99)], [8, 7, 5]
        )
        enc = encoder()
        self.assertEqual(enc.flat_width, 160)
        self.assertEqual(enc.temporal_proj.shape, (160, 200))

    def test_zero_patch(self):
        e = encoder().temporal_embed(np.zeros((1, 2, 3, 200)))
        self.assertEqual(e.shape, (1, 2, 3, 200))
        self.assertAllClose(e.data, np.zeros((1, 2, 3, 200)), rtol=0)

    def test_any_channel_count(self):
        enc = encoder()
        rng = np.random.default_rng(1)
        for channels in (1, 6, 19, 64):
            with self.subTest(channels=channels):
                grid = rng.normal(size=(1, channels, 1, 200))
                self.assertEqual(enc(grid).shape, (1, channels, 1, 200))

    def test_channels_are_encoded_independently(self):
        enc = encoder(small_config(), d=8, patch_len=20)
        grid = np.random.default_rng(2).normal(size=(1, 4, 3, 20))
        alone = enc.embed(grid[:, 1:2]).data
        self.assertAllClose(enc.embed(grid).data[:, 1:2], alone, rtol=1e-10)

    def test_patch_too_short_for_kernels(self):
        with self.assertRaises(ParameterError):
            encoder(patch_len=50)


class SpectralEmbedTest(tests.TraceTestCase):
    def spectrum(self, patch):
        enc = encoder()
        x = Tensor(np.asarray(patch, dtype=float)[None, None, None])
        return F.rdft_magnitude(x, enc.mask_re, enc.mask_im).data[0, 0, 0]

    def test_constant_patch(self):
        spectrum = self.spectrum(np.full(200, 3.0))
        self.assertEqual(spectrum.shape, (101,))
        self.assertAlmostEqual(spectrum[0], 600.0)
        self.assertAllClose(spectrum[1:], np.zeros(100), atol=1e-9)

    def test_cosine_bin(self):
        t = np.arange(200)
        spectrum = self.spectrum(np.cos(2 * np.pi * 10 * t / 200))
        self.assertAlmostEqual(spectrum[10], 100.0)
        others = np.delete(spectrum, 10)
        self.assertAllClose(others, np.zeros(100), atol=1e-9)

    def test_zero_mask_leaves_the_bias(self):
        enc = encoder()
        enc.mask_re.data[:] = 0.0
        grid = np.random.default_rng(3).normal(size=(2, 3, 4, 200))
        e = enc.spectral_embed(grid).data
        expected = np.broadcast_to(enc.spectral_bias.data, e.shape)
        self.assertBitIdentical(e, expected)

    def test_mask_length_mismatch(self):
        enc = encoder(EncoderConfig(branches=Branches.freq))
        with self.assertRaises(ConfigurationError):
            enc.spectral_embed(np.zeros((1, 1, 1, 100)))


class GatedFuseTest(tests.TraceTestCase):
    def setUp(self):
        self.enc = encoder(small_config(), d=8, patch_len=20)
        rng = np.random.default_rng(4)
        self.e_temp = Tensor(rng.normal(size=(2, 3, 4, 8)))
        self.e_freq = Tensor(rng.normal(size=(2, 3, 4, 8)))

    def test_zero_gate_weights(self):
        self.enc.gate_weight.data[:] = 0.0
        e = self.enc.gated_fuse(self.e_temp, self.e_freq).data
        self.assertAllClose(e, self.e_temp.data + 0.5 * self.e_freq.data)

    def test_zero_spectral_embedding(self):
        zeros = Tensor(np.zeros((2, 3, 4, 8)))
        e = self.enc.gated_fuse(self.e_temp, zeros).data
        self.assertAllClose(e, self.e_temp.data, rtol=0)

    def test_gate_range(self):
        randomize(self.enc, np.random.default_rng(5), scale=3.0)
        gate = self.enc.gate(self.e_temp, self.e_freq).data
        self.assertTrue(((gate > 0) & (gate < 1)).all())

    def test_variants(self):
        grid = np.random.default_rng(6).normal(size=(1, 2, 3, 20))
        for branches, fusion in [
            (Branches.time, Fusion.gate),
            (Branches.freq, Fusion.gate),
            (Branches.both, Fusion.sum),
        ]:
            with self.subTest(branches=branches, fusion=fusion):
                enc = encoder(
                    small_config(branches=branches, fusion=fusion),
                    d=8,
                    patch_len=20,
                )
                names = dict(enc.named_parameters())
                self.assertNotIn('gate_weight', names)
                self.assertEqual(
                    'temporal_proj' in names, branches != Branches.freq
                )
                self.assertEqual(enc(grid).shape, (1, 2, 3, 8))


class ChannelPositionTest(tests.TraceTestCase):
    def test_identity_at_init(self):
        enc = encoder(small_config(), d=8, patch_len=20)
        e = Tensor(np.random.default_rng(7).normal(size=(2, 5, 3, 8)))
        self.assertBitIdentical(enc.ms_chpe(e).data, e.data)

    def test_step_locality(self):
        enc = randomize(
            encoder(small_config(), d=8, patch_len=20),
            np.random.default_rng(8),
        )
        rng = np.random.default_rng(9)
        e = rng.normal(size=(1, 5, 4, 8))
        perturbed = e.copy()
        perturbed[:, :, 2] += rng.normal(size=(1, 5, 8))
        diff = enc.ms_chpe(Tensor(perturbed)).data - enc.ms_chpe(
            Tensor(e)
        ).data
        changed = np.abs(diff).sum(axis=(0, 1, 3)) > 0
        self.assertEqual(changed.tolist(), [False, False, True, False])

    def test_kernel_longer_than_montage(self):
        config = small_config(chpe_kernels=(5, 11, 19))
        enc = randomize(
            encoder(config, d=8, patch_len=20), np.random.default_rng(10)
        )
        e = np.random.default_rng(11).normal(size=(2, 6, 3, 8))
        out = enc.ms_chpe(Tensor(e)).data
        self.assertEqual(out.shape, (2, 6, 3, 8))

        x = e.transpose(0, 2, 3, 1)
        expected = x.copy()
        for conv in enc.chpe:
            expected += dwconv_oracle(x, conv)
        self.assertAllClose(out, expected.transpose(0, 3, 1, 2), rtol=1e-12)


def dwconv_oracle(x, conv):
    """Zero-padded channel convolution of (batch, steps, d, channels)."""
    batch, steps, d, channels = x.shape
    kernel = conv.weight.shape[1]
    left = (kernel - 1) // 2
    out = np.zeros_like(x)
    for c in range(channels):
        out[..., c] = conv.bias.data
        for k in range(kernel):
            source = c + k - left
            if 0 <= source < channels:
                out[..., c] += conv.weight.data[:, k] * x[..., source]
    return out


class EncoderGradientTest(tests.TraceTestCase):
    def test_finite_differences(self):
        rng = np.random.default_rng(12)
        enc = randomize(encoder(small_config(), d=8, patch_len=20), rng)
        grid = Tensor(rng.normal(size=(1, 3, 2, 20)), requires_grad=True)
        weights = Tensor(rng.normal(size=(1, 3, 2, 8)))
        names, params = zip(*enc.named_parameters())
        report = finite_diff_check(
            lambda: (enc(grid) * weights).sum(),
            list(params) + [grid],
            names=list(names) + ['grid'],
            max_coords=12,
            rng=rng,
        )
        self.assertTrue(report.passed, str(report))
