# Copyright (C) <2026> Association Prologin <association@prologin.org>
# SPDX-License-Identifier: GPL-3.0+

"""Band-pass, notch, resampling and per-window standardization."""

import numpy as np
from scipy import signal

from recordings.segments import EEGSegment
from tracelib.exceptions import ParameterError

BANDPASS_ORDER = 2
NOTCH_QUALITY = 30.0
ANTIALIAS_ORDER = 4
# anti-alias cutoff, as a fraction of the target Nyquist frequency
ANTIALIAS_CUTOFF = 0.9
VARIANCE_FLOOR = 1e-8


def filter_sections(rate_hz, band, notch_hz):
    """Second-order sections of the band-pass followed by the notch."""
    nyquist = rate_hz / 2.0
    low, high = band
    if not 0 < low < high < nyquist:
        raise ParameterError(
            "band {}-{} Hz must lie strictly within (0, {:g}) Hz".format(
                low, high, nyquist
            )
        )
    sections = [
        signal.butter(
            BANDPASS_ORDER, [low, high], btype='bandpass', fs=rate_hz,
            output='sos',
        )
    ]
    if notch_hz is not None:
        if not 0 < notch_hz < nyquist:
            raise ParameterError(
                "notch at {} Hz is not below Nyquist ({:g} Hz)".format(
                    notch_hz, nyquist
                )
            )
        b, a = signal.iirnotch(notch_hz, NOTCH_QUALITY, fs=rate_hz)
        sections.append(signal.tf2sos(b, a))
    return np.vstack(sections)


def resample_linear(samples, rate_hz, target_rate_hz):
    count = samples.shape[-1]
    target_count = int(round(count * target_rate_hz / rate_hz))
    if target_count < 1:
        raise ParameterError("resampling leaves no sample")
    if target_rate_hz < rate_hz:
        sos = signal.butter(
            ANTIALIAS_ORDER,
            ANTIALIAS_CUTOFF * target_rate_hz / 2.0,
            btype='lowpass',
            fs=rate_hz,
            output='sos',
        )
        samples = signal.sosfilt(sos, samples, axis=-1)
    source_times = np.arange(count) / rate_hz
    target_times = np.arange(target_count) / target_rate_hz
    return np.stack(
        [np.interp(target_times, source_times, ch) for ch in samples]
    )


def preprocess(seg, band=(0.5, 75.0), notch_hz=60.0, target_rate_hz=200.0):
    """
    Filter every channel with the band-pass and notch biquads (forward
    only), then bring it to `target_rate_hz`.
    """
    if not target_rate_hz > 0:
        raise ParameterError("target rate must be positive")
    sos = filter_sections(seg.sample_rate_hz, band, notch_hz)
    samples = signal.sosfilt(sos, seg.samples.astype(np.float64), axis=-1)
    if target_rate_hz != seg.sample_rate_hz:
        samples = resample_linear(
            samples, seg.sample_rate_hz, target_rate_hz
        )
    return EEGSegment(samples, float(target_rate_hz))


def standardize(samples):
    """Per-channel z-score; constant channels become zeros."""
    samples = np.asarray(samples, dtype=np.float64)
    mean = samples.mean(axis=-1, keepdims=True)
    var = samples.var(axis=-1, keepdims=True)
    out = (samples - mean) / np.sqrt(np.maximum(var, VARIANCE_FLOOR))
    out[np.ptp(samples, axis=-1) == 0] = 0.0
    return out


def window_standardize(seg, window_s, patch_len_t):
    """
    Cut `seg` into non-overlapping windows of `window_s` seconds, dropping
    the trailing partial window, and standardize each one.
    """
    window = int(round(window_s * seg.sample_rate_hz))
    if window < patch_len_t:
        raise ParameterError(
            "a window of {} samples is shorter than one patch ({})".format(
                window, patch_len_t
            )
        )
    return [
        EEGSegment(
            standardize(seg.samples[:, k * window : (k + 1) * window]),
            seg.sample_rate_hz,
        )
        for k in range(seg.sample_count // window)
    ]
