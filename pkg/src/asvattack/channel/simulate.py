"""Simulated over-the-air replay: loudspeaker -> room -> microphone -> noise."""
from __future__ import annotations

import numpy as np
from scipy.fft import irfft, next_fast_len, rfft, rfftfreq
from scipy.signal import fftconvolve

from ..audio import Waveform
from .presets import LOUDSPEAKER, MICROPHONE, DevicePreset
from .rir import RoomSetup

BUTTER_ORDER = 4


def magnitude_response(preset: DevicePreset, freqs: np.ndarray) -> np.ndarray:
    """|H(f)| of the preset: EQ curve times Butterworth high/low-pass magnitudes."""
    g = np.ones_like(freqs)
    pts = preset.frequency_response
    if pts:
        f_pts = np.log([f for f, _ in pts])
        db = np.interp(np.log(np.maximum(freqs, 1e-3)), f_pts, [d for _, d in pts])
        g = g * 10 ** (db / 20)
    lo, hi = preset.band_limit
    with np.errstate(divide="ignore"):
        if lo is not None:
            g = g / np.sqrt(1 + (lo / np.maximum(freqs, 1e-9)) ** (2 * BUTTER_ORDER))
        if hi is not None:
            g = g / np.sqrt(1 + (freqs / hi) ** (2 * BUTTER_ORDER))
    return g


def apply_filter(samples: np.ndarray, preset: DevicePreset, sample_rate: int) -> np.ndarray:
    """Zero-phase filtering by the preset's magnitude response (FFT, zero padded)."""
    if not preset.frequency_response and preset.band_limit == (None, None):
        return np.array(samples, dtype=np.float64)
    n = samples.size
    nfft = next_fast_len(2 * n)
    h = magnitude_response(preset, rfftfreq(nfft, 1.0 / sample_rate))
    return irfft(rfft(samples, nfft) * h, nfft)[:n]


def soft_clip(samples: np.ndarray, drive: float) -> np.ndarray:
    """tanh(drive * x) / drive, unity gain for small signals; identity at drive 0."""
    if drive == 0:
        return samples
    return np.tanh(drive * samples) / drive


def apply_device(samples: np.ndarray, preset: DevicePreset, sample_rate: int = 16000) -> np.ndarray:
    return soft_clip(apply_filter(samples, preset, sample_rate), preset.nonlinearity)


def apply_channel(x: Waveform, speaker: DevicePreset, room: RoomSetup, mic: DevicePreset,
                  seed: int = 0) -> Waveform:
    """Replay ``x`` through the simulated chain; same length, peak matched to ``x``.

    The convolution tail beyond the input length is dropped. Microphone noise
    is white Gaussian at ``mic.noise_floor`` dBFS RMS, drawn from ``seed``.
    """
    speaker.require(LOUDSPEAKER)
    mic.require(MICROPHONE)
    sr = x.sample_rate
    y = apply_device(x.samples, speaker, sr)
    h = room.impulse_response
    if h.size == 1:
        y = y * h[0]
    else:
        y = fftconvolve(y, h)[:len(x)]
    y = apply_device(y, mic, sr)
    if mic.noise_floor is not None:
        rng = np.random.default_rng(seed)
        y = y + 10 ** (mic.noise_floor / 20) * rng.standard_normal(y.size)
    peak = np.max(np.abs(y))
    if peak > 0:
        y = y * (x.peak / peak)
    return x.with_samples(np.clip(y, -1.0, 1.0))
