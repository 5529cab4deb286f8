"""Analysis-resynthesis proxies used by the residual countermeasure.

``vocoder``: frame-wise LPC envelope plus a pitch-pulse or noise excitation,
overlap-added. ``codec``: low-pass band limit and a mu-law companding round
trip. An external tool can be plugged in with :func:`register_resynthesizer`.
"""
from __future__ import annotations

from typing import Callable

import numpy as np
from scipy.linalg import solve_toeplitz
from scipy.signal import butter, lfilter, sosfiltfilt

from ..audio import Waveform
from ..errors import SilenceAnalysisError

FRAME = 400
HOP = 160
LPC_ORDER = 16
F0_RANGE = (60.0, 400.0)
VOICING_THRESHOLD = 0.35

Resynthesizer = Callable[[Waveform], np.ndarray]
_external: dict[str, Resynthesizer] = {}


def register_resynthesizer(name: str, fn: Resynthesizer) -> None:
    """Add an analysis-resynthesis backend; ``fn`` maps a Waveform to same-length samples."""
    _external[name] = fn


def lpc(frame: np.ndarray, order: int = LPC_ORDER) -> tuple[np.ndarray, float]:
    """Autocorrelation-method LPC. Returns ``(a, err)`` with ``a[0] == 1``."""
    r = np.correlate(frame, frame, "full")[frame.size - 1:frame.size + order]
    r[0] *= 1.0 + 1e-9
    r = r * np.exp(-0.5 * (2 * np.pi * 40.0 * np.arange(order + 1) / 16000) ** 2)  # lag window
    coef = solve_toeplitz(r[:order], -r[1:order + 1])
    a = np.concatenate([[1.0], coef])
    return a, float(max(r[0] + np.dot(coef, r[1:order + 1]), 0.0))


def pitch(frame: np.ndarray, sample_rate: int) -> float:
    """Autocorrelation pitch in Hz, or 0.0 for unvoiced frames."""
    lo = int(sample_rate / F0_RANGE[1])
    hi = min(int(sample_rate / F0_RANGE[0]), frame.size - 1)
    f = frame - frame.mean()
    # unbiased estimate, so the taper of a finite frame does not pull the peak to short lags
    r = np.correlate(f, f, "full")[f.size - 1:] / (f.size - np.arange(f.size))
    if r[0] <= 0:
        return 0.0
    lag = lo + int(np.argmax(r[lo:hi]))
    if r[lag] / r[0] <= VOICING_THRESHOLD:
        return 0.0
    # parabolic refinement of the peak position
    a, b, c = r[lag - 1], r[lag], r[lag + 1]
    den = a - 2 * b + c
    shift = 0.5 * (a - c) / den if den < 0 else 0.0
    return sample_rate / (lag + shift)


def vocoder_resynthesis(x: Waveform, seed: int = 0) -> np.ndarray:
    s = x.samples
    n = s.size
    sr = x.sample_rate
    win = np.hanning(FRAME + 2)[1:-1]
    rng = np.random.default_rng(seed)
    out = np.zeros(n + FRAME)
    norm = np.zeros(n + FRAME)
    padded = np.concatenate([s, np.zeros(FRAME)])
    phase = 0.0
    for start in range(0, n, HOP):
        frame = padded[start:start + FRAME] * win
        energy = float(np.sum(frame ** 2))
        norm[start:start + FRAME] += win ** 2
        if energy <= 1e-12:
            continue
        a, _ = lpc(frame)
        f0 = pitch(padded[start:start + FRAME], sr)
        if f0 > 0:
            period = sr / f0
            # a pulse wherever the running phase wraps, so consecutive frames line up
            exc = (np.diff(np.floor((phase + np.arange(-1, FRAME)) / period)) > 0).astype(float)
            phase = (phase + HOP) % period
        else:
            exc = rng.standard_normal(FRAME)
        y = lfilter([1.0], a, exc) * win
        e_y = float(np.sum(y ** 2))
        if e_y > 0:
            y *= np.sqrt(energy / e_y)
        out[start:start + FRAME] += y * win
    nz = norm > 1e-8
    out[nz] /= norm[nz]
    return out[:n]


def codec_resynthesis(x: Waveform, bits: int = 8, cutoff: float = 7800.0, mu: float = 255.0) -> np.ndarray:
    sos = butter(6, cutoff, "low", fs=x.sample_rate, output="sos")
    y = sosfiltfilt(sos, x.samples)
    peak = max(np.max(np.abs(y)), 1e-12)
    c = np.sign(y) * np.log1p(mu * np.abs(y / peak)) / np.log1p(mu)
    levels = 2 ** (bits - 1)
    c = np.round(c * levels) / levels
    return np.sign(c) * np.expm1(np.abs(c) * np.log1p(mu)) / mu * peak


def resynthesize(x: Waveform, method: str = "vocoder", **kwargs) -> Waveform:
    """Analysis-synthesis round trip; same length and rate as ``x``."""
    if not np.any(x.samples):
        raise SilenceAnalysisError("analysis failure on silence: input is all zeros")
    if method == "vocoder":
        y = vocoder_resynthesis(x, **kwargs)
    elif method == "codec":
        y = codec_resynthesis(x, **kwargs)
    elif method in _external:
        y = np.asarray(_external[method](x), dtype=np.float64)
        if y.shape != x.samples.shape:
            raise ValueError(f"resynthesizer {method!r} changed the length: {y.shape} vs {x.samples.shape}")
    else:
        raise ValueError(f"unknown resynthesis method {method!r}")
    return x.with_samples(np.clip(y, -1.0, 1.0))
