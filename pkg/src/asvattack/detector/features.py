"""Spectrogram residuals between an utterance and its resynthesis."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..audio import Waveform
from .resynth import resynthesize


@dataclass(frozen=True)
class FeatureConfig:
    frame: int = 400        # 25 ms at 16 kHz
    hop: int = 160          # 10 ms
    n_fft: int = 512
    method: str = "vocoder"
    n_bands: int = 16

    @property
    def n_bins(self) -> int:
        return self.n_fft // 2 + 1


@dataclass(frozen=True, eq=False)
class ResidualFeature:
    matrix: np.ndarray      # frames x bins, |STFT(x)| - |STFT(resynth(x))|
    frame: int
    hop: int
    utterance_id: str = ""

    @property
    def shape(self) -> tuple[int, int]:
        return self.matrix.shape


def magnitude_stft(samples: np.ndarray, cfg: FeatureConfig) -> np.ndarray:
    """|STFT| with a Hann window, no centre padding; shape (frames, bins)."""
    if samples.size < cfg.frame:
        samples = np.pad(samples, (0, cfg.frame - samples.size))
    frames = sliding_window_view(samples, cfg.frame)[::cfg.hop]
    return np.abs(np.fft.rfft(frames * np.hanning(cfg.frame), n=cfg.n_fft, axis=-1))


def residual_features(x: Waveform, cfg: FeatureConfig = FeatureConfig()) -> ResidualFeature:
    mag = magnitude_stft(x.samples, cfg)
    res = mag - magnitude_stft(resynthesize(x, cfg.method).samples, cfg)
    return ResidualFeature(res, cfg.frame, cfg.hop, x.id)


def band_edges(cfg: FeatureConfig) -> np.ndarray:
    return np.linspace(0, cfg.n_bins, cfg.n_bands + 1).astype(int)


def pooled_statistics(feat: ResidualFeature, cfg: FeatureConfig = FeatureConfig()) -> np.ndarray:
    """Fixed-length summary of a residual: per band, the log residual level
    relative to the utterance's overall residual level, and the spread of the
    band's log level over time."""
    edges = band_edges(cfg)
    eps = 1e-8
    res = np.abs(feat.matrix)
    total = np.log(res.mean() + eps)
    out = []
    for lo, hi in zip(edges[:-1], edges[1:]):
        r_t = res[:, lo:hi].mean(1)
        out.append(np.log(r_t.mean() + eps) - total)
        out.append(np.std(np.log(r_t + eps)))
    return np.asarray(out)
