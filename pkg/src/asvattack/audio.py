"""Waveform container and 16-bit PCM WAV input/output."""
from __future__ import annotations

import wave
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path

import numpy as np
from scipy.signal import resample_poly

from .errors import InvalidWaveformError, ResourceMissingError, SampleRateMismatchError

DEFAULT_SAMPLE_RATE = 16000
PCM16_SCALE = 32768.0


@dataclass(frozen=True, eq=False)
class Waveform:
    """Mono audio with samples in [-1, 1].

    The sample array is copied to float64 and made read-only, so a Waveform
    can be shared freely between workers.
    """

    samples: np.ndarray
    sample_rate: int = DEFAULT_SAMPLE_RATE
    id: str = ""

    def __post_init__(self):
        arr = np.array(self.samples, dtype=np.float64, copy=True)
        if arr.ndim != 1:
            raise InvalidWaveformError(f"waveform must be 1-D, got shape {arr.shape}")
        if arr.size == 0:
            raise InvalidWaveformError("waveform is empty")
        if self.sample_rate <= 0:
            raise InvalidWaveformError(f"sample_rate must be positive, got {self.sample_rate}")
        if not np.all(np.isfinite(arr)):
            raise InvalidWaveformError("waveform contains non-finite samples")
        if np.max(np.abs(arr)) > 1.0:
            raise InvalidWaveformError("waveform samples must lie in [-1, 1]")
        arr.setflags(write=False)
        object.__setattr__(self, "samples", arr)

    def __len__(self) -> int:
        return self.samples.size

    @property
    def duration(self) -> float:
        return self.samples.size / self.sample_rate

    @property
    def peak(self) -> float:
        return float(np.max(np.abs(self.samples)))

    def with_samples(self, samples: np.ndarray, id: str | None = None) -> "Waveform":
        return Waveform(samples, self.sample_rate, self.id if id is None else id)


def quantize_pcm16(samples: np.ndarray) -> np.ndarray:
    """Round samples onto the 16-bit PCM grid (k / 32768, k in [-32768, 32767])."""
    q = np.clip(np.round(np.asarray(samples, dtype=np.float64) * PCM16_SCALE), -32768, 32767)
    return q / PCM16_SCALE


def quantize_toward(samples: np.ndarray, reference: np.ndarray) -> np.ndarray:
    """Quantize to the PCM16 grid, rounding each sample towards ``reference``.

    ``reference`` must already lie on the grid; the result never moves further
    from it than ``samples`` did, so an L-inf budget survives WAV storage.
    """
    ref_q = np.round(np.asarray(reference, dtype=np.float64) * PCM16_SCALE)
    delta = np.asarray(samples, dtype=np.float64) * PCM16_SCALE - ref_q
    q = np.clip(ref_q + np.trunc(delta), -32768, 32767)
    return q / PCM16_SCALE


def write_wav(path: str | Path, wav: Waveform) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    pcm = np.clip(np.round(wav.samples * PCM16_SCALE), -32768, 32767).astype("<i2")
    with wave.open(str(path), "wb") as fh:
        fh.setnchannels(1)
        fh.setsampwidth(2)
        fh.setframerate(wav.sample_rate)
        fh.writeframes(pcm.tobytes())
    return path


def read_wav(
    path: str | Path,
    expected_rate: int = DEFAULT_SAMPLE_RATE,
    resample: bool = False,
    id: str | None = None,
) -> Waveform:
    """Load a mono 16-bit PCM WAV file.

    Files at a rate other than ``expected_rate`` are rejected unless
    ``resample`` is set, in which case a polyphase resampler is applied.
    """
    path = Path(path)
    if not path.exists():
        raise ResourceMissingError(f"audio file not found: {path}")
    with wave.open(str(path), "rb") as fh:
        if fh.getnchannels() != 1:
            raise InvalidWaveformError(f"{path}: expected mono audio, got {fh.getnchannels()} channels")
        if fh.getsampwidth() != 2:
            raise InvalidWaveformError(f"{path}: expected 16-bit PCM")
        rate = fh.getframerate()
        raw = fh.readframes(fh.getnframes())
    samples = np.frombuffer(raw, dtype="<i2").astype(np.float64) / PCM16_SCALE
    if rate != expected_rate:
        if not resample:
            raise SampleRateMismatchError(f"{path}: sample rate {rate} != expected {expected_rate}")
        ratio = Fraction(expected_rate, rate)
        samples = np.clip(resample_poly(samples, ratio.numerator, ratio.denominator), -1.0, 1.0)
        rate = expected_rate
    return Waveform(samples, rate, path.stem if id is None else id)
