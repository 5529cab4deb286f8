"""Synthetic source-filter "speakers" for desk-scale experiments.

Each speaker is a small set of vocal parameters (pitch, vocal-tract length,
spectral tilt, breathiness, a speaker-specific resonance). Utterances are
random vowel/fricative sequences rendered through a time-varying formant
cascade, then mixed with background noise at a random SNR so that the clean
corpus already spans a range of recording conditions.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np
from scipy.signal import lfilter

from .audio import DEFAULT_SAMPLE_RATE, Waveform, quantize_pcm16

# (F1, F2, F3) averages for adult speakers, Hz
VOWELS = np.array(
    [
        [270, 2290, 3010],
        [390, 1990, 2550],
        [530, 1840, 2480],
        [660, 1720, 2410],
        [730, 1090, 2440],
        [570, 840, 2410],
        [300, 870, 2240],
        [490, 1350, 1690],
    ],
    dtype=float,
)
BLOCK = 80  # samples per coefficient update (5 ms at 16 kHz)


@dataclass(frozen=True)
class SpeakerProfile:
    speaker_id: str
    f0: float
    tract_scale: float
    tilt: float
    breathiness: float
    extra_formant: float
    bandwidth_scale: float
    vibrato: float


@dataclass(frozen=True)
class CorpusConfig:
    n_speakers: int = 4
    utterances_per_speaker: int = 10
    duration: float = 1.0
    sample_rate: int = DEFAULT_SAMPLE_RATE
    snr_db: tuple[float, float] = (12.0, 40.0)
    seed: int = 0
    prefix: str = "spk"


def _rng(*keys) -> np.random.Generator:
    digest = hashlib.sha256(repr(keys).encode()).digest()
    return np.random.default_rng(int.from_bytes(digest[:8], "little"))


def sample_speaker(speaker_id: str, seed: int) -> SpeakerProfile:
    rng = _rng("speaker", speaker_id, seed)
    return SpeakerProfile(
        speaker_id=speaker_id,
        f0=float(np.exp(rng.uniform(np.log(85.0), np.log(260.0)))),
        tract_scale=float(rng.uniform(0.82, 1.25)),
        tilt=float(rng.uniform(0.55, 0.95)),
        breathiness=float(rng.uniform(0.02, 0.3)),
        extra_formant=float(rng.uniform(1200.0, 4500.0)),
        bandwidth_scale=float(rng.uniform(0.7, 1.5)),
        vibrato=float(rng.uniform(0.0, 0.05)),
    )


def _resonator(freq: float, bw: float, sr: int) -> tuple[np.ndarray, np.ndarray]:
    r = np.exp(-np.pi * bw / sr)
    theta = 2 * np.pi * freq / sr
    a = np.array([1.0, -2 * r * np.cos(theta), r * r])
    b = np.array([a.sum()])  # unity gain at DC
    return b, a


def _peak_gain(a: np.ndarray) -> float:
    """Gain that maps a resonator's peak response to unity."""
    r = np.sqrt(a[2])
    cos_t = -a[1] / (2 * r)
    return float((1 - r) * np.sqrt(1 - 2 * r * (2 * cos_t**2 - 1) + r * r))


def _segments(rng: np.random.Generator, n_blocks: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-block formant targets, voicing flags and amplitude envelope."""
    formants = np.empty((n_blocks, 3))
    voiced = np.ones(n_blocks, dtype=bool)
    amp = np.empty(n_blocks)
    pos = 0
    prev = VOWELS[rng.integers(len(VOWELS))]
    while pos < n_blocks:
        length = int(rng.integers(12, 36))
        end = min(pos + length, n_blocks)
        n = end - pos
        target = VOWELS[rng.integers(len(VOWELS))] * rng.uniform(0.95, 1.05, size=3)
        ramp = np.clip(np.linspace(0.0, 2.0, n), 0.0, 1.0)[:, None]
        formants[pos:end] = prev + (target - prev) * ramp
        is_fric = rng.random() < 0.2
        voiced[pos:end] = not is_fric
        env = np.sin(np.linspace(0.15, np.pi - 0.15, n)) ** 0.5
        amp[pos:end] = env * (0.35 if is_fric else rng.uniform(0.6, 1.0))
        prev = target
        pos = end
    return formants, voiced, amp


def synthesize_utterance(
    profile: SpeakerProfile,
    utt_index: int,
    duration: float = 1.0,
    sample_rate: int = DEFAULT_SAMPLE_RATE,
    snr_db: tuple[float, float] = (12.0, 40.0),
    seed: int = 0,
) -> np.ndarray:
    rng = _rng("utt", profile.speaker_id, utt_index, seed)
    n = int(round(duration * sample_rate))
    n_blocks = -(-n // BLOCK)
    total = n_blocks * BLOCK
    t = np.arange(total) / sample_rate

    session_f0 = profile.f0 * rng.uniform(0.93, 1.07)
    contour = 1.0 - 0.12 * (t / t[-1]) + profile.vibrato * np.sin(2 * np.pi * rng.uniform(3, 6) * t)
    walk = np.cumsum(rng.normal(0, 1, n_blocks)) * 0.01
    f0 = session_f0 * contour * np.exp(np.repeat(walk - walk.mean(), BLOCK))
    phase = np.cumsum(f0 / sample_rate) % 1.0
    # Rosenberg-style glottal flow, open quotient 0.6
    flow = np.where(phase < 0.6, np.sin(np.pi * phase / 0.6) ** 2, 0.0)
    source = np.diff(flow, prepend=0.0)
    source = lfilter([1.0 - profile.tilt], [1.0, -profile.tilt], source)
    source = source / (np.std(source) + 1e-12)

    formants, voiced, amp = _segments(rng, n_blocks)
    voiced_s = np.repeat(voiced, BLOCK).astype(float)
    # soften voicing on/offsets over one block
    voiced_s = np.convolve(voiced_s, np.ones(BLOCK) / BLOCK, mode="same")
    excitation = voiced_s * (source + profile.breathiness * rng.normal(0, 1, total))

    scale = profile.tract_scale * rng.uniform(0.98, 1.02)
    tracks = [formants[:, 0] * scale, formants[:, 1] * scale, formants[:, 2] * scale]
    tracks.append(np.full(n_blocks, 3500.0 * scale))
    widths = [60.0, 90.0, 120.0, 180.0]
    out = excitation
    nyq = sample_rate / 2
    for freqs, bw in zip(tracks, widths):
        zi = np.zeros(2)
        y = np.empty(total)
        for k in range(n_blocks):
            sl = slice(k * BLOCK, (k + 1) * BLOCK)
            b, a = _resonator(min(freqs[k], nyq * 0.9), bw * profile.bandwidth_scale, sample_rate)
            y[sl], zi = lfilter(b, a, out[sl], zi=zi)
        out = y
    b, a = _resonator(profile.extra_formant, 150.0 * profile.bandwidth_scale, sample_rate)
    out = out + 0.5 * lfilter(b, a, out) / np.sum(a) * _peak_gain(a)
    out = np.diff(out, prepend=0.0)  # lip radiation
    # level each block so loudness follows the envelope rather than the vowel
    level = np.sqrt(np.mean(out.reshape(n_blocks, BLOCK) ** 2, axis=1))
    level = np.convolve(np.pad(level, 2, mode="edge"), np.ones(5) / 5, mode="valid")
    ref = np.median(level[voiced]) if np.any(voiced) else 1.0
    gain = np.interp(np.arange(total), np.arange(n_blocks) * BLOCK + BLOCK / 2, 1.0 / np.maximum(level, ref * 0.05))
    out = out * gain

    # frication: noise through a broad high resonance, scaled by tract length
    fb, fa = _resonator(min(4800.0 / scale, nyq * 0.85), 1500.0, sample_rate)
    fric = lfilter(fb, fa, rng.normal(0, 1, total)) / np.sum(fa) * _peak_gain(fa)
    fric = fric / (np.std(fric) + 1e-12)
    out = out + (1.0 - voiced_s) * fric * 0.4
    out = out * np.repeat(amp, BLOCK)
    out = out[:n]
    out = out / (np.sqrt(np.mean(out**2)) + 1e-12)

    snr = rng.uniform(*snr_db)
    colour = rng.uniform(0.0, 0.9)
    bg = lfilter([1.0], [1.0, -colour], rng.normal(0, 1, n))
    bg = bg / (np.sqrt(np.mean(bg**2)) + 1e-12) * 10 ** (-snr / 20)
    out = out + bg
    out = out / np.sqrt(np.mean(out**2)) * rng.uniform(0.08, 0.16)
    peak = np.max(np.abs(out))
    if peak > 0.95:
        out = out * (0.95 / peak)
    return quantize_pcm16(out)


def speaker_ids(n_speakers: int, prefix: str = "spk", offset: int = 0) -> list[str]:
    return [f"{prefix}{i + offset:03d}" for i in range(n_speakers)]


def make_corpus(cfg: CorpusConfig, offset: int = 0) -> list[tuple[Waveform, str]]:
    """Return ``(waveform, speaker_id)`` pairs, ``utterances_per_speaker`` per speaker.

    Utterance ids take the VoxCeleb-like form ``<speaker>/<utt>.wav``.
    """
    corpus = []
    for spk in speaker_ids(cfg.n_speakers, cfg.prefix, offset):
        prof = sample_speaker(spk, cfg.seed)
        for u in range(cfg.utterances_per_speaker):
            samples = synthesize_utterance(prof, u, cfg.duration, cfg.sample_rate, cfg.snr_db, cfg.seed)
            corpus.append((Waveform(samples, cfg.sample_rate, f"{spk}/{u:05d}.wav"), spk))
    return corpus
