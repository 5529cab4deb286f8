"""Equal error rate and EER-based decision thresholds."""
from __future__ import annotations

import hashlib
import threading
from dataclasses import dataclass
from typing import Callable, Mapping, Sequence, Union

import numpy as np

from ..audio import Waveform
from ..errors import SingleClassError
from ..trials import GENUINE, IMPOSTOR, TrialPair
from .model import EmbedderModel, embed_batch


@dataclass(frozen=True)
class ScoredTrial:
    trial: TrialPair | None
    score: float
    label: str

    def __post_init__(self):
        if self.label not in (GENUINE, IMPOSTOR):
            raise ValueError(f"bad label {self.label!r}")
        if not -1.0 <= self.score <= 1.0:
            raise ValueError(f"score {self.score} outside [-1, 1]")


def eer_from_scores(genuine: Sequence[float], impostor: Sequence[float]) -> tuple[float, float]:
    """EER and threshold for the rule "accept iff score >= threshold".

    Operating points are taken at every unique score plus one point above the
    maximum (accept nothing). FRR - FAR is strictly increasing along them, and
    the EER is the linearly interpolated point where it crosses zero.
    """
    gen = np.sort(np.asarray(genuine, dtype=np.float64))
    imp = np.sort(np.asarray(impostor, dtype=np.float64))
    if gen.size == 0 or imp.size == 0:
        raise SingleClassError("EER needs at least one genuine and one impostor score")
    thr = np.unique(np.concatenate([gen, imp]))
    frr = np.searchsorted(gen, thr, side="left") / gen.size
    far = (imp.size - np.searchsorted(imp, thr, side="left")) / imp.size
    thr = np.append(thr, np.nextafter(thr[-1], np.inf))
    frr = np.append(frr, 1.0)
    far = np.append(far, 0.0)
    d = frr - far
    k = int(np.argmax(d >= 0))
    if d[k] == 0:
        return float(far[k]), float(thr[k])
    t = -d[k - 1] / (d[k] - d[k - 1])
    eer = far[k - 1] + t * (far[k] - far[k - 1])
    return float(eer), float(thr[k - 1] + t * (thr[k] - thr[k - 1]))


def compute_eer(trials: Sequence[ScoredTrial]) -> tuple[float, float]:
    gen = [t.score for t in trials if t.label == GENUINE]
    imp = [t.score for t in trials if t.label == IMPOSTOR]
    return eer_from_scores(gen, imp)


AudioSource = Union[Mapping[str, Waveform], Callable[[str], Waveform]]


def _resolve(audio: AudioSource, key: str) -> Waveform:
    return audio(key) if callable(audio) else audio[key]


def score_trials(model: EmbedderModel, trials: Sequence[TrialPair], audio: AudioSource) -> list[ScoredTrial]:
    ids = sorted({t.enroll for t in trials} | {t.test for t in trials})
    emb = embed_batch(model, [_resolve(audio, i) for i in ids])
    row = {i: k for k, i in enumerate(ids)}
    out = []
    for t in trials:
        s = float(np.clip(emb[row[t.enroll]] @ emb[row[t.test]], -1.0, 1.0))
        out.append(ScoredTrial(t, s, t.label))
    return out


_threshold_cache: dict[tuple[str, str], float] = {}
_cache_lock = threading.Lock()


def decision_threshold(model: EmbedderModel, clean_trials: Sequence[TrialPair], audio: AudioSource) -> float:
    """EER threshold of ``model`` on clean trials, cached per (model, trial set)."""
    digest = hashlib.sha256("\n".join(t.to_line() for t in clean_trials).encode()).hexdigest()
    key = (model.fingerprint, digest)
    with _cache_lock:
        if key in _threshold_cache:
            return _threshold_cache[key]
    _, thr = compute_eer(score_trials(model, clean_trials, audio))
    with _cache_lock:
        _threshold_cache[key] = thr
    return thr


def clear_threshold_cache() -> None:
    with _cache_lock:
        _threshold_cache.clear()
