"""One-class residual countermeasure and its evaluation."""
from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from ..asv.metrics import ScoredTrial, compute_eer
from ..audio import Waveform
from ..errors import DegenerateFeatureError, InsufficientDataError
from ..trials import GENUINE, IMPOSTOR
from .features import FeatureConfig, pooled_statistics, residual_features
from .resynth import resynthesize

BONAFIDE_DIGITAL = "bonafide-digital"
BONAFIDE_OTA = "bonafide-ota"
MIN_TRAIN = 50
BONAFIDE = "bonafide"
SPOOF = "spoof"


@dataclass(frozen=True)
class DetectorConfig:
    features: FeatureConfig = field(default_factory=FeatureConfig)
    shrinkage: float = 0.1
    codec_augment: bool = True
    codec_bits: int = 6
    workers: int = 1


def extract(waves: Sequence[Waveform], cfg: FeatureConfig, workers: int = 1) -> np.ndarray:
    """Pooled residual statistics for each waveform, shape (n, dim)."""
    fn = lambda w: pooled_statistics(residual_features(w, cfg), cfg)
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            rows = list(pool.map(fn, waves))
    else:
        rows = [fn(w) for w in waves]
    return np.stack(rows)


@dataclass(frozen=True, eq=False)
class DetectorModel:
    """Whitening embedding fitted on bonafide statistics; the score is the
    squared distance d to the bonafide centre in that space, mapped to
    ``-d / (1 + d)`` so higher means more bonafide and scores stay in (-1, 0]."""

    mean: np.ndarray
    scale: np.ndarray
    projection: np.ndarray
    condition: str
    config: DetectorConfig
    n_train: int

    def embed(self, stats: np.ndarray) -> np.ndarray:
        return ((np.atleast_2d(stats) - self.mean) / self.scale) @ self.projection.T

    def score_stats(self, stats: np.ndarray) -> np.ndarray:
        d = np.mean(self.embed(stats) ** 2, axis=1)
        return -d / (1.0 + d)

    def score(self, waves: Sequence[Waveform]) -> np.ndarray:
        return self.score_stats(extract(waves, self.config.features, self.config.workers))

    def to_dict(self) -> dict:
        return {
            "mean": self.mean.tolist(), "scale": self.scale.tolist(),
            "projection": self.projection.tolist(), "condition": self.condition,
            "config": asdict(self.config), "n_train": self.n_train,
        }

    def save(self, path: str | Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(self.to_dict(), sort_keys=True))
        return path

    @classmethod
    def load(cls, path: str | Path) -> "DetectorModel":
        d = json.loads(Path(path).read_text())
        c = d["config"]
        cfg = DetectorConfig(**{**c, "features": FeatureConfig(**c["features"])})
        return cls(np.array(d["mean"]), np.array(d["scale"]), np.array(d["projection"]),
                   d["condition"], cfg, d["n_train"])


def fit_one_class(stats: np.ndarray, shrinkage: float = 0.1) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Centre, per-dimension scale and whitening projection for ``stats``."""
    mean = stats.mean(0)
    scale = stats.std(0)
    if np.any(scale < 1e-12):
        raise DegenerateFeatureError(f"degenerate features: {int(np.sum(scale < 1e-12))} dimensions have zero variance")
    z = (stats - mean) / scale
    cov = (1 - shrinkage) * np.cov(z, rowvar=False) + shrinkage * np.eye(z.shape[1])
    vals, vecs = np.linalg.eigh(cov)
    return mean, scale, np.ascontiguousarray((vecs / np.sqrt(vals)).T)


def train_detector(bonafide: Sequence[Waveform], cfg: DetectorConfig = DetectorConfig(),
                   condition: str = BONAFIDE_DIGITAL) -> DetectorModel:
    """Fit the one-class scorer on bonafide audio only.

    With ``codec_augment`` every training utterance also enters through the
    codec proxy, so the bonafide class covers mild coding noise.
    """
    if len(bonafide) < MIN_TRAIN:
        raise InsufficientDataError(f"need at least {MIN_TRAIN} bonafide utterances, got {len(bonafide)}")
    if condition not in (BONAFIDE_DIGITAL, BONAFIDE_OTA):
        raise ValueError(f"unknown training condition {condition!r}")
    waves = list(bonafide)
    if cfg.codec_augment:
        waves += [resynthesize(w, "codec", bits=cfg.codec_bits) for w in bonafide]
    stats = extract(waves, cfg.features, cfg.workers)
    mean, scale, proj = fit_one_class(stats, cfg.shrinkage)
    return DetectorModel(mean, scale, proj, condition, cfg, len(waves))


def _scored(scores, label) -> list[ScoredTrial]:
    return [ScoredTrial(None, float(s), label) for s in scores]


def detection_eer(bonafide_scores, spoof_scores) -> float:
    """EER (fraction) with bonafide as the positive class."""
    eer, _ = compute_eer(_scored(bonafide_scores, GENUINE) + _scored(spoof_scores, IMPOSTOR))
    return eer


def eval_detection(detector: DetectorModel, bonafide_test: Sequence[Waveform],
                   spoof_test: Mapping[str, Sequence[Waveform]]) -> dict:
    """Per-cell EER of bonafide vs each spoof cell, plus the pooled overall EER."""
    if not bonafide_test or not any(spoof_test.values()):
        raise InsufficientDataError("detection evaluation needs bonafide and spoof samples")
    bona = detector.score(bonafide_test)
    cells, pooled = {}, []
    for key, waves in spoof_test.items():
        if not waves:
            continue
        s = detector.score(waves)
        cells[key] = detection_eer(bona, s)
        pooled.append(s)
    return {"cells": cells, "overall": detection_eer(bona, np.concatenate(pooled))}


def write_score_file(path: str | Path, ids: Sequence[str], scores: Sequence[float], labels: Sequence[str]) -> Path:
    """One ``<utterance id> <score> <bonafide|spoof>`` line per utterance."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = []
    for i, s, lab in zip(ids, scores, labels):
        if lab not in (BONAFIDE, SPOOF):
            raise ValueError(f"label must be {BONAFIDE!r} or {SPOOF!r}, got {lab!r}")
        lines.append(f"{i} {float(s)!r} {lab}\n")
    path.write_text("".join(lines))
    return path


def read_score_file(path: str | Path) -> list[ScoredTrial]:
    out = []
    for line in Path(path).read_text().splitlines():
        if not line.strip():
            continue
        _, s, lab = line.split()
        out.append(ScoredTrial(None, float(s), GENUINE if lab == BONAFIDE else IMPOSTOR))
    return out
