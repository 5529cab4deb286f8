"""Deterministic training of the toy embedders (additive-margin softmax)."""
from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field

import numpy as np
import torch
import torch.nn.functional as F

from ..audio import Waveform
from ..errors import CorpusTooSmallError, TrainingDivergenceError
from .architectures import build_network
from .model import EmbedderModel

log = logging.getLogger(__name__)

MIN_SPEAKERS = 2
MIN_UTTERANCES = 5


@dataclass(frozen=True)
class TrainConfig:
    arch: str = "xvec"
    embedding_dim: int = 32
    epochs: int = 30
    batch_size: int = 32
    lr: float = 3e-3
    weight_decay: float = 1e-4
    margin: float = 0.2
    scale: float = 20.0
    crop_seconds: float = 0.8
    noise_prob: float = 0.0
    noise_snr_db: tuple[float, float] = (0.0, 20.0)
    seed: int = 0
    model_id: str | None = None
    net_kwargs: dict = field(default_factory=dict)


def _check_corpus(corpus) -> list[str]:
    counts: dict[str, int] = {}
    for _, spk in corpus:
        counts[spk] = counts.get(spk, 0) + 1
    if len(counts) < MIN_SPEAKERS:
        raise CorpusTooSmallError(f"corpus too small: need >= {MIN_SPEAKERS} speakers, got {len(counts)}")
    thin = sorted(s for s, c in counts.items() if c < MIN_UTTERANCES)
    if thin:
        raise CorpusTooSmallError(
            f"corpus too small: speakers {thin} have fewer than {MIN_UTTERANCES} utterances")
    return sorted(counts)


def _add_noise(batch: np.ndarray, rng: np.random.Generator, prob: float, snr_db) -> np.ndarray:
    """White noise at a random SNR on a random subset of the batch."""
    hit = rng.random(len(batch)) < prob
    snr = rng.uniform(*snr_db, size=len(batch))
    noise = rng.standard_normal(batch.shape)
    power = np.mean(batch ** 2, axis=1, keepdims=True)
    scale = np.sqrt(power / 10 ** (snr[:, None] / 10))
    return np.where(hit[:, None], batch + scale * noise, batch)


def train_toy_embedder(corpus: list[tuple[Waveform, str]], config: TrainConfig = TrainConfig()) -> EmbedderModel:
    """Fit a toy embedder on ``(waveform, speaker_id)`` pairs.

    Runs on fixed-length random crops. Everything random is drawn from
    ``config.seed``, so two runs give byte-identical parameters.
    """
    speakers = _check_corpus(corpus)
    label_of = {s: i for i, s in enumerate(speakers)}
    sr = corpus[0][0].sample_rate
    crop = int(round(config.crop_seconds * sr))
    shortest = min(len(w) for w, _ in corpus)
    crop = min(crop, shortest)
    labels = torch.tensor([label_of[s] for _, s in corpus])
    waves = [w.samples for w, _ in corpus]

    rng = np.random.default_rng(config.seed)
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(config.seed)
        net = build_network(config.arch, config.embedding_dim, **config.net_kwargs)
        classes = torch.nn.Parameter(torch.randn(len(speakers), config.embedding_dim, dtype=torch.float64))
    opt = torch.optim.Adam(list(net.parameters()) + [classes], lr=config.lr,
                           weight_decay=config.weight_decay)
    n = len(corpus)
    steps_per_epoch = -(-n // config.batch_size)
    sched = torch.optim.lr_scheduler.CosineAnnealingLR(opt, T_max=config.epochs * steps_per_epoch)
    net.train()
    for epoch in range(config.epochs):
        order = rng.permutation(n)
        total = 0.0
        for s in range(0, n, config.batch_size):
            idx = order[s:s + config.batch_size]
            starts = [int(rng.integers(0, len(waves[i]) - crop + 1)) for i in idx]
            batch = np.stack([waves[i][st:st + crop] for i, st in zip(idx, starts)])
            if config.noise_prob > 0:
                batch = _add_noise(batch, rng, config.noise_prob, config.noise_snr_db)
            x = torch.from_numpy(batch)
            emb = F.normalize(net(x), dim=-1)
            cos = emb @ F.normalize(classes, dim=-1).T
            y = labels[idx]
            logits = config.scale * (cos - config.margin * F.one_hot(y, len(speakers)))
            loss = F.cross_entropy(logits, y)
            if not torch.isfinite(loss):
                raise TrainingDivergenceError(f"training diverged at epoch {epoch}: loss is {loss.item()}")
            opt.zero_grad()
            loss.backward()
            opt.step()
            sched.step()
            total += loss.item() * len(idx)
        log.debug("%s epoch %d loss %.4f", config.arch, epoch, total / n)

    meta = {
        "arch": config.arch,
        "training_seed": config.seed,
        "net_kwargs": dict(config.net_kwargs),
        "train_config": {k: v for k, v in asdict(config).items() if k != "net_kwargs"},
        "speakers": len(speakers),
    }
    model_id = config.model_id or f"{config.arch}-s{config.seed}"
    return EmbedderModel(net, model_id, sr, meta)
