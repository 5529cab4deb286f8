"""The shipped toy setup: synthetic corpora, trial list, pretrained embedders.

Everything under ``asvattack/data`` can be regenerated with
``asvattack toy-build``; ``asvattack toy-init DIR`` copies it into a fresh
working directory with a ready-to-run campaign config.
"""
from __future__ import annotations

import shutil
from importlib import resources
from pathlib import Path

import numpy as np

from .asv.model import save_model
from .asv.training import TrainConfig, train_toy_embedder
from .synth import CorpusConfig, make_corpus, speaker_ids
from .trials import GENUINE, IMPOSTOR, TrialPair, write_trial_list

ARCHS = ("xvec", "ecapa", "resnet", "rawnet")

# embedders never see the evaluation speakers (offset 100) during training
TRAIN_CORPUS = CorpusConfig(n_speakers=80, utterances_per_speaker=12, seed=1)
TRAIN_OFFSET = 0
EVAL_CORPUS = CorpusConfig(n_speakers=8, utterances_per_speaker=10, seed=1)
EVAL_OFFSET = 100

TRIALS_PER_SPEAKER = 150
GENUINE_FRACTION = 0.2


def data_dir() -> Path:
    return Path(str(resources.files("asvattack") / "data"))


def toy_trials(n_speakers: int = EVAL_CORPUS.n_speakers, utterances: int = EVAL_CORPUS.utterances_per_speaker,
               per_speaker: int = TRIALS_PER_SPEAKER, genuine_fraction: float = GENUINE_FRACTION,
               offset: int = EVAL_OFFSET, prefix: str = "spk", seed: int = 0) -> list[TrialPair]:
    """Distinct (enroll, test) pairs, ``per_speaker`` per enrollment speaker."""
    rng = np.random.default_rng(seed)
    spk = speaker_ids(n_speakers, prefix, offset)
    utts = {s: [f"{s}/{u:05d}.wav" for u in range(utterances)] for s in spk}
    n_gen = int(round(per_speaker * genuine_fraction))
    out = []
    for s in spk:
        gen = [(a, b) for a in utts[s] for b in utts[s] if a != b]
        imp = [(a, b) for a in utts[s] for o in spk if o != s for b in utts[o]]
        if n_gen > len(gen) or per_speaker - n_gen > len(imp):
            raise ValueError("not enough distinct pairs for the requested trial count")
        pairs = [(GENUINE, gen[i]) for i in rng.choice(len(gen), n_gen, replace=False)]
        pairs += [(IMPOSTOR, imp[i]) for i in rng.choice(len(imp), per_speaker - n_gen, replace=False)]
        for k in rng.permutation(len(pairs)):
            label, (a, b) = pairs[k]
            out.append(TrialPair(label, a, b, s, b.split("/")[0]))
    return out


def train_toy_models(out_dir: str | Path, archs=ARCHS, epochs: int = 30, seed: int = 0,
                     noise_prob: float = 0.5, log=print) -> list[Path]:
    """Train the toy embedders (float64, deterministic) and write ``<arch>.asvm``."""
    corpus = make_corpus(TRAIN_CORPUS, offset=TRAIN_OFFSET)
    out_dir = Path(out_dir)
    paths = []
    for arch in archs:
        log(f"training {arch} on {TRAIN_CORPUS.n_speakers} speakers")
        model = train_toy_embedder(corpus, TrainConfig(arch=arch, epochs=epochs, seed=seed, noise_prob=noise_prob))
        paths.append(save_model(model, out_dir / f"{arch}.asvm"))
    return paths


def build_toy_data(dest: str | Path | None = None, train: bool = True, log=print) -> Path:
    dest = Path(dest) if dest else data_dir()
    write_trial_list(dest / "toy_trials.txt", toy_trials())
    if train:
        train_toy_models(dest / "models", log=log)
    return dest


def init_workspace(dest: str | Path) -> Path:
    """Copy the toy config, trial list and models into ``dest``; return the config path."""
    src = data_dir()
    dest = Path(dest)
    dest.mkdir(parents=True, exist_ok=True)
    shutil.copy2(src / "toy_campaign.yaml", dest / "campaign.yaml")
    shutil.copy2(src / "toy_trials.txt", dest / "toy_trials.txt")
    shutil.copytree(src / "models", dest / "models", dirs_exist_ok=True)
    return dest / "campaign.yaml"
